fn main() {
    std::process::exit(msrvine::cli::run(std::env::args_os()));
}
