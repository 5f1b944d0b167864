//! Batch command-line driver.
//!
//! Every subcommand reads one TOML run configuration (`--config`), writes its
//! artifacts to the output directory and records a `manifest_<command>.json`
//! with input hashes, the configuration hash, the crate version and the wall
//! time. Exit codes: 0 success, 1 usage error, 2 fit or numeric failure.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::copulas::{AssetRole, CopulaFamily};
use crate::data::{load_levels, load_uniforms, rank_pit, write_returns, PseudoObservations};
use crate::dependence::empirical_kendall_tau;
use crate::error::Error;
use crate::msrv::{
    default_init, em_fit, hamilton_filter, kim_smoother, simulate_ms, write_smoothed_csv, EmOptions, InitialRule,
    MsrVineModel, RegimeSpec,
};
use crate::rolling::{
    classify_regimes, classify_vine, loglik_difference, rolling_window_analysis, write_ll_diff_csv, RegimeAssignment,
    RwaSeries,
};
use crate::vine::{RVineModel, RVineStructure};
use crate::vine_select::{fit_given_structure, select_structure, uniform_plan, FitReport, MIN_PAIR_OBS};

#[derive(Parser, Debug)]
#[command(name = "msrvine", version, about = "R-vine and Markov-switching R-vine copula estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Input is already on the unit scale; skip the rank transform.
    #[arg(long, global = true)]
    pub pre_filtered: bool,
    /// Rolling-window stride.
    #[arg(long, global = true, value_name = "N")]
    pub step: Option<usize>,
    /// Rolling-window length.
    #[arg(long, global = true, value_name = "N")]
    pub window: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Levels to log returns and rank pseudo-observations.
    Ingest,
    /// Sequential ML fit on the configured structure.
    FitStatic,
    /// Maximum-spanning-tree structure selection and fit.
    Select,
    /// Rolling-window family analysis per pair.
    Rwa,
    /// Normal/abnormal regime classification from RWA results.
    Classify,
    /// Rolling log-likelihood difference of two families per pair.
    LlDiff,
    /// EM estimation of the two-regime model.
    MsFit,
    /// Simulation from a vine or two-regime model file (needs a seed).
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::FitStatic => "fit-static",
            Command::Select => "select",
            Command::Rwa => "rwa",
            Command::Classify => "classify",
            Command::LlDiff => "ll-diff",
            Command::MsFit => "ms-fit",
            Command::Simulate => "simulate",
        }
    }
}

/// Structured run configuration. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Price levels, or unit-scale data when `pre_filtered` is set.
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub pre_filtered: bool,
    /// Column label to asset role (`Eq`, `Vol`, `Cmd`).
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
    /// Family whitelist; all six families when absent.
    pub families: Option<Vec<String>>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_step")]
    pub step: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Column pairs for `rwa`, `classify` and `ll-diff`; all pairs when absent.
    pub pairs: Option<Vec<[String; 2]>>,
    pub structure: Option<StructureConfig>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub ll_diff: LlDiffConfig,
    #[serde(default)]
    pub ms: MsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn default_window() -> usize {
    250
}

fn default_step() -> usize {
    1
}

/// Vine structure for `fit-static` and `ms-fit`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    /// `d-vine`, `c-vine`, `matrix` or `file`.
    pub kind: String,
    /// Variable order by label for D- and C-vines.
    pub order: Option<Vec<String>>,
    /// 1-based lower-triangular structure matrix.
    pub matrix: Option<Vec<Vec<usize>>>,
    /// A model or fit-report JSON whose structure (and families) is reused.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// `smoothed` or `stationary`.
    #[serde(default = "default_initial")]
    pub initial: String,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    100
}

fn default_initial() -> String {
    "smoothed".into()
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), initial: default_initial() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Existing RWA CSV to classify instead of running the RWA.
    pub rwa: Option<PathBuf>,
    /// Labels of the pair in `rwa`.
    pub pair: Option<[String; 2]>,
    /// Full-sample Kendall's tau; computed from the input data when absent.
    pub tau: Option<f64>,
    pub tree: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlDiffConfig {
    pub normal: Option<String>,
    pub abnormal: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsConfig {
    /// Model or fit-report JSON giving the structure; `[structure]` otherwise.
    pub structure: Option<PathBuf>,
    /// `static` (both regimes use the static families) or `auto` (RWA classification).
    #[serde(default = "default_ms_families")]
    pub families: String,
    /// Trailing moving-average window of the smoothed abnormal probability; 0 disables it.
    #[serde(default)]
    pub ma_window: usize,
    /// Per-edge family overrides.
    #[serde(default, rename = "edge")]
    pub edges: Vec<EdgeOverride>,
}

fn default_ms_families() -> String {
    "static".into()
}

impl Default for MsConfig {
    fn default() -> Self {
        Self { structure: None, families: default_ms_families(), ma_window: 0, edges: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeOverride {
    /// Conditioned labels, in either order.
    pub pair: [String; 2],
    #[serde(default)]
    pub given: Vec<String>,
    pub normal: String,
    pub abnormal: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Vine model, fit report or two-regime model JSON.
    pub model: Option<PathBuf>,
    pub n: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> std::result::Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    /// Checks the invariants that do not depend on the subcommand.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.window < crate::rolling::MIN_WINDOW {
            return Err(format!("window {} is below {}", self.window, crate::rolling::MIN_WINDOW));
        }
        if self.step == 0 {
            return Err("step must be positive".into());
        }
        self.family_whitelist()?;
        self.role_map()?;
        Ok(())
    }

    pub fn family_whitelist(&self) -> std::result::Result<Vec<CopulaFamily>, String> {
        match &self.families {
            None => Ok(CopulaFamily::ALL.to_vec()),
            Some(names) if names.is_empty() => Err("`families` is empty".into()),
            Some(names) => names.iter().map(|n| n.parse().map_err(|e: Error| e.to_string())).collect(),
        }
    }

    pub fn role_map(&self) -> std::result::Result<HashMap<String, AssetRole>, String> {
        self.roles
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.parse().map_err(|e: Error| format!("role of `{k}`: {e}"))?)))
            .collect()
    }
}

enum Failure {
    Usage { msg: String, flag: &'static str },
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn usage(msg: impl Into<String>, flag: &'static str) -> Failure {
    Failure::Usage { msg: msg.into(), flag }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Ctx {
    command: Command,
    cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
    families: Vec<CopulaFamily>,
    roles: HashMap<String, AssetRole>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn input_file(&mut self, p: &Path) -> PathBuf {
        let path = self.resolve(p);
        self.inputs.push(path.clone());
        path
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.out.join(name);
        let f = File::create(&path).map_err(Error::from)?;
        self.outputs.push(path);
        Ok(BufWriter::new(f))
    }

    fn write_string(&mut self, name: &str, text: &str) -> CliResult<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes()).map_err(Error::from)?;
        w.flush().map_err(Error::from)?;
        Ok(())
    }

    fn load_data(&mut self) -> CliResult<PseudoObservations> {
        let input = self.cfg.input.clone().ok_or_else(|| usage("the configuration has no `input`", "--config"))?;
        let path = self.input_file(&input);
        let u = if self.cfg.pre_filtered {
            load_uniforms(&path, &self.roles)?
        } else {
            let panel = load_levels(&path, &self.roles)?;
            if panel.n_obs() < MIN_PAIR_OBS {
                return Err(Error::Precondition(format!(
                    "{} needs at least {MIN_PAIR_OBS} return observations, got {}",
                    self.command.name(),
                    panel.n_obs()
                ))
                .into());
            }
            rank_pit(&panel)?
        };
        if u.n_obs() < MIN_PAIR_OBS {
            return Err(Error::Precondition(format!(
                "{} needs at least {MIN_PAIR_OBS} observations, got {}",
                self.command.name(),
                u.n_obs()
            ))
            .into());
        }
        Ok(u)
    }

    fn column(&self, u: &PseudoObservations, label: &str) -> CliResult<usize> {
        u.label_index(label).ok_or_else(|| usage(format!("unknown column label `{label}`"), "--config"))
    }

    fn pairs(&self, u: &PseudoObservations) -> CliResult<Vec<(usize, usize)>> {
        match &self.cfg.pairs {
            Some(p) => p.iter().map(|[a, b]| Ok((self.column(u, a)?, self.column(u, b)?))).collect(),
            None => Ok((0..u.dim()).flat_map(|i| (i + 1..u.dim()).map(move |j| (i, j))).collect()),
        }
    }

    fn structure(&mut self, u: &PseudoObservations) -> CliResult<(RVineStructure, Option<RVineModel>)> {
        let sc = self.cfg.structure.clone().ok_or_else(|| usage("the configuration has no [structure]", "--config"))?;
        let order = |ctx: &Self| -> CliResult<Vec<usize>> {
            let names = sc.order.as_ref().ok_or_else(|| usage("[structure] needs `order`", "--config"))?;
            names.iter().map(|n| ctx.column(u, n)).collect()
        };
        match sc.kind.as_str() {
            "d-vine" => Ok((RVineStructure::d_vine(&order(self)?)?, None)),
            "c-vine" => Ok((RVineStructure::c_vine(&order(self)?)?, None)),
            "matrix" => {
                let m = sc.matrix.as_ref().ok_or_else(|| usage("[structure] needs `matrix`", "--config"))?;
                Ok((RVineStructure::from_matrix(m)?, None))
            }
            "file" => {
                let p = sc.path.as_ref().ok_or_else(|| usage("[structure] needs `path`", "--config"))?;
                let m = self.model_file(&p.clone(), u)?;
                Ok((m.structure().clone(), Some(m)))
            }
            other => Err(usage(format!("unknown structure kind `{other}`"), "--config")),
        }
    }

    /// Loads a vine model or fit report and checks its labels against the data.
    fn model_file(&mut self, p: &Path, u: &PseudoObservations) -> CliResult<RVineModel> {
        let path = self.input_file(p);
        let text = std::fs::read_to_string(&path).map_err(Error::from)?;
        let model = match FitReport::from_json(&text) {
            Ok(r) => r.model,
            Err(_) => RVineModel::from_json(&text)?,
        };
        if model.labels != u.labels {
            return Err(Error::Precondition(format!(
                "model labels {:?} differ from data labels {:?}",
                model.labels, u.labels
            ))
            .into());
        }
        Ok(model)
    }
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    sha256: Option<String>,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    config: String,
    config_sha256: String,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    wall_time_seconds: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| hex(&Sha256::digest(&b)))
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage { msg, flag }) => {
            eprintln!("error: {msg} ({flag})");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {} failed: {e}", cli.command.name());
            2
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let started = Instant::now();
    let config_path = cli.config.clone().ok_or_else(|| usage("a run configuration is required", "--config"))?;
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", config_path.display()), "--config"))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| usage(format!("invalid configuration: {e}"), "--config"))?;
    if let Some(w) = cli.window {
        cfg.window = w;
    }
    if let Some(s) = cli.step {
        cfg.step = s;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.pre_filtered |= cli.pre_filtered;
    cfg.validate().map_err(|e| {
        let flag = if e.starts_with("window") {
            "--window"
        } else if e.starts_with("step") {
            "--step"
        } else {
            "--config"
        };
        usage(e, flag)
    })?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("thread count must be positive", "--threads"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&cli.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&out).map_err(|e| usage(format!("cannot create {}: {e}", out.display()), "--out"))?;
    let mut ctx = Ctx {
        command: cli.command,
        families: cfg.family_whitelist().map_err(|e| usage(e, "--config"))?,
        roles: cfg.role_map().map_err(|e| usage(e, "--config"))?,
        cfg,
        base,
        out,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    match cli.command {
        Command::Ingest => ingest(&mut ctx)?,
        Command::FitStatic => fit_static(&mut ctx)?,
        Command::Select => select(&mut ctx)?,
        Command::Rwa => rwa(&mut ctx)?,
        Command::Classify => classify(&mut ctx)?,
        Command::LlDiff => ll_diff(&mut ctx)?,
        Command::MsFit => ms_fit(&mut ctx)?,
        Command::Simulate => simulate(&mut ctx)?,
    }
    let manifest = Manifest {
        command: cli.command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config_path.display().to_string(),
        config_sha256: hex(&Sha256::digest(text.as_bytes())),
        inputs: ctx
            .inputs
            .iter()
            .map(|p| InputRecord { path: p.display().to_string(), sha256: sha256_file(p) })
            .collect(),
        outputs: ctx.outputs.iter().map(|p| p.display().to_string()).collect(),
        seed: ctx.cfg.seed,
        threads: cli.threads,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
    std::fs::write(ctx.out.join(format!("manifest_{}.json", cli.command.name())), json).map_err(Error::from)?;
    Ok(())
}

fn ingest(ctx: &mut Ctx) -> CliResult<()> {
    let input = ctx.cfg.input.clone().ok_or_else(|| usage("the configuration has no `input`", "--config"))?;
    let path = ctx.input_file(&input);
    if ctx.cfg.pre_filtered {
        let u = load_uniforms(&path, &ctx.roles)?;
        u.write_csv(ctx.create("uniforms.csv")?)?;
        println!("{} rows of unit-scale data", u.n_obs());
        return Ok(());
    }
    let panel = load_levels(&path, &ctx.roles)?;
    write_returns(&panel, ctx.create("returns.csv")?)?;
    println!("{} return rows", panel.n_obs());
    match rank_pit(&panel) {
        Ok(u) => u.write_csv(ctx.create("uniforms.csv")?)?,
        Err(e) => eprintln!("warning: no pseudo-observations written: {e}"),
    }
    Ok(())
}

fn write_fit(ctx: &mut Ctx, prefix: &str, report: &FitReport) -> CliResult<()> {
    ctx.write_string(&format!("{prefix}_model.json"), &report.model.to_json()?)?;
    ctx.write_string(&format!("{prefix}_report.json"), &report.to_json()?)?;
    report.write_edges_csv(ctx.create(&format!("{prefix}_edges.csv"))?)?;
    println!(
        "loglik {:.4}, {} parameters, AIC {:.4}, BIC {:.4}, n = {}",
        report.loglik, report.n_params, report.aic, report.bic, report.n_obs
    );
    Ok(())
}

fn fit_static(ctx: &mut Ctx) -> CliResult<()> {
    let u = ctx.load_data()?;
    let (structure, _) = ctx.structure(&u)?;
    let report = fit_given_structure(&u, &structure, &uniform_plan(&structure, &ctx.families))?;
    write_fit(ctx, "static", &report)
}

fn select(ctx: &mut Ctx) -> CliResult<()> {
    let u = ctx.load_data()?;
    let report = select_structure(&u, &ctx.families)?;
    write_fit(ctx, "select", &report)
}

fn pair_name(u: &PseudoObservations, (a, b): (usize, usize)) -> String {
    format!("{}-{}", u.labels[a], u.labels[b])
}

fn rwa(ctx: &mut Ctx) -> CliResult<()> {
    let u = ctx.load_data()?;
    for pair in ctx.pairs(&u)? {
        let s = rolling_window_analysis(&u, pair, ctx.cfg.window, ctx.cfg.step, &ctx.families)?;
        s.write_csv(ctx.create(&format!("rwa_{}.csv", s.pair))?)?;
        let counts: Vec<String> = s.family_counts().iter().map(|(f, c)| format!("{f} {c}")).collect();
        println!("{}: {} windows ({}), {} failed", s.pair, s.records.len(), counts.join(", "), s.n_failed());
    }
    Ok(())
}

fn print_assignment(a: &RegimeAssignment) {
    println!(
        "{} (tree {}): normal {} (freq {:.2}, qtd {:.2}), abnormal {} (freq {:.2}, qtd {:.2}){}",
        a.pair,
        a.tree,
        a.normal.family,
        a.normal.frequency,
        a.normal.qtd,
        a.abnormal.family,
        a.abnormal.frequency,
        a.abnormal.qtd,
        if a.ambiguous { " [ambiguous second place]" } else { "" }
    );
}

fn classify(ctx: &mut Ctx) -> CliResult<()> {
    let cc = ctx.cfg.classify.clone();
    let mut out = Vec::new();
    if let Some(path) = &cc.rwa {
        let [a, b] = cc.pair.clone().ok_or_else(|| usage("[classify] with `rwa` needs `pair`", "--config"))?;
        let role = |l: &str| ctx.roles.get(l).copied().ok_or_else(|| usage(format!("no role for `{l}`"), "--config"));
        let roles = [role(&a)?, role(&b)?];
        let tau = match cc.tau {
            Some(t) => t,
            None => {
                let u = ctx.load_data()?;
                let (i, j) = (ctx.column(&u, &a)?, ctx.column(&u, &b)?);
                empirical_kendall_tau(&u.column(i), &u.column(j))?.tau_hat
            }
        };
        let path = ctx.input_file(path);
        let file = File::open(&path).map_err(Error::from)?;
        let series = RwaSeries::read_csv(file, &format!("{a}-{b}"), roles, cc.tree.unwrap_or(1))?;
        out.push(classify_regimes(&series, tau)?);
    } else {
        let u = ctx.load_data()?;
        for pair in ctx.pairs(&u)? {
            let s = rolling_window_analysis(&u, pair, ctx.cfg.window, ctx.cfg.step, &ctx.families)?;
            let tau = empirical_kendall_tau(&u.column(pair.0), &u.column(pair.1))?.tau_hat;
            let a = classify_regimes(&s, tau).map_err(|e| match e {
                Error::Tie(m) => Error::Tie(m),
                other => Error::Precondition(format!("{}: {other}", pair_name(&u, pair))),
            })?;
            out.push(a);
        }
    }
    out.iter().for_each(print_assignment);
    ctx.write_string("regimes.json", &serde_json::to_string_pretty(&out).map_err(Error::from)?)
}

fn parse_family(name: &str, what: &str) -> CliResult<CopulaFamily> {
    name.parse().map_err(|e: Error| usage(format!("{what}: {e}"), "--config"))
}

fn ll_diff(ctx: &mut Ctx) -> CliResult<()> {
    let lc = ctx.cfg.ll_diff.clone();
    let normal = parse_family(
        lc.normal.as_deref().ok_or_else(|| usage("[ll_diff] needs `normal`", "--config"))?,
        "[ll_diff] normal",
    )?;
    let abnormal = parse_family(
        lc.abnormal.as_deref().ok_or_else(|| usage("[ll_diff] needs `abnormal`", "--config"))?,
        "[ll_diff] abnormal",
    )?;
    let u = ctx.load_data()?;
    for pair in ctx.pairs(&u)? {
        let pts = loglik_difference(&u, pair, normal, abnormal, ctx.cfg.window, ctx.cfg.step)?;
        write_ll_diff_csv(ctx.create(&format!("ll_diff_{}.csv", pair_name(&u, pair)))?, &pts)?;
        let gaps = pts.iter().filter(|p| p.value.is_none()).count();
        println!("{}: {} windows, {} gaps", pair_name(&u, pair), pts.len(), gaps);
    }
    Ok(())
}

fn apply_overrides(
    ctx: &Ctx,
    u: &PseudoObservations,
    structure: &RVineStructure,
    specs: &mut [Vec<Vec<CopulaFamily>>; 2],
) -> CliResult<()> {
    for o in &ctx.cfg.ms.edges {
        let mut pair = [ctx.column(u, &o.pair[0])?, ctx.column(u, &o.pair[1])?];
        pair.sort_unstable();
        let mut given = o.given.iter().map(|g| ctx.column(u, g)).collect::<CliResult<Vec<_>>>()?;
        given.sort_unstable();
        let hit = structure.edges().find(|(_, _, e)| {
            let mut c = e.conditioned;
            c.sort_unstable();
            c == pair && e.conditioning == given
        });
        let (t, k, _) = hit.ok_or_else(|| {
            usage(format!("[[ms.edge]] {}-{}|{:?} is not an edge of the structure", o.pair[0], o.pair[1], o.given), "--config")
        })?;
        specs[0][t][k] = parse_family(&o.normal, "[[ms.edge]] normal")?;
        specs[1][t][k] = parse_family(&o.abnormal, "[[ms.edge]] abnormal")?;
    }
    Ok(())
}

fn ms_fit(ctx: &mut Ctx) -> CliResult<()> {
    let u = ctx.load_data()?;
    let (structure, fitted) = match ctx.cfg.ms.structure.clone() {
        Some(p) => {
            let m = ctx.model_file(&p, &u)?;
            (m.structure().clone(), Some(m))
        }
        None => ctx.structure(&u)?,
    };
    let static_model = match fitted {
        Some(m) => m,
        None => fit_given_structure(&u, &structure, &uniform_plan(&structure, &ctx.families))?.model,
    };
    let mut families = match ctx.cfg.ms.families.as_str() {
        "static" => {
            let f = RegimeSpec::of(&static_model).families;
            [f.clone(), f]
        }
        "auto" => {
            let (assign, [n, a]) = classify_vine(&static_model, &u, ctx.cfg.window, ctx.cfg.step, &ctx.families)?;
            assign.iter().flatten().for_each(print_assignment);
            ctx.write_string("regimes.json", &serde_json::to_string_pretty(&assign).map_err(Error::from)?)?;
            [n.families, a.families]
        }
        other => return Err(usage(format!("[ms] families must be `static` or `auto`, got `{other}`"), "--config")),
    };
    apply_overrides(ctx, &u, &structure, &mut families)?;
    let [nf, af] = families;
    let specs = [RegimeSpec::new(structure.clone(), nf)?, RegimeSpec::new(structure, af)?];
    let initial = match ctx.cfg.em.initial.as_str() {
        "smoothed" => InitialRule::Smoothed,
        "stationary" => InitialRule::Stationary,
        other => return Err(usage(format!("[em] initial must be `smoothed` or `stationary`, got `{other}`"), "--config")),
    };
    let opts = EmOptions { tol: ctx.cfg.em.tol, max_iter: ctx.cfg.em.max_iter, initial };
    let init = default_init(&u, [&specs[0], &specs[1]])?;
    let (model, trace) = em_fit(&u, [&specs[0], &specs[1]], &init, &opts)?;
    let sm = kim_smoother(&model, &hamilton_filter(&model, &u)?)?;
    ctx.write_string("ms_model.json", &model.to_json()?)?;
    ctx.write_string("em_trace.json", &serde_json::to_string_pretty(&trace).map_err(Error::from)?)?;
    let ma = ctx.cfg.ms.ma_window;
    write_smoothed_csv(ctx.create("smoothed.csv")?, &sm, u.dates.as_deref(), ma)?;
    let p = model.transition.rows();
    println!(
        "EM: {} iterations, converged {}, loglik {:.4}, P = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
        trace.logliks.len(),
        trace.converged,
        trace.logliks.get(trace.best_iteration).copied().unwrap_or(f64::NAN),
        p[0][0],
        p[0][1],
        p[1][0],
        p[1][1]
    );
    Ok(())
}

fn simulate(ctx: &mut Ctx) -> CliResult<()> {
    let seed = ctx.cfg.seed.ok_or_else(|| usage("simulation needs a seed", "--seed"))?;
    let sc = ctx.cfg.simulate.clone();
    let path = sc.model.ok_or_else(|| usage("[simulate] needs `model`", "--config"))?;
    let n = sc.n.ok_or_else(|| usage("[simulate] needs `n`", "--config"))?;
    let path = ctx.input_file(&path);
    let text = std::fs::read_to_string(&path).map_err(Error::from)?;
    if let Ok(ms) = MsrVineModel::from_json(&text) {
        let (u, states) = simulate_ms(&ms, n, seed)?;
        u.write_csv(ctx.create("simulated.csv")?)?;
        let mut w = csv::Writer::from_writer(ctx.create("states.csv")?);
        w.write_record(["t", "state"]).map_err(Error::from)?;
        for (t, s) in states.iter().enumerate() {
            w.write_record([t.to_string(), s.to_string()]).map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
    } else {
        let model = match FitReport::from_json(&text) {
            Ok(r) => r.model,
            Err(_) => RVineModel::from_json(&text)?,
        };
        model.simulate(n, seed)?.write_csv(ctx.create("simulated.csv")?)?;
    }
    println!("{n} rows simulated with seed {seed}");
    Ok(())
}
