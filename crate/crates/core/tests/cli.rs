use std::path::Path;
use std::process::{Command, Output};

use msrvine::copulas::quarter_tail_dependence;
use msrvine::msrv::{MsrVineModel, TransitionMatrix};
use msrvine::rolling::{RwaRecord, RwaSeries, WindowFit};
use msrvine::vine::Edge;
use msrvine::{AssetRole, BivariateCopula, CopulaFamily, RVineModel, RVineStructure};

fn msrvine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msrvine")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    msrvine(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn three_var_regime(family: CopulaFamily, tau: f64) -> RVineModel {
    let s = RVineStructure::new(3, vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]])
        .unwrap();
    let c = BivariateCopula::from_tau(family, tau).unwrap();
    RVineModel::new(s, vec![vec![c, c], vec![c]]).unwrap()
}

const ROLES: &str = "[roles]\nV1 = \"Eq\"\nV2 = \"Eq\"\nV3 = \"Eq\"\n";

#[test]
fn ingest_then_fit_static_reports_small_samples() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "levels.csv", "date,A,B\n2020-01-01,100,50\n2020-01-02,101,49.5\n");
    write(
        dir.path(),
        "run.toml",
        "input = \"levels.csv\"\nout = \"out\"\n[roles]\nA = \"Eq\"\nB = \"Vol\"\n[structure]\nkind = \"d-vine\"\norder = [\"A\", \"B\"]\n",
    );
    let o = run_in(dir.path(), "ingest", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let returns = std::fs::read_to_string(dir.path().join("out/returns.csv")).unwrap();
    assert_eq!(returns.lines().count(), 2);
    assert!(dir.path().join("out/manifest_ingest.json").exists());

    let o = run_in(dir.path(), "fit-static", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 30"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(msrvine(&["select"]).status.code(), Some(1));
    assert_eq!(msrvine(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(msrvine(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.toml", "input = \"x.csv\"\n");
    let o = run_in(dir.path(), "rwa", &["--window", "50"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--window"));

    write(dir.path(), "run.toml", "[simulate]\nmodel = \"m.json\"\nn = 10\n");
    let o = run_in(dir.path(), "simulate", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));

    write(dir.path(), "run.toml", "unknown_key = 3\n");
    assert_eq!(run_in(dir.path(), "select", &[]).status.code(), Some(1));
}

#[test]
fn classify_reproduces_an_equity_pair_row() {
    let roles = [AssetRole::Eq, AssetRole::Eq];
    let gauss = BivariateCopula::gauss(0.45).unwrap();
    let g180 = BivariateCopula::gumbel(CopulaFamily::Gumbel180, std::f64::consts::LN_2 / 1.57f64.ln()).unwrap();
    let student = BivariateCopula::student_t(0.4, 12.0).unwrap();
    let mut fits = Vec::new();
    fits.extend(std::iter::repeat_n(gauss, 39));
    fits.extend(std::iter::repeat_n(g180, 41));
    fits.extend(std::iter::repeat_n(student, 20));
    let records = fits
        .into_iter()
        .enumerate()
        .map(|(i, c)| RwaRecord {
            window_start: i,
            window_end: i + 250,
            tau_hat: Some(0.3),
            outcome: Ok(WindowFit { copula: c, qtd: quarter_tail_dependence(roles[0], roles[1], &c) }),
        })
        .collect();
    let series = RwaSeries { pair: "NKY-HSI".into(), roles, tree: 1, window: 250, step: 1, records };
    let dir = tempfile::tempdir().unwrap();
    series.write_csv(std::fs::File::create(dir.path().join("rwa.csv")).unwrap()).unwrap();
    write(
        dir.path(),
        "run.toml",
        "out = \"out\"\n[roles]\nNKY = \"Eq\"\nHSI = \"Eq\"\n[classify]\nrwa = \"rwa.csv\"\npair = [\"NKY\", \"HSI\"]\ntau = 0.3\n",
    );
    let o = run_in(dir.path(), "classify", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/regimes.json")).unwrap();
    let v: Vec<msrvine::RegimeAssignment> = serde_json::from_str(&text).unwrap();
    assert_eq!(v[0].normal.family, CopulaFamily::Gauss);
    assert_eq!(v[0].abnormal.family, CopulaFamily::Gumbel180);
    assert!((v[0].abnormal.qtd - 0.43).abs() < 1e-9);
}

#[test]
fn simulate_then_ms_fit_recovers_persistence() {
    let truth = MsrVineModel::new(
        [three_var_regime(CopulaFamily::Gumbel90, -0.6), three_var_regime(CopulaFamily::Gauss, -0.2)],
        TransitionMatrix::from_diagonal(0.98, 0.98).unwrap(),
        [0.5, 0.5],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    truth.save(d.join("truth.json")).unwrap();
    truth.regimes[0].save(d.join("normal.json")).unwrap();
    write(d, "sim.toml", "out = \"sim\"\nseed = 21\n[simulate]\nmodel = \"truth.json\"\nn = 2000\n");
    let sim = |out: &str| {
        let cfg = d.join("sim.toml");
        msrvine(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.join(out).to_str().unwrap()])
    };
    assert_eq!(sim("sim").status.code(), Some(0));
    assert_eq!(sim("sim2").status.code(), Some(0));
    let a = std::fs::read(d.join("sim/simulated.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("sim2/simulated.csv")).unwrap());
    assert_eq!(std::fs::read(d.join("sim/states.csv")).unwrap(), std::fs::read(d.join("sim2/states.csv")).unwrap());

    let mut cfg = format!("input = \"sim/simulated.csv\"\npre_filtered = true\nout = \"fit\"\n{ROLES}");
    cfg.push_str("[ms]\nstructure = \"normal.json\"\n");
    for (pair, given) in [("[\"V1\", \"V2\"]", "[]"), ("[\"V2\", \"V3\"]", "[]"), ("[\"V3\", \"V1\"]", "[\"V2\"]")] {
        cfg.push_str(&format!(
            "[[ms.edge]]\npair = {pair}\ngiven = {given}\nnormal = \"Gumbel90\"\nabnormal = \"Gauss\"\n"
        ));
    }
    write(d, "run.toml", &cfg);
    let o = run_in(d, "ms-fit", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = MsrVineModel::load(d.join("fit/ms_model.json")).unwrap();
    for k in 0..2 {
        assert!((fit.transition.get(k, k) - 0.98).abs() <= 0.05, "{:?}", fit.transition);
    }
    assert_eq!(fit.regimes[1].copula(0, 0).family(), CopulaFamily::Gauss);
    let smoothed = std::fs::read_to_string(d.join("fit/smoothed.csv")).unwrap();
    assert_eq!(smoothed.lines().count(), 2001);
    assert!(d.join("fit/em_trace.json").exists());
    assert!(d.join("fit/manifest_ms-fit.json").exists());
}

#[test]
fn select_output_feeds_ms_fit_and_rwa_outputs_are_deterministic() {
    let m = three_var_regime(CopulaFamily::Gauss, 0.4);
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let u = m.simulate(400, 3).unwrap();
    u.write_csv(std::fs::File::create(d.join("u.csv")).unwrap()).unwrap();
    let cfg = format!(
        "input = \"u.csv\"\npre_filtered = true\nout = \"out\"\nfamilies = [\"Gauss\", \"Gumbel\", \"Gumbel180\"]\nwindow = 150\nstep = 50\npairs = [[\"V1\", \"V2\"]]\n{ROLES}[ms]\nstructure = \"out/select_model.json\"\n[em]\nmax_iter = 5\n[ll_diff]\nnormal = \"Gauss\"\nabnormal = \"Gumbel180\"\n"
    );
    write(d, "run.toml", &cfg);
    for cmd in ["select", "ms-fit", "rwa", "ll-diff"] {
        let o = run_in(d, cmd, &["--threads", "1"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let rwa = std::fs::read(d.join("out/rwa_V1-V2.csv")).unwrap();
    let ll = std::fs::read(d.join("out/ll_diff_V1-V2.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&rwa).lines().count(), (400 - 150) / 50 + 2);
    for cmd in ["rwa", "ll-diff"] {
        assert_eq!(run_in(d, cmd, &[]).status.code(), Some(0));
    }
    assert_eq!(std::fs::read(d.join("out/rwa_V1-V2.csv")).unwrap(), rwa);
    assert_eq!(std::fs::read(d.join("out/ll_diff_V1-V2.csv")).unwrap(), ll);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/manifest_rwa.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}
