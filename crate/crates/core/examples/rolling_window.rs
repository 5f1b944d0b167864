//! Rolling-window family analysis, regime classification and the
//! log-likelihood difference series on data with a dependence break.

use msrvine::rolling::{classify_regimes, loglik_difference, rolling_window_analysis};
use msrvine::{empirical_kendall_tau, AssetRole, BivariateCopula, CopulaFamily, PseudoObservations, RVineModel, RVineStructure};

fn pair(c: BivariateCopula, n: usize, seed: u64) -> msrvine::Result<Vec<Vec<f64>>> {
    let m = RVineModel::new(RVineStructure::d_vine(&[0, 1])?, vec![vec![c]])?;
    Ok(m.simulate(n, seed)?.rows().map(<[f64]>::to_vec).collect())
}

fn main() -> msrvine::Result<()> {
    let mut rows = pair(BivariateCopula::from_tau(CopulaFamily::Gumbel90, -0.5)?, 1500, 1)?;
    rows.extend(pair(BivariateCopula::student_t(-0.35, 4.0)?, 700, 2)?);
    rows.extend(pair(BivariateCopula::from_tau(CopulaFamily::Gumbel90, -0.5)?, 800, 3)?);
    let u = PseudoObservations::from_rows(vec!["SPX".into(), "VIX".into()], vec![AssetRole::Eq, AssetRole::Vol], &rows)?;

    let families = [CopulaFamily::Gauss, CopulaFamily::StudentT, CopulaFamily::Gumbel90, CopulaFamily::Gumbel270];
    let series = rolling_window_analysis(&u, (0, 1), 250, 20, &families)?;
    for (f, n) in series.family_counts() {
        println!("{f:<10} {:.2}", n as f64 / series.records.len() as f64);
    }
    let tau = empirical_kendall_tau(&u.column(0), &u.column(1))?.tau_hat;
    let a = classify_regimes(&series, tau)?;
    println!("{}", a.to_json()?);

    let diff = loglik_difference(&u, (0, 1), a.normal.family, a.abnormal.family, 250, 100)?;
    for p in diff {
        println!("[{:>4}, {:>4})  {:?}", p.window_start, p.window_end, p.value.map(|v| (v * 100.0).round() / 100.0));
    }
    Ok(())
}
