//! EM estimation of a two-regime R-vine from simulated data.

use msrvine::msrv::{default_init, em_fit, simulate_ms, EmOptions, RegimeSpec};
use msrvine::vine::Edge;
use msrvine::{BivariateCopula, CopulaFamily, MsrVineModel, RVineModel, RVineStructure, TransitionMatrix};

fn regime(family: CopulaFamily, tau: f64) -> msrvine::Result<RVineModel> {
    let s = RVineStructure::new(3, vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]])?;
    let c = BivariateCopula::from_tau(family, tau)?;
    RVineModel::new(s, vec![vec![c, c], vec![c]])
}

fn main() -> msrvine::Result<()> {
    let truth = MsrVineModel::new(
        [regime(CopulaFamily::Gumbel90, -0.6)?, regime(CopulaFamily::Gauss, -0.2)?],
        TransitionMatrix::from_diagonal(0.98, 0.98)?,
        [0.5, 0.5],
    )?;
    let (u, _) = simulate_ms(&truth, 2000, 11)?;
    let specs = [RegimeSpec::of(&truth.regimes[0]), RegimeSpec::of(&truth.regimes[1])];
    let init = default_init(&u, [&specs[0], &specs[1]])?;
    let (fit, trace) = em_fit(&u, [&specs[0], &specs[1]], &init, &EmOptions::default())?;
    println!("iterations {}  converged {}", trace.logliks.len(), trace.converged);
    println!("loglik path {:?}", trace.logliks.iter().map(|l| l.round()).collect::<Vec<_>>());
    println!("P = {:?}", fit.transition.rows());
    for (k, m) in fit.regimes.iter().enumerate() {
        let cops: Vec<String> = m.copulas().iter().flatten().map(|c| c.to_string()).collect();
        println!("regime {k}: {}", cops.join(", "));
    }
    Ok(())
}
