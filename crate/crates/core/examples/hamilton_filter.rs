//! Filtered and smoothed regime probabilities for a known two-regime model.

use msrvine::msrv::{hamilton_filter, kim_smoother, simulate_ms, write_smoothed_csv};
use msrvine::{BivariateCopula, CopulaFamily, MsrVineModel, RVineModel, RVineStructure, TransitionMatrix};

fn main() -> msrvine::Result<()> {
    let s = RVineStructure::d_vine(&[0, 1])?;
    let calm = RVineModel::new(s.clone(), vec![vec![BivariateCopula::gauss(0.2)?]])?;
    let stress = RVineModel::new(s, vec![vec![BivariateCopula::from_tau(CopulaFamily::Gumbel180, 0.6)?]])?;
    let m = MsrVineModel::new([calm, stress], TransitionMatrix::from_diagonal(0.97, 0.9)?, [0.5, 0.5])?;
    let (u, states) = simulate_ms(&m, 300, 5)?;
    let f = hamilton_filter(&m, &u)?;
    let sm = kim_smoother(&m, &f)?;
    let hits = sm.smoothed.iter().zip(&states).filter(|(p, &s)| usize::from(p[1] > 0.5) == s).count();
    println!("loglik {:.3}; smoothed states correct on {hits}/300 days", f.loglik);
    write_smoothed_csv(std::io::stdout().lock(), &msrvine::msrv::SmoothedOutput { smoothed: sm.smoothed[..10].to_vec(), pairwise: vec![] }, None, 5)?;
    Ok(())
}
