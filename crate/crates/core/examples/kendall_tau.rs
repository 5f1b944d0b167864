//! Tie-aware Kendall's tau: the O(n log n) estimator against pair counting.

use msrvine::dependence::kendall_tau_brute_force;
use msrvine::empirical_kendall_tau;

fn main() -> msrvine::Result<()> {
    let x = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0, 6.0];
    let y = [2.0, 1.0, 3.0, 3.0, 5.0, 4.0, 4.0, 6.0];
    let fast = empirical_kendall_tau(&x, &y)?;
    let slow = kendall_tau_brute_force(&x, &y)?;
    println!("{fast:?}");
    assert_eq!(fast, slow);
    Ok(())
}
