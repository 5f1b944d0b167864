//! Tie-aware empirical Kendall's tau.
//!
//! Pair counts follow the tau-b convention: a pair tied in `x` only counts
//! towards `n_ties_x`, tied in `y` only towards `n_ties_y`, and a pair tied in
//! both coordinates counts in none of the four totals.

use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauEstimate {
    pub tau_hat: f64,
    pub n_concordant: u64,
    pub n_discordant: u64,
    pub n_ties_x: u64,
    pub n_ties_y: u64,
    /// Pairs tied in both coordinates.
    pub n_ties_joint: u64,
}

impl TauEstimate {
    /// Builds the estimate from pair counts; errors when a margin is constant.
    pub fn from_counts(nc: u64, nd: u64, nx: u64, ny: u64, nxy: u64) -> Result<Self> {
        let dx = (nc + nd + nx) as f64;
        let dy = (nc + nd + ny) as f64;
        if dx == 0.0 || dy == 0.0 {
            return Err(Error::Degenerate("Kendall's tau undefined for a constant sample".into()));
        }
        let tau_hat = ((nc as f64 - nd as f64) / (dx * dy).sqrt()).clamp(-1.0, 1.0);
        Ok(Self {
            tau_hat,
            n_concordant: nc,
            n_discordant: nd,
            n_ties_x: nx,
            n_ties_y: ny,
            n_ties_joint: nxy,
        })
    }
}

fn tie_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], same: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Empirical Kendall's tau in O(n log n) (Knight's merge-sort algorithm).
pub fn empirical_kendall_tau(x: &[f64], y: &[f64]) -> Result<TauEstimate> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "Kendall's tau needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Precondition("Kendall's tau needs at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Domain("Kendall's tau input contains NaN".into()));
    }
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n1 = tie_pairs(&pairs, |a, b| a.0 == b.0);
    let n3 = tie_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let nd = merge_count(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys, |a, b| a.partial_cmp(b) == Some(Ordering::Equal));
    let n0 = n * (n - 1) / 2;
    let nc = n0 + n3 - n1 - n2 - nd;
    TauEstimate::from_counts(nc, nd, n1 - n3, n2 - n3, n3)
}

/// O(n^2) pair counter; the reference for [`empirical_kendall_tau`].
pub fn kendall_tau_brute_force(x: &[f64], y: &[f64]) -> Result<TauEstimate> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Precondition("Kendall's tau needs two equal-length samples".into()));
    }
    let (mut nc, mut nd, mut nx, mut ny, mut nxy) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => nxy += 1,
                (true, false) => nx += 1,
                (false, true) => ny += 1,
                (false, false) if (dx > 0.0) == (dy > 0.0) => nc += 1,
                _ => nd += 1,
            }
        }
    }
    TauEstimate::from_counts(nc, nd, nx, ny, nxy)
}

/// Weighted Kendall's tau over all pairs, each weighted by `w_i * w_j`;
/// used for starting values of weighted fits.
pub fn weighted_kendall_tau(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let n = x.len();
    let stride = (n / 1500).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let s = (x[i] - x[j]) * (y[i] - y[j]);
            let ww = w[i] * w[j];
            den += ww;
            if s > 0.0 {
                num += ww;
            } else if s < 0.0 {
                num -= ww;
            }
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_orderings() {
        let t = empirical_kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.tau_hat, 1.0);
        let t = empirical_kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(t.tau_hat, -1.0);
    }

    #[test]
    fn tie_example() {
        let t = empirical_kendall_tau(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((t.n_concordant, t.n_discordant, t.n_ties_x, t.n_ties_y), (2, 0, 1, 0));
        let expected = 2.0 / (3f64.sqrt() * 2f64.sqrt());
        assert!((t.tau_hat - expected).abs() < 1e-15);
        assert!((t.tau_hat - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn joint_ties_count_nowhere() {
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [5.0, 5.0, 1.0, 1.0];
        let fast = empirical_kendall_tau(&x, &y).unwrap();
        let slow = kendall_tau_brute_force(&x, &y).unwrap();
        assert_eq!(fast, slow);
        assert_eq!(fast.n_ties_joint, 1);
    }

    #[test]
    fn constant_input_is_degenerate() {
        assert!(matches!(
            empirical_kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(empirical_kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(empirical_kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }
}
