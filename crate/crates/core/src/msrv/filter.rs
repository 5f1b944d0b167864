use super::{MsrVineModel, TransitionMatrix};
use crate::data::PseudoObservations;
use crate::error::{Error, Result};

/// Predicted `P(S_t | u_{1:t-1})` and filtered `P(S_t | u_{1:t})` probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub predicted: Vec<[f64; 2]>,
    pub filtered: Vec<[f64; 2]>,
    pub loglik: f64,
}

/// Smoothed probabilities `P(S_t | u_{1:T})` and pairwise joints;
/// `pairwise[t][k][l] = P(S_t = k, S_{t+1} = l | u_{1:T})` (0-based `t`).
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedOutput {
    pub smoothed: Vec<[f64; 2]>,
    pub pairwise: Vec<[[f64; 2]; 2]>,
}

/// Per-row log-densities under both regimes.
pub(crate) fn regime_log_densities(m: &MsrVineModel, u: &PseudoObservations) -> Result<Vec<[f64; 2]>> {
    let a = m.regimes[0].log_density_rows(u)?;
    let b = m.regimes[1].log_density_rows(u)?;
    Ok(a.into_iter().zip(b).map(|(x, y)| [x, y]).collect())
}

/// Forward recursion over the two states.
pub fn hamilton_filter(m: &MsrVineModel, u: &PseudoObservations) -> Result<FilterOutput> {
    if m.dim() != u.dim() {
        return Err(Error::Precondition(format!("model has dimension {}, data has {}", m.dim(), u.dim())));
    }
    filter_log_densities(&m.transition, m.initial, &regime_log_densities(m, u)?)
}

/// The filter on precomputed regime log-densities. Each step is normalized
/// in the probability domain after shifting by the larger log-density, and
/// the log normalizers are accumulated.
pub fn filter_log_densities(p: &TransitionMatrix, initial: [f64; 2], ld: &[[f64; 2]]) -> Result<FilterOutput> {
    let n = ld.len();
    let mut predicted = Vec::with_capacity(n);
    let mut filtered = Vec::with_capacity(n);
    let mut loglik = 0.0;
    let mut pred = initial;
    for (t, l) in ld.iter().enumerate() {
        let shift = l[0].max(l[1]);
        if !shift.is_finite() {
            return Err(Error::Numeric(format!("observation {} has no finite regime density", t + 1)));
        }
        let j = [pred[0] * (l[0] - shift).exp(), pred[1] * (l[1] - shift).exp()];
        let c = j[0] + j[1];
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Numeric(format!("filter likelihood underflows at observation {}", t + 1)));
        }
        let f = [j[0] / c, j[1] / c];
        loglik += c.ln() + shift;
        predicted.push(pred);
        filtered.push(f);
        pred = [f[0] * p.get(0, 0) + f[1] * p.get(1, 0), f[0] * p.get(0, 1) + f[1] * p.get(1, 1)];
    }
    Ok(FilterOutput { predicted, filtered, loglik })
}

/// Backward recursion for the smoothed marginals and pairwise joints.
pub fn kim_smoother(m: &MsrVineModel, f: &FilterOutput) -> Result<SmoothedOutput> {
    smooth(&m.transition, f)
}

pub(crate) fn smooth(p: &TransitionMatrix, f: &FilterOutput) -> Result<SmoothedOutput> {
    let n = f.filtered.len();
    if n == 0 {
        return Ok(SmoothedOutput { smoothed: Vec::new(), pairwise: Vec::new() });
    }
    let mut smoothed = vec![[0.0; 2]; n];
    let mut pairwise = vec![[[0.0; 2]; 2]; n - 1];
    smoothed[n - 1] = f.filtered[n - 1];
    for t in (0..n - 1).rev() {
        let next = smoothed[t + 1];
        let pred = f.predicted[t + 1];
        let mut joint = [[0.0; 2]; 2];
        for (k, row) in joint.iter_mut().enumerate() {
            for (l, cell) in row.iter_mut().enumerate() {
                if pred[l] > 0.0 {
                    *cell = f.filtered[t][k] * p.get(k, l) * next[l] / pred[l];
                }
            }
        }
        if joint.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("smoother produced a non-finite value at observation {}", t + 1)));
        }
        smoothed[t] = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
        pairwise[t] = joint;
    }
    Ok(SmoothedOutput { smoothed, pairwise })
}

/// Ratio-of-expected-counts update of the transition matrix; the initial
/// distribution becomes the first smoothed row. Rows are renormalized to
/// absorb rounding.
pub fn update_transition(sm: &SmoothedOutput) -> Result<(TransitionMatrix, [f64; 2])> {
    if sm.pairwise.is_empty() {
        return Err(Error::Degenerate("transition update needs at least two observations".into()));
    }
    let mut num = [[0.0; 2]; 2];
    for j in &sm.pairwise {
        for k in 0..2 {
            for l in 0..2 {
                num[k][l] += j[k][l];
            }
        }
    }
    let mut den = [0.0; 2];
    for s in &sm.smoothed[..sm.pairwise.len()] {
        den[0] += s[0];
        den[1] += s[1];
    }
    let mut rows = [[0.0; 2]; 2];
    for k in 0..2 {
        if !(den[k] > 1e-300) {
            return Err(Error::Degenerate(format!("regime {k} has zero smoothed mass")));
        }
        let a = (num[k][0] / den[k]).clamp(0.0, 1.0);
        let b = (num[k][1] / den[k]).clamp(0.0, 1.0);
        let s = a + b;
        rows[k] = [a / s, b / s];
    }
    let s0 = sm.smoothed[0];
    let total = s0[0] + s0[1];
    Ok((TransitionMatrix::new(rows)?, [s0[0] / total, s0[1] / total]))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::copulas::{BivariateCopula, CopulaFamily};
    use crate::msrv::simulate_ms;
    use crate::vine::{RVineModel, RVineStructure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive path sum: log-likelihood, filtered and smoothed marginals
    /// and pairwise joints.
    pub(crate) fn brute_force(
        p: &TransitionMatrix,
        init: [f64; 2],
        ld: &[[f64; 2]],
    ) -> (f64, Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<[[f64; 2]; 2]>) {
        let n = ld.len();
        let path_weight = |path: &[usize]| -> f64 {
            let mut w = init[path[0]] * ld[0][path[0]].exp();
            for t in 1..path.len() {
                w *= p.get(path[t - 1], path[t]) * ld[t][path[t]].exp();
            }
            w
        };
        let mut total = 0.0;
        let mut smoothed = vec![[0.0; 2]; n];
        let mut pairwise = vec![[[0.0; 2]; 2]; n.saturating_sub(1)];
        for bits in 0..(1usize << n) {
            let path: Vec<usize> = (0..n).map(|t| (bits >> t) & 1).collect();
            let w = path_weight(&path);
            total += w;
            for t in 0..n {
                smoothed[t][path[t]] += w;
                if t + 1 < n {
                    pairwise[t][path[t]][path[t + 1]] += w;
                }
            }
        }
        let mut filtered = vec![[0.0; 2]; n];
        for t in 0..n {
            let mut acc = [0.0; 2];
            for bits in 0..(1usize << (t + 1)) {
                let path: Vec<usize> = (0..=t).map(|s| (bits >> s) & 1).collect();
                acc[path[t]] += path_weight(&path);
            }
            let s = acc[0] + acc[1];
            filtered[t] = [acc[0] / s, acc[1] / s];
        }
        for s in smoothed.iter_mut() {
            s[0] /= total;
            s[1] /= total;
        }
        for j in pairwise.iter_mut() {
            for row in j.iter_mut() {
                row[0] /= total;
                row[1] /= total;
            }
        }
        (total.ln(), filtered, smoothed, pairwise)
    }

    fn random_model(rng: &mut ChaCha8Rng) -> MsrVineModel {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let a = BivariateCopula::gauss(rng.random_range(-0.8..0.8)).unwrap();
        let b = BivariateCopula::gumbel(CopulaFamily::Gumbel180, rng.random_range(1.0..4.0)).unwrap();
        let p00 = rng.random_range(0.05..0.99);
        let p11 = rng.random_range(0.05..0.99);
        let i0 = rng.random_range(0.0..1.0);
        MsrVineModel::new(
            [RVineModel::new(s.clone(), vec![vec![a]]).unwrap(), RVineModel::new(s, vec![vec![b]]).unwrap()],
            TransitionMatrix::from_diagonal(p00, p11).unwrap(),
            [i0, 1.0 - i0],
        )
        .unwrap()
    }

    #[test]
    fn filter_and_smoother_match_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..30 {
            let m = random_model(&mut rng);
            let n = 3 + case % 6;
            let (u, _) = simulate_ms(&m, n, case as u64).unwrap();
            let f = hamilton_filter(&m, &u).unwrap();
            let sm = kim_smoother(&m, &f).unwrap();
            let ld = regime_log_densities(&m, &u).unwrap();
            let (ll, filt, smth, pw) = brute_force(&m.transition, m.initial, &ld);
            assert!((f.loglik - ll).abs() < 1e-10, "case {case}: {} vs {ll}", f.loglik);
            for t in 0..n {
                for k in 0..2 {
                    assert!((f.filtered[t][k] - filt[t][k]).abs() < 1e-10);
                    assert!((sm.smoothed[t][k] - smth[t][k]).abs() < 1e-10);
                }
            }
            for t in 0..n - 1 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert!((sm.pairwise[t][k][l] - pw[t][k][l]).abs() < 1e-10);
                    }
                }
            }
            assert_eq!(sm.smoothed[n - 1], f.filtered[n - 1]);
        }
    }

    #[test]
    fn pairwise_marginalizes_to_smoothed() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_model(&mut rng);
        let (u, _) = simulate_ms(&m, 300, 3).unwrap();
        let sm = kim_smoother(&m, &hamilton_filter(&m, &u).unwrap()).unwrap();
        for (t, j) in sm.pairwise.iter().enumerate() {
            for k in 0..2 {
                assert!((j[k][0] + j[k][1] - sm.smoothed[t][k]).abs() < 1e-10);
                assert!((j[0][k] + j[1][k] - sm.smoothed[t + 1][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identical_regimes_leave_predictions_unchanged() {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let r = RVineModel::new(s, vec![vec![BivariateCopula::gauss(0.4).unwrap()]]).unwrap();
        let p = TransitionMatrix::from_diagonal(0.9, 0.6).unwrap();
        let pi = p.stationary();
        let m = MsrVineModel::new([r.clone(), r.clone()], p, pi).unwrap();
        let u = r.simulate(50, 4).unwrap();
        let f = hamilton_filter(&m, &u).unwrap();
        let static_ll = r.log_likelihood(&u).unwrap();
        assert!((f.loglik - static_ll).abs() < 1e-9);
        for t in 0..50 {
            assert!((f.filtered[t][0] - f.predicted[t][0]).abs() < 1e-12);
        }
        let sm = kim_smoother(&m, &f).unwrap();
        for s in &sm.smoothed {
            assert!((s[0] - pi[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn absorbing_chain() {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let a = RVineModel::new(s.clone(), vec![vec![BivariateCopula::gauss(0.4).unwrap()]]).unwrap();
        let b = RVineModel::new(s, vec![vec![BivariateCopula::gauss(-0.4).unwrap()]]).unwrap();
        let m = MsrVineModel::new([a.clone(), b], TransitionMatrix::identity(), [1.0, 0.0]).unwrap();
        let u = a.simulate(40, 5).unwrap();
        let f = hamilton_filter(&m, &u).unwrap();
        assert!((f.loglik - a.log_likelihood(&u).unwrap()).abs() < 1e-9);
        let sm = kim_smoother(&m, &f).unwrap();
        assert!(sm.smoothed.iter().all(|s| s[0] == 1.0 && s[1] == 0.0));
    }

    #[test]
    fn transition_update_cases() {
        let stay = SmoothedOutput {
            smoothed: vec![[0.5, 0.5]; 3],
            pairwise: vec![[[0.5, 0.0], [0.0, 0.5]]; 2],
        };
        let (p, init) = update_transition(&stay).unwrap();
        assert_eq!(p, TransitionMatrix::identity());
        assert_eq!(init, [0.5, 0.5]);

        let uniform = SmoothedOutput { smoothed: vec![[0.5, 0.5]; 4], pairwise: vec![[[0.25, 0.25], [0.25, 0.25]]; 3] };
        let (p, _) = update_transition(&uniform).unwrap();
        assert_eq!(p.rows(), [[0.5, 0.5], [0.5, 0.5]]);

        // hand-built T = 4 table
        let pw = vec![[[0.6, 0.1], [0.2, 0.1]], [[0.7, 0.1], [0.0, 0.2]], [[0.5, 0.2], [0.1, 0.2]]];
        let smoothed = vec![[0.7, 0.3], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]];
        let (p, init) = update_transition(&SmoothedOutput { smoothed, pairwise: pw }).unwrap();
        // row 0: (0.6 + 0.7 + 0.5) / (0.7 + 0.8 + 0.7); row 1: (0.1 + 0.2 + 0.2) / (0.3 + 0.2 + 0.3)
        assert!((p.get(0, 0) - 1.8 / 2.2).abs() < 1e-12);
        assert!((p.get(1, 1) - 0.5 / 0.8).abs() < 1e-12);
        assert_eq!(init, [0.7, 0.3]);
        for r in p.rows() {
            assert!((r[0] + r[1] - 1.0).abs() < 1e-15);
        }

        let dead = SmoothedOutput { smoothed: vec![[1.0, 0.0]; 3], pairwise: vec![[[1.0, 0.0], [0.0, 0.0]]; 2] };
        assert!(matches!(update_transition(&dead), Err(Error::Degenerate(_))));
    }
}
