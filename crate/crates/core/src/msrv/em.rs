use serde::{Deserialize, Serialize};

use super::filter::{filter_log_densities, regime_log_densities, smooth, update_transition};
use super::{MsrVineModel, TransitionMatrix};
use crate::copulas::{BivariateCopula, CopulaFamily};
use crate::data::PseudoObservations;
use crate::dependence::empirical_kendall_tau;
use crate::error::{Error, Result};
use crate::vine::{RVineModel, RVineStructure};
use crate::vine_select::fit_weighted;

/// Structure and fixed pair-copula families of one regime.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeSpec {
    pub structure: RVineStructure,
    /// One family per edge, indexed like `structure.trees()`.
    pub families: Vec<Vec<CopulaFamily>>,
}

impl RegimeSpec {
    pub fn new(structure: RVineStructure, families: Vec<Vec<CopulaFamily>>) -> Result<Self> {
        let ok = families.len() == structure.trees().len()
            && families.iter().zip(structure.trees()).all(|(f, t)| f.len() == t.len());
        if !ok {
            return Err(Error::Precondition("regime spec needs one family per edge".into()));
        }
        Ok(Self { structure, families })
    }

    /// The structure and families of a fitted model.
    pub fn of(model: &RVineModel) -> Self {
        Self {
            structure: model.structure().clone(),
            families: model.copulas().iter().map(|t| t.iter().map(|c| c.family()).collect()).collect(),
        }
    }
}

/// How the distribution of the first state is re-estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialRule {
    /// First smoothed probability row.
    #[default]
    Smoothed,
    /// Stationary distribution of the current transition matrix.
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Relative change of the observed-data log-likelihood that stops the loop.
    pub tol: f64,
    pub max_iter: usize,
    pub initial: InitialRule,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100, initial: InitialRule::Smoothed }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Observed-data log-likelihood of every evaluated iterate, starting with the initial model.
    pub logliks: Vec<f64>,
    /// `(iteration, drop)` for every decrease larger than `1e-6`.
    pub decreases: Vec<(usize, f64)>,
    pub converged: bool,
    /// `(iteration, regime)` pairs whose M-step proposal lowered the
    /// weighted log-likelihood and was discarded.
    pub rejected_m_steps: Vec<(usize, usize)>,
    /// Index into `logliks` of the returned iterate.
    pub best_iteration: usize,
    pub initial_rule: InitialRule,
    /// The two regimes ended up with the same copulas, so the transition
    /// matrix is not identified.
    pub regimes_indistinguishable: bool,
}

fn check_spec(spec: &RegimeSpec, model: &RVineModel, which: &str) -> Result<()> {
    if spec.structure != *model.structure() {
        return Err(Error::Precondition(format!("{which} initial model does not use the regime's structure")));
    }
    if RegimeSpec::of(model).families != spec.families {
        return Err(Error::Precondition(format!("{which} initial model does not use the regime's families")));
    }
    Ok(())
}

fn same_copulas(a: &RVineModel, b: &RVineModel) -> bool {
    a.structure() == b.structure()
        && a.copulas().iter().flatten().zip(b.copulas().iter().flatten()).all(|(x, y)| {
            x.family() == y.family()
                && (x.theta() - y.theta()).abs() < 1e-6
                && match (x.nu(), y.nu()) {
                    (Some(p), Some(q)) => (p - q).abs() < 1e-4,
                    (None, None) => true,
                    _ => false,
                }
        })
}

/// Expectation-maximization for the two-regime model. The E-step runs the
/// filter and smoother; the M-step refits every edge of each regime by
/// smoothed-probability-weighted maximum likelihood, tree by tree, with the
/// regime's candidate families, then updates the transition matrix. Returns the iterate
/// with the highest observed-data log-likelihood.
pub fn em_fit(
    u: &PseudoObservations,
    spec: [&RegimeSpec; 2],
    init: &MsrVineModel,
    opts: &EmOptions,
) -> Result<(MsrVineModel, EmTrace)> {
    if init.dim() != u.dim() || spec[0].structure.dim() != u.dim() || spec[1].structure.dim() != u.dim() {
        return Err(Error::Precondition("specs, initial model and data must share the dimension".into()));
    }
    check_spec(spec[0], &init.regimes[0], "normal")?;
    check_spec(spec[1], &init.regimes[1], "abnormal")?;
    let mut trace = EmTrace { initial_rule: opts.initial, ..EmTrace::default() };
    let mut current = init.clone();
    let mut best = init.clone();
    let mut best_ll = f64::NEG_INFINITY;
    for iter in 0..=opts.max_iter {
        let ld = regime_log_densities(&current, u)?;
        let f = filter_log_densities(&current.transition, current.initial, &ld)?;
        trace.logliks.push(f.loglik);
        if f.loglik > best_ll {
            best_ll = f.loglik;
            best = current.clone();
            trace.best_iteration = iter;
        }
        if iter > 0 {
            let prev = trace.logliks[iter - 1];
            if prev - f.loglik > 1e-6 {
                trace.decreases.push((iter, prev - f.loglik));
            }
            if (f.loglik - prev).abs() <= opts.tol * prev.abs().max(1.0) {
                trace.converged = true;
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }
        let sm = smooth(&current.transition, &f)?;
        let weights: [Vec<f64>; 2] = [
            sm.smoothed.iter().map(|s| s[0]).collect(),
            sm.smoothed.iter().map(|s| s[1]).collect(),
        ];
        let (r0, r1) = rayon::join(
            || fit_weighted(u, &spec[0].structure, &spec[0].families, &weights[0]),
            || fit_weighted(u, &spec[1].structure, &spec[1].families, &weights[1]),
        );
        let proposals = [r0.map_err(|e| regime_error(0, e))?.0, r1.map_err(|e| regime_error(1, e))?.0];
        // the tree-by-tree M-step need not raise the weighted log-likelihood;
        // backtracking towards the old parameters and keeping them as a last
        // resort makes this a generalized EM step, so the observed
        // log-likelihood cannot fall
        let mut regimes = Vec::with_capacity(2);
        for (k, proposal) in proposals.into_iter().enumerate() {
            let q_old: f64 = ld.iter().zip(&weights[k]).map(|(l, &w)| w * l[k]).sum();
            let mut accepted = None;
            for alpha in [1.0, 0.5, 0.25] {
                let cand = blend(&current.regimes[k], &proposal, alpha)?;
                let q: f64 = cand.log_density_rows(u)?.iter().zip(&weights[k]).map(|(l, &w)| w * l).sum();
                if q >= q_old {
                    accepted = Some(cand);
                    break;
                }
            }
            regimes.push(accepted.unwrap_or_else(|| {
                trace.rejected_m_steps.push((iter + 1, k));
                current.regimes[k].clone()
            }));
        }
        let r1 = regimes.pop().expect("two regimes");
        let r0 = regimes.pop().expect("two regimes");
        let (p, smoothed_initial) = update_transition(&sm)?;
        let initial = match opts.initial {
            InitialRule::Smoothed => smoothed_initial,
            InitialRule::Stationary => p.stationary(),
        };
        current = MsrVineModel::new([r0, r1], p, initial)?;
    }
    trace.regimes_indistinguishable = same_copulas(&best.regimes[0], &best.regimes[1]);
    Ok((best, trace))
}

/// Edge-wise parameter interpolation `old + alpha (new - old)`; both models
/// share structure and families.
fn blend(old: &RVineModel, new: &RVineModel, alpha: f64) -> Result<RVineModel> {
    if alpha == 1.0 {
        return Ok(new.clone());
    }
    let copulas = old
        .copulas()
        .iter()
        .zip(new.copulas())
        .map(|(to, tn)| {
            to.iter()
                .zip(tn)
                .map(|(a, b)| {
                    let theta = a.theta() + alpha * (b.theta() - a.theta());
                    let nu = a.nu().zip(b.nu()).map(|(x, y)| x + alpha * (y - x));
                    BivariateCopula::new(b.family(), theta, nu)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    RVineModel::new(new.structure().clone(), copulas)?.with_labels(new.labels.clone(), new.roles.clone())
}

fn regime_error(k: usize, e: Error) -> Error {
    let name = if k == 0 { "normal" } else { "abnormal" };
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("{name} regime: {m}")),
        Error::AllFitsFailed(mut d) => {
            d.insert(0, format!("{name} regime"));
            Error::AllFitsFailed(d)
        }
        other => Error::Numeric(format!("{name} regime: {other}")),
    }
}

/// Rolling first-tree Kendall's tau over centred windows of `window` rows.
fn rolling_tree1_tau(u: &PseudoObservations, s: &RVineStructure, window: usize) -> Result<Vec<Vec<f64>>> {
    let n = u.n_obs();
    let cols: Vec<Vec<f64>> = (0..u.dim()).map(|j| u.column(j)).collect();
    let half = window / 2;
    let mut feats = vec![Vec::with_capacity(s.trees()[0].len()); n];
    for e in &s.trees()[0] {
        let [a, b] = e.conditioned;
        for (t, f) in feats.iter_mut().enumerate() {
            let lo = t.saturating_sub(half).min(n - window);
            let hi = lo + window;
            let tau = empirical_kendall_tau(&cols[a][lo..hi], &cols[b][lo..hi]).map(|x| x.tau_hat).unwrap_or(0.0);
            f.push(tau);
        }
    }
    Ok(feats)
}

/// Lloyd's 2-means started from the two extreme points of the first feature.
fn two_means(x: &[Vec<f64>]) -> Vec<usize> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let lo = (0..x.len()).min_by(|&i, &j| x[i][0].total_cmp(&x[j][0])).unwrap_or(0);
    let hi = (0..x.len()).max_by(|&i, &j| x[i][0].total_cmp(&x[j][0])).unwrap_or(0);
    let mut centres = [x[lo].clone(), x[hi].clone()];
    let mut labels = vec![0; x.len()];
    for _ in 0..100 {
        let next: Vec<usize> =
            x.iter().map(|p| usize::from(dist(p, &centres[1]) < dist(p, &centres[0]))).collect();
        let changed = next != labels;
        labels = next;
        for (k, c) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = x.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for (i, ci) in c.iter_mut().enumerate() {
                    *ci = members.iter().map(|p| p[i]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Starting model: 2-means on rolling first-tree tau splits the sample,
/// each regime spec is fitted on one part, the transition matrix has
/// diagonal 0.95, and of the two ways to pair parts with specs the one with
/// the higher filter log-likelihood is kept.
pub fn default_init(u: &PseudoObservations, spec: [&RegimeSpec; 2]) -> Result<MsrVineModel> {
    let n = u.n_obs();
    if n < 60 {
        return Err(Error::Precondition(format!("default initialization needs at least 60 observations, got {n}")));
    }
    let window = 30.min(n);
    let feats = rolling_tree1_tau(u, &spec[0].structure, window)?;
    let mut labels = two_means(&feats);
    let count1 = labels.iter().filter(|&&l| l == 1).count();
    if count1 < 30 || n - count1 < 30 {
        // no usable split: first and second half
        labels = (0..n).map(|t| usize::from(t >= n / 2)).collect();
    }
    let p = TransitionMatrix::from_diagonal(0.95, 0.95)?;
    let mut best: Option<(f64, MsrVineModel)> = None;
    for assign in [[0usize, 1], [1, 0]] {
        let mut regimes = Vec::with_capacity(2);
        for k in 0..2 {
            let w: Vec<f64> = labels.iter().map(|&l| if l == assign[k] { 1.0 } else { 0.0 }).collect();
            regimes.push(fit_weighted(u, &spec[k].structure, &spec[k].families, &w)?.0);
        }
        let r1 = regimes.pop().expect("two regimes");
        let r0 = regimes.pop().expect("two regimes");
        let m = MsrVineModel::new([r0, r1], p, [0.5, 0.5])?;
        let ll = filter_log_densities(&m.transition, m.initial, &regime_log_densities(&m, u)?)?.loglik;
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, m));
        }
    }
    Ok(best.expect("two candidates evaluated").1)
}
