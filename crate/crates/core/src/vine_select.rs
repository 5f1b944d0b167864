//! Pair-copula estimation, AIC family selection, sequential vine fitting and
//! maximum-spanning-tree structure selection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{gumbel_ln_density_xy, BivariateCopula, CopulaFamily, StudentTConsts, NU_MAX, NU_MIN};
use crate::data::PseudoObservations;
use crate::dependence::{empirical_kendall_tau, weighted_kendall_tau};
use crate::error::{Error, Result};
use crate::optim::brent_minimize;
use crate::special::{norm_quantile, t_quantile};
use crate::vine::{edge_arguments, edge_outputs, Edge, EdgeOutputs, RVineModel, RVineStructure, UnionFind, VineModelFile};

/// Minimum sample size of a pair fit.
pub const MIN_PAIR_OBS: usize = 30;

const RHO_MAX: f64 = 0.9999;
const GUMBEL_THETA_MAX: f64 = 50.0;
const NU_GRID: [f64; 6] = [3.0, 5.0, 8.0, 15.0, 30.0, 100.0];
const PARAM_TOL: f64 = 1e-8;

/// `aic = -2 loglik + 2 k`, `bic = -2 loglik + k ln(n_obs)`.
pub fn information_criteria(loglik: f64, n_params: usize, n_obs: usize) -> (f64, f64) {
    let k = n_params as f64;
    let aic = -2.0 * loglik + 2.0 * k;
    let bic = -2.0 * loglik + k * (n_obs.max(1) as f64).ln();
    (aic, bic)
}

/// Result of a maximum-likelihood pair fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairFit {
    pub copula: BivariateCopula,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
}

fn unit_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Precondition(format!("{} weights for {n} observations", w.len())));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::Domain("weights must be finite and non-negative".into()));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Degenerate("all weights are zero".into()));
            }
            Ok(w.to_vec())
        }
    }
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Precondition(format!("pair columns have lengths {} and {}", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(Error::Precondition("a pair fit needs at least two observations".into()));
    }
    if let Some(x) = u.iter().chain(v).find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Domain(format!("pseudo-observation {x} outside (0, 1)")));
    }
    Ok(())
}

/// Maximum-likelihood fit of one family, optionally with observation weights.
///
/// One-parameter families are fitted by bounded Brent search; the Student-t
/// fit profiles `nu` over a coarse grid and refines it on the log scale with
/// `theta` re-optimized at every `nu`.
pub fn fit_family(u: &[f64], v: &[f64], family: CopulaFamily, weights: Option<&[f64]>) -> Result<PairFit> {
    check_pair(u, v)?;
    let w = unit_weights(u.len(), weights)?;
    let (copula, loglik, converged) = match family {
        CopulaFamily::Gauss => fit_gauss(u, v, &w)?,
        CopulaFamily::StudentT => fit_student_t(u, v, &w)?,
        _ => fit_gumbel(u, v, &w, family)?,
    };
    let mut fit = PairFit { copula, loglik, aic: information_criteria(loglik, family.n_params(), 1).0, converged };
    if !converged || !loglik.is_finite() {
        // fall back to the tau-inversion start when it is at least as good
        let tau = weighted_kendall_tau(u, v, &w).clamp(-0.95, 0.95);
        if let Ok(start) = BivariateCopula::from_tau(family, tau) {
            let ll: f64 = u.iter().zip(v).zip(&w).map(|((&a, &b), &wi)| wi * start.ln_density_unchecked(a, b)).sum();
            if ll.is_finite() && !(ll <= fit.loglik) {
                fit = PairFit { copula: start, loglik: ll, aic: -2.0 * ll + 2.0 * family.n_params() as f64, converged };
            }
        }
    }
    if !fit.loglik.is_finite() {
        return Err(Error::Numeric(format!("{family}: log-likelihood is not finite")));
    }
    Ok(fit)
}

fn fit_gauss(u: &[f64], v: &[f64], w: &[f64]) -> Result<(BivariateCopula, f64, bool)> {
    let (mut s11, mut s22, mut s12, mut sw) = (0.0, 0.0, 0.0, 0.0);
    for ((&a, &b), &wi) in u.iter().zip(v).zip(w) {
        let (z1, z2) = (norm_quantile(a), norm_quantile(b));
        s11 += wi * z1 * z1;
        s22 += wi * z2 * z2;
        s12 += wi * z1 * z2;
        sw += wi;
    }
    let nll = |rho: f64| {
        let one_m = 1.0 - rho * rho;
        0.5 * sw * one_m.ln() + (rho * rho * (s11 + s22) - 2.0 * rho * s12) / (2.0 * one_m)
    };
    let m = brent_minimize(nll, -RHO_MAX, RHO_MAX, PARAM_TOL, 200);
    Ok((BivariateCopula::gauss(m.x)?, -m.value, m.converged))
}

/// `(x, y, ln x, ln y)` with `x = -ln u'`, `y = -ln v'` on the rotated data.
fn gumbel_scores(u: &[f64], v: &[f64], family: CopulaFamily) -> Vec<[f64; 4]> {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let (a, b) = match family {
                CopulaFamily::Gumbel90 => (1.0 - a, b),
                CopulaFamily::Gumbel180 => (1.0 - a, 1.0 - b),
                CopulaFamily::Gumbel270 => (a, 1.0 - b),
                _ => (a, b),
            };
            let (x, y) = (-a.ln(), -b.ln());
            [x, y, x.ln(), y.ln()]
        })
        .collect()
}

fn fit_gumbel(u: &[f64], v: &[f64], w: &[f64], family: CopulaFamily) -> Result<(BivariateCopula, f64, bool)> {
    let scores = gumbel_scores(u, v, family);
    let nll = |theta: f64| -> f64 {
        -scores.iter().zip(w).map(|(s, &wi)| wi * gumbel_ln_density_xy(theta, s[0], s[1], s[2], s[3])).sum::<f64>()
    };
    let m = brent_minimize(nll, 1.0, GUMBEL_THETA_MAX, PARAM_TOL, 200);
    Ok((BivariateCopula::gumbel(family, m.x)?, -m.value, m.converged))
}

/// Best `theta` and its log-likelihood for fixed `nu`.
fn student_t_profile(u: &[f64], v: &[f64], w: &[f64], nu: f64) -> (f64, f64, bool) {
    let x: Vec<(f64, f64)> = u.iter().zip(v).map(|(&a, &b)| (t_quantile(a, nu), t_quantile(b, nu))).collect();
    let nll = |rho: f64| -> f64 {
        let k = StudentTConsts::new(rho, nu);
        -x.iter().zip(w).map(|(&(x1, x2), &wi)| wi * k.ln_density(x1, x2)).sum::<f64>()
    };
    let m = brent_minimize(nll, -RHO_MAX, RHO_MAX, PARAM_TOL, 200);
    (m.x, -m.value, m.converged)
}

fn fit_student_t(u: &[f64], v: &[f64], w: &[f64]) -> Result<(BivariateCopula, f64, bool)> {
    let grid: Vec<(f64, f64, bool)> = NU_GRID.iter().map(|&nu| student_t_profile(u, v, w, nu)).collect();
    let best = (0..grid.len())
        .max_by(|&i, &j| grid[i].1.total_cmp(&grid[j].1).then(j.cmp(&i)))
        .expect("grid is non-empty");
    let lo = if best == 0 { NU_MIN + 1e-3 } else { NU_GRID[best - 1] };
    let hi = NU_GRID.get(best + 1).copied().unwrap_or(NU_MAX);
    let mut cache = (NU_GRID[best], grid[best]);
    let m = brent_minimize(
        |ln_nu| {
            let nu = ln_nu.exp();
            let p = student_t_profile(u, v, w, nu);
            if p.1 > cache.1 .1 {
                cache = (nu, p);
            }
            -p.1
        },
        lo.ln(),
        hi.ln().min(NU_MAX.ln()),
        1e-4,
        40,
    );
    let (nu, (rho, ll, inner_ok)) = cache;
    let nu = nu.clamp(NU_MIN + 1e-3, NU_MAX);
    Ok((BivariateCopula::student_t(rho, nu)?, ll, inner_ok && m.converged))
}

/// Every candidate fit of [`fit_bivariate`], with the reason a family was skipped.
#[derive(Clone, Debug)]
pub struct CandidateFits {
    pub tau_hat: f64,
    pub fits: Vec<(CopulaFamily, std::result::Result<PairFit, String>)>,
}

impl CandidateFits {
    /// AIC-minimal fit; ties go to the family declared first.
    pub fn best(&self) -> Option<PairFit> {
        let mut best: Option<PairFit> = None;
        for fam in CopulaFamily::ALL {
            for (_, fit) in self.fits.iter().filter(|(f, _)| *f == fam) {
                if let Ok(fit) = fit {
                    if best.is_none_or(|b| fit.aic < b.aic) {
                        best = Some(*fit);
                    }
                }
            }
        }
        best
    }
}

fn check_not_constant(u: &[f64], v: &[f64]) -> Result<()> {
    for (name, col) in [("first", u), ("second", v)] {
        if col.iter().all(|&x| x == col[0]) {
            return Err(Error::Degenerate(format!("{name} margin is constant")));
        }
    }
    Ok(())
}

/// Fits every family of `families` whose sign constraint admits the sample tau.
pub fn fit_candidates(u: &[f64], v: &[f64], families: &[CopulaFamily]) -> Result<CandidateFits> {
    check_pair(u, v)?;
    if u.len() < MIN_PAIR_OBS {
        return Err(Error::Precondition(format!(
            "pair fit needs at least {MIN_PAIR_OBS} observations, got {}",
            u.len()
        )));
    }
    if families.is_empty() {
        return Err(Error::Precondition("empty family whitelist".into()));
    }
    check_not_constant(u, v)?;
    let tau_hat = empirical_kendall_tau(u, v)?.tau_hat;
    let fits = families
        .iter()
        .map(|&fam| {
            let r = if fam.admits_tau(tau_hat) {
                fit_family(u, v, fam, None).map_err(|e| e.to_string())
            } else {
                Err(format!("sample tau {tau_hat:.4} has the wrong sign"))
            };
            (fam, r)
        })
        .collect();
    Ok(CandidateFits { tau_hat, fits })
}

/// AIC-selected pair-copula among `families`.
pub fn fit_bivariate(u: &[f64], v: &[f64], families: &[CopulaFamily]) -> Result<PairFit> {
    let cands = fit_candidates(u, v, families)?;
    cands.best().ok_or_else(|| {
        Error::AllFitsFailed(
            cands.fits.iter().filter_map(|(f, r)| r.as_ref().err().map(|e| format!("{f}: {e}"))).collect(),
        )
    })
}

/// Per-edge outcome of a sequential fit. Variables are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub tree: usize,
    pub edge: usize,
    pub conditioned: [usize; 2],
    pub conditioning: Vec<usize>,
    pub family: CopulaFamily,
    pub theta: f64,
    pub nu: Option<f64>,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub tau_hat: f64,
    pub converged: bool,
}

/// A fitted vine with its information criteria.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: RVineModel,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub edges: Vec<EdgeFit>,
}

#[derive(Serialize, Deserialize)]
struct FitReportFile {
    model: VineModelFile,
    loglik: f64,
    n_params: usize,
    aic: f64,
    bic: f64,
    n_obs: usize,
    edges: Vec<EdgeFit>,
}

impl FitReport {
    fn assemble(model: RVineModel, edges: Vec<EdgeFit>, n_obs: usize) -> Self {
        let loglik = edges.iter().map(|e| e.loglik).sum();
        let n_params = edges.iter().map(|e| e.n_params).sum();
        let (aic, bic) = information_criteria(loglik, n_params, n_obs);
        Self { model, loglik, n_params, aic, bic, n_obs, edges }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FitReportFile {
            model: VineModelFile::from(&self.model),
            loglik: self.loglik,
            n_params: self.n_params,
            aic: self.aic,
            bic: self.bic,
            n_obs: self.n_obs,
            edges: self.edges.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: FitReportFile = serde_json::from_str(s)?;
        Ok(Self {
            model: f.model.into_model()?,
            loglik: f.loglik,
            n_params: f.n_params,
            aic: f.aic,
            bic: f.bic,
            n_obs: f.n_obs,
            edges: f.edges,
        })
    }

    /// Flat per-edge table with 1-based variables and labels.
    pub fn write_edges_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "tree", "edge", "conditioned", "conditioning", "family", "theta", "nu", "n_params", "loglik", "aic",
            "tau_hat",
        ])?;
        let label = |v: usize| self.model.labels[v].clone();
        for e in &self.edges {
            w.write_record([
                (e.tree + 1).to_string(),
                (e.edge + 1).to_string(),
                format!("{},{}", label(e.conditioned[0]), label(e.conditioned[1])),
                e.conditioning.iter().map(|&v| label(v)).collect::<Vec<_>>().join(";"),
                e.family.to_string(),
                e.theta.to_string(),
                e.nu.map(|x| x.to_string()).unwrap_or_default(),
                e.n_params.to_string(),
                e.loglik.to_string(),
                e.aic.to_string(),
                e.tau_hat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Candidate families per edge, indexed `[tree][edge]`. An empty list pins
/// the edge to the independence copula with no free parameter.
pub type FamilyPlan = Vec<Vec<Vec<CopulaFamily>>>;

/// The same whitelist on every edge.
pub fn uniform_plan(structure: &RVineStructure, families: &[CopulaFamily]) -> FamilyPlan {
    structure.trees().iter().map(|t| vec![families.to_vec(); t.len()]).collect()
}

fn columns_of(u: &PseudoObservations) -> Vec<Vec<f64>> {
    (0..u.dim()).map(|j| u.column(j)).collect()
}

fn check_sample(u: &PseudoObservations) -> Result<()> {
    if u.n_obs() < MIN_PAIR_OBS {
        return Err(Error::Precondition(format!(
            "vine fitting needs at least {MIN_PAIR_OBS} observations, got {}",
            u.n_obs()
        )));
    }
    if u.dim() < 2 {
        return Err(Error::Precondition("vine fitting needs at least two variables".into()));
    }
    for j in 0..u.dim() {
        let c = u.column(j);
        if c.iter().all(|&x| x == c[0]) {
            return Err(Error::Degenerate(format!("column {} is constant", u.labels[j])));
        }
    }
    Ok(())
}

fn fit_edge(tree: usize, k: usize, e: &Edge, x: &[f64], y: &[f64], families: &[CopulaFamily]) -> Result<(BivariateCopula, EdgeFit)> {
    let (copula, loglik, n_params, aic, tau_hat, converged) = if families.is_empty() {
        let tau = empirical_kendall_tau(x, y).map(|t| t.tau_hat).unwrap_or(0.0);
        (BivariateCopula::independence(), 0.0, 0, 0.0, tau, true)
    } else {
        let cands = fit_candidates(x, y, families).map_err(|err| edge_error(tree, k, e, err))?;
        let best = cands.best().ok_or_else(|| {
            edge_error(
                tree,
                k,
                e,
                Error::AllFitsFailed(
                    cands.fits.iter().filter_map(|(f, r)| r.as_ref().err().map(|m| format!("{f}: {m}"))).collect(),
                ),
            )
        })?;
        (best.copula, best.loglik, best.copula.n_params(), best.aic, cands.tau_hat, best.converged)
    };
    let rec = EdgeFit {
        tree,
        edge: k,
        conditioned: e.conditioned,
        conditioning: e.conditioning.clone(),
        family: copula.family(),
        theta: copula.theta(),
        nu: copula.nu(),
        n_params,
        loglik,
        aic,
        tau_hat,
        converged,
    };
    Ok((copula, rec))
}

fn edge_error(tree: usize, k: usize, e: &Edge, err: Error) -> Error {
    match err {
        Error::AllFitsFailed(mut d) => {
            d.insert(0, format!("tree {} edge {} ({e})", tree + 1, k + 1));
            Error::AllFitsFailed(d)
        }
        Error::Degenerate(m) => Error::Degenerate(format!("tree {} edge {} ({e}): {m}", tree + 1, k + 1)),
        Error::Precondition(m) => Error::Precondition(format!("tree {} edge {} ({e}): {m}", tree + 1, k + 1)),
        other => Error::Numeric(format!("tree {} edge {} ({e}): {other}", tree + 1, k + 1)),
    }
}

/// Sequential maximum likelihood on a fixed structure: tree 1 on the
/// pseudo-observations, every higher tree on h-transformed data, each edge's
/// family chosen by AIC within its whitelist.
pub fn fit_given_structure(u: &PseudoObservations, structure: &RVineStructure, plan: &FamilyPlan) -> Result<FitReport> {
    check_sample(u)?;
    if structure.dim() != u.dim() {
        return Err(Error::Precondition(format!(
            "structure has dimension {}, data has {}",
            structure.dim(),
            u.dim()
        )));
    }
    let shape_ok =
        plan.len() == structure.trees().len() && plan.iter().zip(structure.trees()).all(|(p, t)| p.len() == t.len());
    if !shape_ok {
        return Err(Error::Precondition("family plan must have one whitelist per edge".into()));
    }
    let columns = columns_of(u);
    let mut prev: Vec<EdgeOutputs> = Vec::new();
    let mut copulas = Vec::with_capacity(structure.trees().len());
    let mut records = Vec::new();
    for (t, tree) in structure.trees().iter().enumerate() {
        let fitted: Vec<(BivariateCopula, EdgeFit, EdgeOutputs)> = (0..tree.len())
            .into_par_iter()
            .map(|k| {
                let [x, y] = edge_arguments(structure, t, k, &columns, &prev);
                let (c, rec) = fit_edge(t, k, &tree[k], x, y, &plan[t][k])?;
                let out = if t + 1 < structure.trees().len() { edge_outputs(&c, x, y)? } else { EdgeOutputs::default() };
                Ok((c, rec, out))
            })
            .collect::<Result<_>>()?;
        let mut tree_copulas = Vec::with_capacity(tree.len());
        prev = Vec::with_capacity(tree.len());
        for (c, rec, out) in fitted {
            tree_copulas.push(c);
            records.push(rec);
            prev.push(out);
        }
        copulas.push(tree_copulas);
    }
    let model = RVineModel::new(structure.clone(), copulas)?.with_labels(u.labels.clone(), u.roles.clone())?;
    Ok(FitReport::assemble(model, records, u.n_obs()))
}

/// Sequential weighted maximum likelihood with one fixed family per edge.
/// Returns the fitted model and its weighted log-likelihood.
pub fn fit_weighted(
    u: &PseudoObservations,
    structure: &RVineStructure,
    families: &[Vec<CopulaFamily>],
    weights: &[f64],
) -> Result<(RVineModel, f64)> {
    let columns = columns_of(u);
    let (model, ll) = fit_weighted_columns(&columns, structure, families, weights)?;
    Ok((model.with_labels(u.labels.clone(), u.roles.clone())?, ll))
}

pub(crate) fn fit_weighted_columns(
    columns: &[Vec<f64>],
    structure: &RVineStructure,
    families: &[Vec<CopulaFamily>],
    weights: &[f64],
) -> Result<(RVineModel, f64)> {
    let shape_ok = families.len() == structure.trees().len()
        && families.iter().zip(structure.trees()).all(|(f, t)| f.len() == t.len());
    if !shape_ok || columns.len() != structure.dim() {
        return Err(Error::Precondition("one family per edge and one column per variable required".into()));
    }
    let mut prev: Vec<EdgeOutputs> = Vec::new();
    let mut copulas = Vec::with_capacity(families.len());
    let mut total = 0.0;
    for (t, tree) in structure.trees().iter().enumerate() {
        let fitted: Vec<(PairFit, EdgeOutputs)> = (0..tree.len())
            .into_par_iter()
            .map(|k| {
                let [x, y] = edge_arguments(structure, t, k, columns, &prev);
                let fit = fit_family(x, y, families[t][k], Some(weights)).map_err(|e| edge_error(t, k, &tree[k], e))?;
                let out = if t + 1 < structure.trees().len() { edge_outputs(&fit.copula, x, y)? } else { EdgeOutputs::default() };
                Ok((fit, out))
            })
            .collect::<Result<_>>()?;
        let mut tree_copulas = Vec::with_capacity(tree.len());
        prev = Vec::with_capacity(tree.len());
        for (fit, out) in fitted {
            total += fit.loglik;
            tree_copulas.push(fit.copula);
            prev.push(out);
        }
        copulas.push(tree_copulas);
    }
    Ok((RVineModel::new(structure.clone(), copulas)?, total))
}

/// Maximum spanning tree by Kruskal's algorithm on `(weight, a, b)` with
/// `a < b`; equal weights are taken in lexicographic `(a, b)` order.
pub fn maximum_spanning_tree(n_nodes: usize, candidates: &[(f64, usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut order: Vec<&(f64, usize, usize)> = candidates.iter().collect();
    order.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
    let mut uf = UnionFind::new(n_nodes);
    let mut chosen = Vec::with_capacity(n_nodes.saturating_sub(1));
    for &&(_, a, b) in &order {
        if uf.union(a, b) {
            chosen.push((a, b));
        }
    }
    if chosen.len() + 1 != n_nodes {
        return Err(Error::Structure("candidate graph is not connected".into()));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// A node of the tree currently being built: an edge of the previous tree
/// with its conditional outputs.
struct Node {
    edge: Edge,
    out: EdgeOutputs,
}

impl Node {
    fn output_for(&self, var: usize) -> &[f64] {
        if self.edge.conditioned[0] == var {
            &self.out.first
        } else {
            &self.out.second
        }
    }
}

/// Structure selection by maximum spanning trees on `|tau_hat|`, tree by
/// tree, with per-edge AIC family selection among `families`.
pub fn select_structure(u: &PseudoObservations, families: &[CopulaFamily]) -> Result<FitReport> {
    check_sample(u)?;
    if families.is_empty() {
        return Err(Error::Precondition("empty family whitelist".into()));
    }
    let d = u.dim();
    let columns = columns_of(u);
    let mut trees: Vec<Vec<Edge>> = Vec::with_capacity(d - 1);
    let mut copulas: Vec<Vec<BivariateCopula>> = Vec::with_capacity(d - 1);
    let mut records = Vec::new();

    // tree 1
    let mut cands = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            cands.push((empirical_kendall_tau(&columns[a], &columns[b])?.tau_hat.abs(), a, b));
        }
    }
    let links = maximum_spanning_tree(d, &cands)?;
    let mut nodes: Vec<Node> = Vec::with_capacity(links.len());
    let mut tree_cops = Vec::new();
    for (k, &(a, b)) in links.iter().enumerate() {
        let e = Edge::new(a, b, []);
        let (c, rec) = fit_edge(0, k, &e, &columns[a], &columns[b], families)?;
        let out = if d > 2 { edge_outputs(&c, &columns[a], &columns[b])? } else { EdgeOutputs::default() };
        tree_cops.push(c);
        records.push(rec);
        nodes.push(Node { edge: e, out });
    }
    trees.push(nodes.iter().map(|n| n.edge.clone()).collect());
    copulas.push(tree_cops);

    for t in 1..d - 1 {
        // proximity: nodes p and q must share a node of the previous tree,
        // i.e. their constraint sets overlap in all but one element
        let mut cands = Vec::new();
        let mut pair_edges = Vec::new();
        for p in 0..nodes.len() {
            for q in p + 1..nodes.len() {
                let (cp, cq) = (nodes[p].edge.constraint_set(), nodes[q].edge.constraint_set());
                let shared: Vec<usize> = cp.iter().copied().filter(|v| cq.contains(v)).collect();
                if shared.len() != t {
                    continue;
                }
                let a = *cp.iter().find(|v| !cq.contains(v)).expect("sets differ");
                let b = *cq.iter().find(|v| !cp.contains(v)).expect("sets differ");
                if !nodes[p].edge.contains_conditioned(a) || !nodes[q].edge.contains_conditioned(b) {
                    continue;
                }
                let tau = empirical_kendall_tau(nodes[p].output_for(a), nodes[q].output_for(b))?.tau_hat;
                cands.push((tau.abs(), p, q));
                pair_edges.push(((p, q), Edge::new(a, b, shared)));
            }
        }
        let links = maximum_spanning_tree(nodes.len(), &cands)?;
        let last = t + 1 == d - 1;
        let fitted: Vec<(BivariateCopula, EdgeFit, Node)> = links
            .par_iter()
            .enumerate()
            .map(|(k, &(p, q))| {
                let e = pair_edges.iter().find(|(pq, _)| *pq == (p, q)).expect("link is a candidate").1.clone();
                let x = nodes[p].output_for(e.conditioned[0]);
                let y = nodes[q].output_for(e.conditioned[1]);
                let (c, rec) = fit_edge(t, k, &e, x, y, families)?;
                let out = if last { EdgeOutputs::default() } else { edge_outputs(&c, x, y)? };
                Ok((c, rec, Node { edge: e, out }))
            })
            .collect::<Result<_>>()?;
        let mut tree_cops = Vec::with_capacity(fitted.len());
        let mut next = Vec::with_capacity(fitted.len());
        for (c, rec, node) in fitted {
            tree_cops.push(c);
            records.push(rec);
            next.push(node);
        }
        trees.push(next.iter().map(|n| n.edge.clone()).collect());
        copulas.push(tree_cops);
        nodes = next;
    }
    let structure = RVineStructure::new(d, trees)?;
    let model = RVineModel::new(structure, copulas)?.with_labels(u.labels.clone(), u.roles.clone())?;
    Ok(FitReport::assemble(model, records, u.n_obs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simulate_pair(c: BivariateCopula, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let m = RVineModel::new(s, vec![vec![c]]).unwrap();
        let u = m.simulate(n, seed).unwrap();
        (u.column(0), u.column(1))
    }

    #[test]
    fn information_criteria_examples() {
        let (aic, bic) = information_criteria(2027.61, 7, 3434);
        assert!((aic + 4041.22).abs() < 0.05);
        assert!((bic + 3998.23).abs() < 0.05);
        assert_eq!(information_criteria(0.0, 0, 100), (0.0, 0.0));
        let (aic, bic) = information_criteria(8973.48, 11, 3434);
        assert!((aic + 17924.96).abs() < 0.05);
        assert!((bic + 17857.4).abs() < 0.1);
    }

    #[test]
    fn gauss_fit_recovers_theta() {
        let (u, v) = simulate_pair(BivariateCopula::gauss(0.5).unwrap(), 5000, 1);
        let f = fit_family(&u, &v, CopulaFamily::Gauss, None).unwrap();
        assert!((0.47..=0.53).contains(&f.copula.theta()), "{}", f.copula);
        assert!(f.converged);
    }

    #[test]
    fn fits_maximize_the_likelihood() {
        let (u, v) = simulate_pair(BivariateCopula::student_t(-0.4, 5.0).unwrap(), 800, 2);
        for fam in [CopulaFamily::Gauss, CopulaFamily::StudentT, CopulaFamily::Gumbel90, CopulaFamily::Gumbel270] {
            let f = fit_family(&u, &v, fam, None).unwrap();
            let ll = |c: &BivariateCopula| u.iter().zip(&v).map(|(&a, &b)| c.ln_density_unchecked(a, b)).sum::<f64>();
            assert!((ll(&f.copula) - f.loglik).abs() < 1e-8);
            // perturbing any parameter must not improve the fit
            let th = f.copula.theta();
            for dt in [-1e-3, 1e-3] {
                let alt = BivariateCopula::new(fam, th + dt, f.copula.nu());
                if let Ok(alt) = alt {
                    assert!(ll(&alt) <= f.loglik + 1e-6, "{fam}: {alt} beats {}", f.copula);
                }
            }
            if let Some(nu) = f.copula.nu() {
                for dn in [-0.05, 0.05] {
                    if let Ok(alt) = BivariateCopula::student_t(th, nu + dn) {
                        assert!(ll(&alt) <= f.loglik + 1e-4, "{alt} beats {}", f.copula);
                    }
                }
            }
        }
    }

    #[test]
    fn weighted_fit_with_unit_weights_matches_unweighted() {
        let (u, v) = simulate_pair(BivariateCopula::gumbel(CopulaFamily::Gumbel180, 1.8).unwrap(), 500, 3);
        let a = fit_family(&u, &v, CopulaFamily::Gumbel180, None).unwrap();
        let b = fit_family(&u, &v, CopulaFamily::Gumbel180, Some(&vec![1.0; 500])).unwrap();
        assert!((a.copula.theta() - b.copula.theta()).abs() < 1e-12);
        // doubling all weights doubles the log-likelihood at the same optimum
        let c = fit_family(&u, &v, CopulaFamily::Gumbel180, Some(&vec![2.0; 500])).unwrap();
        assert!((c.loglik - 2.0 * a.loglik).abs() < 1e-6);
        assert!((a.copula.theta() - c.copula.theta()).abs() < 1e-6);
    }

    #[test]
    fn bivariate_selection_respects_sign_and_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        let v: Vec<f64> = u.iter().map(|&x| (1.0 - x + rng.random_range(-0.01..0.01)).clamp(1e-4, 1.0 - 1e-4)).collect();
        let c = fit_candidates(&u, &v, &CopulaFamily::ALL).unwrap();
        let f = c.best().unwrap();
        assert!(!matches!(f.copula.family(), CopulaFamily::Gumbel | CopulaFamily::Gumbel180));
        for (fam, r) in &c.fits {
            if matches!(fam, CopulaFamily::Gumbel | CopulaFamily::Gumbel180) {
                assert!(r.is_err());
            }
        }
        assert!(fit_bivariate(&u[..30], &v[..30], &CopulaFamily::ALL).is_ok());
        assert!(matches!(fit_bivariate(&u[..29], &v[..29], &CopulaFamily::ALL), Err(Error::Precondition(_))));
        let konst = vec![0.5; 100];
        assert!(matches!(fit_bivariate(&konst, &u[..100], &CopulaFamily::ALL), Err(Error::Degenerate(_))));
    }

    #[test]
    fn only_incompatible_families_fail_with_diagnostics() {
        let (u, v) = simulate_pair(BivariateCopula::gauss(0.7).unwrap(), 200, 5);
        match fit_bivariate(&u, &v, &[CopulaFamily::Gumbel90, CopulaFamily::Gumbel270]) {
            Err(Error::AllFitsFailed(d)) => assert_eq!(d.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aic_choice_is_minimal() {
        let (u, v) = simulate_pair(BivariateCopula::gumbel(CopulaFamily::Gumbel, 1.6).unwrap(), 600, 6);
        let c = fit_candidates(&u, &v, &CopulaFamily::ALL).unwrap();
        let best = c.best().unwrap();
        for (_, r) in &c.fits {
            if let Ok(f) = r {
                assert!(best.aic <= f.aic);
            }
        }
    }

    #[test]
    fn mst_on_three_variables() {
        let links = maximum_spanning_tree(3, &[(0.8, 0, 1), (0.3, 0, 2), (0.6, 1, 2)]).unwrap();
        assert_eq!(links, vec![(0, 1), (1, 2)]);
        // ties resolve lexicographically
        let links = maximum_spanning_tree(3, &[(0.5, 1, 2), (0.5, 0, 2), (0.5, 0, 1)]).unwrap();
        assert_eq!(links, vec![(0, 1), (0, 2)]);
        assert!(maximum_spanning_tree(3, &[(0.5, 0, 1)]).is_err());
    }

    fn sample_model() -> RVineModel {
        let s = RVineStructure::new(3, vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]])
            .unwrap();
        RVineModel::new(
            s,
            vec![
                vec![BivariateCopula::from_tau(CopulaFamily::Gumbel90, -0.5).unwrap(), BivariateCopula::from_tau(CopulaFamily::Gauss, 0.6).unwrap()],
                vec![BivariateCopula::student_t(0.3, 5.0).unwrap()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn sequential_loglik_matches_vine_density() {
        let m = sample_model();
        let u = m.simulate(400, 8).unwrap();
        let r = fit_given_structure(&u, m.structure(), &uniform_plan(m.structure(), &CopulaFamily::ALL)).unwrap();
        let direct = r.model.log_likelihood(&u).unwrap();
        assert!((direct - r.loglik).abs() < 1e-6, "{direct} vs {}", r.loglik);
        assert_eq!(r.n_params, r.model.n_params());
        assert!((r.aic - (-2.0 * r.loglik + 2.0 * r.n_params as f64)).abs() < 1e-9);
    }

    #[test]
    fn empty_whitelist_pins_independence() {
        let m = sample_model();
        let u = m.simulate(300, 9).unwrap();
        let mut plan = uniform_plan(m.structure(), &[CopulaFamily::Gauss]);
        plan[1][0].clear();
        let r = fit_given_structure(&u, m.structure(), &plan).unwrap();
        assert_eq!(r.n_params, 2);
        assert_eq!(r.model.copula(1, 0).theta(), 0.0);
    }

    #[test]
    fn selection_is_consistent_with_its_own_fit() {
        let m = sample_model();
        let u = m.simulate(500, 10).unwrap();
        let r = select_structure(&u, &CopulaFamily::ALL).unwrap();
        assert!(r.model.structure().validate().is_valid());
        let direct = r.model.log_likelihood(&u).unwrap();
        assert!((direct - r.loglik).abs() < 1e-6);
        let mut t1: Vec<[usize; 2]> = r.model.structure().trees()[0].iter().map(|e| e.conditioned).collect();
        t1.sort();
        assert_eq!(t1, vec![[0, 1], [1, 2]]);
    }

    #[test]
    fn fit_report_json_round_trip() {
        let m = sample_model();
        let u = m.simulate(200, 11).unwrap();
        let r = fit_given_structure(&u, m.structure(), &uniform_plan(m.structure(), &[CopulaFamily::Gauss])).unwrap();
        let back = FitReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.model, r.model);
        assert_eq!(back.edges, r.edges);
        let mut buf = Vec::new();
        r.write_edges_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
