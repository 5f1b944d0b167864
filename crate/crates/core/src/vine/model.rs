use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::structure::{RVineStructure, Source};
use crate::copulas::{AssetRole, BivariateCopula};
use crate::data::PseudoObservations;
use crate::error::{Error, Result};

/// Conditional values are kept inside `[CLAMP, 1 - CLAMP]` between trees.
pub const CLAMP: f64 = 1e-12;

/// An R-vine structure with one pair-copula per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RVineModel {
    structure: RVineStructure,
    /// Indexed like `structure.trees()`.
    copulas: Vec<Vec<BivariateCopula>>,
    pub labels: Vec<String>,
    pub roles: Vec<AssetRole>,
}

/// Per-edge conditional outputs over a batch of rows:
/// `first = F(a | b, D)`, `second = F(b | a, D)`.
#[derive(Clone, Debug, Default)]
pub(crate) struct EdgeOutputs {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[inline]
pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(CLAMP, 1.0 - CLAMP)
}

/// Arguments `(F(a | D), F(b | D))` of edge `(tree, edge)` for every row.
pub(crate) fn edge_arguments<'a>(
    structure: &RVineStructure,
    tree: usize,
    edge: usize,
    columns: &'a [Vec<f64>],
    prev: &'a [EdgeOutputs],
) -> [&'a [f64]; 2] {
    let pick = |s: Source| -> &'a [f64] {
        match s {
            Source::Variable(v) => &columns[v],
            Source::Parent { edge, first: true } => &prev[edge].first,
            Source::Parent { edge, first: false } => &prev[edge].second,
        }
    };
    let [s0, s1] = structure.sources(tree, edge);
    [pick(s0), pick(s1)]
}

/// Both h-function outputs of `c` evaluated at rows `(x, y)`.
pub(crate) fn edge_outputs(c: &BivariateCopula, x: &[f64], y: &[f64]) -> Result<EdgeOutputs> {
    let ct = c.transposed();
    let mut out = EdgeOutputs { first: Vec::with_capacity(x.len()), second: Vec::with_capacity(x.len()) };
    for (&a, &b) in x.iter().zip(y) {
        let h1 = c.h_unchecked(a, b);
        let h2 = ct.h_unchecked(b, a);
        if h1.is_nan() || h2.is_nan() {
            return Err(Error::Numeric(format!("{c}: conditional value is NaN at ({a}, {b})")));
        }
        out.first.push(clamp_unit(h1));
        out.second.push(clamp_unit(h2));
    }
    Ok(out)
}

impl RVineModel {
    pub fn new(structure: RVineStructure, copulas: Vec<Vec<BivariateCopula>>) -> Result<Self> {
        let shape_ok = copulas.len() == structure.trees().len()
            && copulas.iter().zip(structure.trees()).all(|(c, t)| c.len() == t.len());
        if !shape_ok {
            return Err(Error::Structure("one pair-copula per edge is required".into()));
        }
        let d = structure.dim();
        Ok(Self {
            structure,
            copulas,
            labels: (1..=d).map(|j| format!("V{j}")).collect(),
            roles: vec![AssetRole::Eq; d],
        })
    }

    /// Every edge gets the independence copula.
    pub fn independence(structure: RVineStructure) -> Self {
        let copulas = structure.trees().iter().map(|t| vec![BivariateCopula::independence(); t.len()]).collect();
        Self::new(structure, copulas).expect("shapes match by construction")
    }

    pub fn with_labels(mut self, labels: Vec<String>, roles: Vec<AssetRole>) -> Result<Self> {
        if labels.len() != self.dim() || roles.len() != self.dim() {
            return Err(Error::Precondition("one label and role per variable required".into()));
        }
        self.labels = labels;
        self.roles = roles;
        Ok(self)
    }

    pub fn structure(&self) -> &RVineStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn copulas(&self) -> &[Vec<BivariateCopula>] {
        &self.copulas
    }

    pub fn copula(&self, tree: usize, edge: usize) -> &BivariateCopula {
        &self.copulas[tree][edge]
    }

    pub fn n_params(&self) -> usize {
        self.copulas.iter().flatten().map(|c| c.n_params()).sum()
    }

    /// Log-density at one point of `(0,1)^d`.
    pub fn log_density(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::Precondition(format!("expected {} coordinates, got {}", self.dim(), u.len())));
        }
        let cols: Vec<Vec<f64>> = u.iter().map(|&x| vec![x]).collect();
        Ok(self.log_density_columns(&cols)?[0])
    }

    /// Per-row log-densities of a data set.
    pub fn log_density_rows(&self, data: &PseudoObservations) -> Result<Vec<f64>> {
        if data.dim() != self.dim() {
            return Err(Error::Precondition(format!(
                "model has dimension {}, data has {}",
                self.dim(),
                data.dim()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..data.dim()).map(|j| data.column(j)).collect();
        self.log_density_columns(&cols)
    }

    pub fn log_likelihood(&self, data: &PseudoObservations) -> Result<f64> {
        Ok(self.log_density_rows(data)?.iter().sum())
    }

    pub(crate) fn log_density_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = columns.first().map_or(0, |c| c.len());
        for (j, col) in columns.iter().enumerate() {
            if let Some(x) = col.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
                return Err(Error::Domain(format!("variable {j}: value {x} outside (0, 1)")));
            }
        }
        let mut total = vec![0.0; n];
        let mut prev: Vec<EdgeOutputs> = Vec::new();
        let last = self.structure.trees().len().saturating_sub(1);
        for (t, tree) in self.structure.trees().iter().enumerate() {
            let mut outputs = Vec::with_capacity(tree.len());
            for k in 0..tree.len() {
                let c = &self.copulas[t][k];
                let [x, y] = edge_arguments(&self.structure, t, k, columns, &prev);
                for (acc, (&a, &b)) in total.iter_mut().zip(x.iter().zip(y)) {
                    *acc += c.ln_density_unchecked(a, b);
                }
                if t < last {
                    outputs.push(edge_outputs(c, x, y)?);
                }
            }
            prev = outputs;
        }
        if let Some(bad) = total.iter().position(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("log-density is NaN at row {bad}")));
        }
        Ok(total)
    }

    /// Arguments `(F(a | D), F(b | D))` of edge `(tree, edge)` (0-based) for every row of `data`.
    pub fn edge_pseudo_observations(&self, data: &PseudoObservations, tree: usize, edge: usize) -> Result<[Vec<f64>; 2]> {
        if data.dim() != self.dim() {
            return Err(Error::Precondition(format!("data has {} columns, model {}", data.dim(), self.dim())));
        }
        if self.structure.trees().get(tree).is_none_or(|t| edge >= t.len()) {
            return Err(Error::Precondition(format!("no edge {edge} in tree {tree}")));
        }
        let columns: Vec<Vec<f64>> = (0..self.dim()).map(|j| data.column(j)).collect();
        let mut prev: Vec<EdgeOutputs> = Vec::new();
        for t in 0..tree {
            let outputs = (0..self.structure.trees()[t].len())
                .map(|k| {
                    let [x, y] = edge_arguments(&self.structure, t, k, &columns, &prev);
                    edge_outputs(&self.copulas[t][k], x, y)
                })
                .collect::<Result<Vec<_>>>()?;
            prev = outputs;
        }
        let [x, y] = edge_arguments(&self.structure, tree, edge, &columns, &prev);
        Ok([x.to_vec(), y.to_vec()])
    }

    /// Draws `n` rows by inverse conditional sampling; deterministic in `seed`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<PseudoObservations> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n).map(|_| self.simulate_row(&mut rng)).collect::<Result<Vec<_>>>()?;
        PseudoObservations::from_rows(self.labels.clone(), self.roles.clone(), &rows)
    }

    pub(crate) fn simulate_row<R: RngCore>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.dim();
        let w: Vec<f64> = (0..d).map(|_| open_uniform(rng)).collect();
        let (first, steps) = self.structure.sampling_order();
        let trees = self.structure.trees();
        let mut u = vec![0.5; d];
        // conditional outputs (first, second) and arguments per edge
        let mut outs: Vec<Vec<(f64, f64)>> = trees.iter().map(|t| vec![(0.5, 0.5); t.len()]).collect();
        u[first] = w[0];
        let arg = |outs: &Vec<Vec<(f64, f64)>>, u: &[f64], s: Source, t: usize| -> f64 {
            match s {
                Source::Variable(v) => u[v],
                Source::Parent { edge, first } => {
                    let o = outs[t - 1][edge];
                    if first {
                        o.0
                    } else {
                        o.1
                    }
                }
            }
        };
        for (k, step) in steps.iter().enumerate() {
            let x = step.var;
            // invert from the highest tree down to tree 1
            let mut p = w[k + 1];
            for t in (0..step.edges.len()).rev() {
                let j = step.edges[t];
                let e = &trees[t][j];
                let c = &self.copulas[t][j];
                let [s0, s1] = self.structure.sources(t, j);
                p = if e.conditioned[0] == x {
                    let other = arg(&outs, &u, s1, t);
                    c.h_inverse_unchecked(p, other)?
                } else {
                    let other = arg(&outs, &u, s0, t);
                    c.transposed().h_inverse_unchecked(p, other)?
                };
                p = clamp_unit(p);
            }
            u[x] = p;
            for (t, &j) in step.edges.iter().enumerate() {
                let c = &self.copulas[t][j];
                let [s0, s1] = self.structure.sources(t, j);
                let a = arg(&outs, &u, s0, t);
                let b = arg(&outs, &u, s1, t);
                outs[t][j] = (clamp_unit(c.h_unchecked(a, b)), clamp_unit(c.transposed().h_unchecked(b, a)));
            }
        }
        Ok(u)
    }
}

/// Uniform draw on the open unit interval.
pub(crate) fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::CopulaFamily;
    use crate::dependence::empirical_kendall_tau;
    use crate::vine::structure::Edge;

    fn three_var_structure() -> RVineStructure {
        RVineStructure::new(3, vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]])
            .unwrap()
    }

    #[test]
    fn independence_has_zero_log_density() {
        let m = RVineModel::independence(RVineStructure::d_vine(&[0, 1, 2, 3]).unwrap());
        assert!(m.log_density(&[0.1, 0.5, 0.9, 0.33]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn single_edge_reduces_to_bivariate_density() {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap();
        let m = RVineModel::new(s, vec![vec![g]]).unwrap();
        let v = m.log_density(&[0.3, 0.8]).unwrap();
        assert!((v - g.density(0.3, 0.8).unwrap().ln()).abs() < 1e-13);
    }

    #[test]
    fn rejects_points_outside_the_cube() {
        let m = RVineModel::independence(three_var_structure());
        assert!(matches!(m.log_density(&[0.1, 1.0, 0.3]), Err(Error::Domain(_))));
        assert!(m.log_density(&[0.1, 0.3]).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_reproduces_tau() {
        let s = RVineStructure::d_vine(&[0, 1]).unwrap();
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap();
        let m = RVineModel::new(s, vec![vec![g]]).unwrap();
        let a = m.simulate(20_000, 7).unwrap();
        let b = m.simulate(20_000, 7).unwrap();
        assert_eq!(a, b);
        let tau = empirical_kendall_tau(&a.column(0), &a.column(1)).unwrap().tau_hat;
        assert!((tau - 0.5).abs() < 0.02, "tau {tau}");
    }
}
