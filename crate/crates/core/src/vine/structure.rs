//! R-vine tree sequences.
//!
//! A structure is stored as `d - 1` trees of edges, each edge carrying its
//! conditioned pair `(a, b)` and conditioning set `D`. The nodes of tree `i`
//! are the edges of tree `i - 1`; the two parent edges of `(a, b | D)` are the
//! ones with constraint sets `D ∪ {a}` and `D ∪ {b}`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    /// Ordered conditioned pair; the edge copula is the copula of
    /// `(F(a | D), F(b | D))`.
    pub conditioned: [usize; 2],
    /// Conditioning set, sorted ascending.
    pub conditioning: Vec<usize>,
}

impl Edge {
    pub fn new(a: usize, b: usize, conditioning: impl IntoIterator<Item = usize>) -> Self {
        let mut conditioning: Vec<usize> = conditioning.into_iter().collect();
        conditioning.sort_unstable();
        Self { conditioned: [a, b], conditioning }
    }

    /// `{a, b} ∪ D`, sorted.
    pub fn constraint_set(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.conditioning.clone();
        s.extend_from_slice(&self.conditioned);
        s.sort_unstable();
        s
    }

    pub fn contains_conditioned(&self, var: usize) -> bool {
        self.conditioned.contains(&var)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.conditioned[0], self.conditioned[1])?;
        if !self.conditioning.is_empty() {
            let d: Vec<String> = self.conditioning.iter().map(|v| v.to_string()).collect();
            write!(f, "|{}", d.join(","))?;
        }
        Ok(())
    }
}

/// One violated clause of the R-vine definition. Tree numbers are 1-based,
/// edge indices 0-based within their tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Dimension { dim: usize },
    TreeCount { expected: usize, found: usize },
    EdgeCount { tree: usize, expected: usize, found: usize },
    VariableOutOfRange { tree: usize, edge: usize, variable: usize },
    MalformedEdge { tree: usize, edge: usize, reason: String },
    ConditioningSize { tree: usize, edge: usize, expected: usize, found: usize },
    /// Tree 1 must be a spanning tree on `{0..d-1}`; tree `i` a spanning tree
    /// on the edges of tree `i - 1`.
    NotSpanningTree { tree: usize },
    /// An endpoint of the edge is not an edge of the previous tree.
    UnknownNode { tree: usize, edge: usize, constraint_set: Vec<usize> },
    Proximity { tree: usize, edge: usize },
    DuplicateEdge { tree: usize, edge: usize },
    BadLink { tree: usize, edge: usize, node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { dim } => write!(f, "dimension {dim} < 2"),
            Violation::TreeCount { expected, found } => {
                write!(f, "expected {expected} trees, found {found}")
            }
            Violation::EdgeCount { tree, expected, found } => {
                write!(f, "tree {tree}: expected {expected} edges, found {found}")
            }
            Violation::VariableOutOfRange { tree, edge, variable } => {
                write!(f, "tree {tree}, edge {edge}: variable {variable} out of range")
            }
            Violation::MalformedEdge { tree, edge, reason } => {
                write!(f, "tree {tree}, edge {edge}: {reason}")
            }
            Violation::ConditioningSize { tree, edge, expected, found } => write!(
                f,
                "tree {tree}, edge {edge}: conditioning set has {found} elements, expected {expected}"
            ),
            Violation::NotSpanningTree { tree } => write!(f, "tree {tree} is not a spanning tree"),
            Violation::UnknownNode { tree, edge, constraint_set } => write!(
                f,
                "tree {tree}, edge {edge}: no edge of tree {} has constraint set {constraint_set:?}",
                tree - 1
            ),
            Violation::Proximity { tree, edge } => write!(
                f,
                "tree {tree}, edge {edge}: joined edges of tree {} share no node (proximity)",
                tree - 1
            ),
            Violation::DuplicateEdge { tree, edge } => {
                write!(f, "tree {tree}, edge {edge}: duplicate edge")
            }
            Violation::BadLink { tree, edge, node } => {
                write!(f, "tree {tree}, edge {edge}: node {node} does not exist in tree {}", tree - 1)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_proximity_violation(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Proximity { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid R-vine");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Where an edge argument comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Source {
    /// Raw pseudo-observation of a variable (tree 1).
    Variable(usize),
    /// Conditional output of an edge in the previous tree: `first == true`
    /// selects `F(a | b, D')`, otherwise `F(b | a, D')`.
    Parent { edge: usize, first: bool },
}

/// One step of the sampling order: `var` is drawn conditionally on the
/// previously drawn variables through `edges[t]` (tree `t + 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct PeelStep {
    pub var: usize,
    pub edges: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RVineStructure {
    dim: usize,
    trees: Vec<Vec<Edge>>,
    sources: Vec<Vec<[Source; 2]>>,
    first_var: usize,
    peel: Vec<PeelStep>,
}

pub(crate) struct UnionFind(Vec<usize>);

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

pub(crate) fn union_find_spanning(n: usize, links: &[(usize, usize)]) -> bool {
    if links.len() + 1 != n {
        return false;
    }
    let mut uf = UnionFind::new(n);
    links.iter().all(|&(a, b)| uf.union(a, b))
}

/// Checks every clause of the R-vine definition and returns the report with
/// the resolved edge sources when valid.
fn check(dim: usize, trees: &[Vec<Edge>]) -> (ValidationReport, Vec<Vec<[Source; 2]>>) {
    let mut violations = Vec::new();
    let mut sources: Vec<Vec<[Source; 2]>> = Vec::new();
    if dim < 2 {
        violations.push(Violation::Dimension { dim });
        return (ValidationReport { violations }, sources);
    }
    if trees.len() != dim - 1 {
        violations.push(Violation::TreeCount { expected: dim - 1, found: trees.len() });
        return (ValidationReport { violations }, sources);
    }
    for (i, tree) in trees.iter().enumerate() {
        let tree_no = i + 1;
        let expected = dim - 1 - i;
        if tree.len() != expected {
            violations.push(Violation::EdgeCount { tree: tree_no, expected, found: tree.len() });
        }
        let mut seen = BTreeSet::new();
        let mut tree_sources = Vec::with_capacity(tree.len());
        let mut links = Vec::with_capacity(tree.len());
        let prev_index: HashMap<Vec<usize>, usize> = if i == 0 {
            HashMap::new()
        } else {
            trees[i - 1].iter().enumerate().map(|(k, e)| (e.constraint_set(), k)).collect()
        };
        for (k, e) in tree.iter().enumerate() {
            let [a, b] = e.conditioned;
            let mut ok = true;
            for &v in e.conditioned.iter().chain(&e.conditioning) {
                if v >= dim {
                    violations.push(Violation::VariableOutOfRange { tree: tree_no, edge: k, variable: v });
                    ok = false;
                }
            }
            if a == b || e.conditioning.contains(&a) || e.conditioning.contains(&b) {
                violations.push(Violation::MalformedEdge {
                    tree: tree_no,
                    edge: k,
                    reason: "conditioned variables must be distinct and not conditioned on".into(),
                });
                ok = false;
            }
            if e.conditioning.windows(2).any(|w| w[0] >= w[1]) {
                violations.push(Violation::MalformedEdge {
                    tree: tree_no,
                    edge: k,
                    reason: "conditioning set must be sorted without repeats".into(),
                });
                ok = false;
            }
            if e.conditioning.len() != i {
                violations.push(Violation::ConditioningSize {
                    tree: tree_no,
                    edge: k,
                    expected: i,
                    found: e.conditioning.len(),
                });
                ok = false;
            }
            if !seen.insert(e.constraint_set()) {
                violations.push(Violation::DuplicateEdge { tree: tree_no, edge: k });
            }
            if !ok {
                continue;
            }
            if i == 0 {
                links.push((a, b));
                tree_sources.push([Source::Variable(a), Source::Variable(b)]);
                continue;
            }
            let side = |var: usize| -> Option<(usize, bool)> {
                let mut set = e.conditioning.clone();
                set.push(var);
                set.sort_unstable();
                let idx = *prev_index.get(&set)?;
                let parent = &trees[i - 1][idx];
                Some((idx, parent.conditioned[0] == var))
            };
            match (side(a), side(b)) {
                (Some((pa, fa)), Some((pb, fb))) => {
                    let prev_sources = &sources[i - 1];
                    if !share_node(&trees[i - 1], prev_sources, pa, pb, i - 1) {
                        violations.push(Violation::Proximity { tree: tree_no, edge: k });
                    }
                    links.push((pa, pb));
                    tree_sources.push([
                        Source::Parent { edge: pa, first: fa },
                        Source::Parent { edge: pb, first: fb },
                    ]);
                }
                (sa, sb) => {
                    for (var, s) in [(a, sa), (b, sb)] {
                        if s.is_none() {
                            let mut set = e.conditioning.clone();
                            set.push(var);
                            set.sort_unstable();
                            violations.push(Violation::UnknownNode { tree: tree_no, edge: k, constraint_set: set });
                        }
                    }
                }
            }
        }
        let n_nodes = if i == 0 { dim } else { trees[i - 1].len() };
        if links.len() == tree.len() && tree.len() == expected && !union_find_spanning(n_nodes, &links) {
            violations.push(Violation::NotSpanningTree { tree: tree_no });
        }
        if !violations.is_empty() {
            return (ValidationReport { violations }, sources);
        }
        sources.push(tree_sources);
    }
    (ValidationReport { violations }, sources)
}

/// Whether edges `p` and `q` of tree `level` (0-based) have a common node.
fn share_node(tree: &[Edge], sources: &[[Source; 2]], p: usize, q: usize, level: usize) -> bool {
    if level == 0 {
        let (ep, eq) = (&tree[p], &tree[q]);
        return ep.conditioned.iter().any(|v| eq.conditioned.contains(v));
    }
    let nodes = |s: &[Source; 2]| -> Vec<usize> {
        s.iter()
            .filter_map(|x| match x {
                Source::Parent { edge, .. } => Some(*edge),
                Source::Variable(_) => None,
            })
            .collect()
    };
    let np = nodes(&sources[p]);
    nodes(&sources[q]).iter().any(|n| np.contains(n))
}

/// Peels off one conditioned variable of the top edge at a time; the
/// reversed sequence is a valid sampling order.
fn peel(dim: usize, trees: &[Vec<Edge>]) -> Result<(usize, Vec<PeelStep>)> {
    let mut alive: Vec<Vec<bool>> = trees.iter().map(|t| vec![true; t.len()]).collect();
    let mut steps = Vec::with_capacity(dim - 1);
    for k in (2..=dim).rev() {
        // top tree of the remaining sub-vine has index k - 2
        let top = alive[k - 2]
            .iter()
            .position(|&a| a)
            .ok_or_else(|| Error::Structure("sub-vine lost its top edge".into()))?;
        let var = trees[k - 2][top].conditioned[0];
        let mut edges = Vec::with_capacity(k - 1);
        for t in 0..k - 1 {
            let hits: Vec<usize> = (0..trees[t].len())
                .filter(|&j| alive[t][j] && trees[t][j].contains_conditioned(var))
                .collect();
            if hits.len() != 1 {
                return Err(Error::Structure(format!(
                    "variable {var} appears in {} conditioned pairs of tree {}",
                    hits.len(),
                    t + 1
                )));
            }
            edges.push(hits[0]);
        }
        for (t, &j) in edges.iter().enumerate() {
            alive[t][j] = false;
        }
        for (t, row) in alive.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a && trees[t][j].conditioning.contains(&var) {
                    return Err(Error::Structure(format!(
                        "variable {var} remains in a conditioning set after peeling"
                    )));
                }
            }
        }
        steps.push(PeelStep { var, edges });
    }
    let drawn: BTreeSet<usize> = steps.iter().map(|s| s.var).collect();
    let first = (0..dim)
        .find(|v| !drawn.contains(v))
        .ok_or_else(|| Error::Structure("no variable left to start sampling".into()))?;
    steps.reverse();
    Ok((first, steps))
}

impl RVineStructure {
    /// Validates `trees` and builds the structure.
    pub fn new(dim: usize, trees: Vec<Vec<Edge>>) -> Result<Self> {
        let (report, sources) = check(dim, &trees);
        if !report.is_valid() {
            return Err(Error::Structure(report.to_string()));
        }
        let (first_var, peel) = peel(dim, &trees)?;
        Ok(Self { dim, trees, sources, first_var, peel })
    }

    /// Builds a structure from explicit node links: tree 1 as variable pairs,
    /// tree `i >= 2` as pairs of edge indices of tree `i - 1`.
    pub fn from_links(
        dim: usize,
        first_tree: &[[usize; 2]],
        higher: &[Vec<[usize; 2]>],
    ) -> std::result::Result<Self, ValidationReport> {
        let report = validate_links(dim, first_tree, higher);
        if !report.is_valid() {
            return Err(report);
        }
        let trees = links_to_edges(first_tree, higher);
        Self::new(dim, trees).map_err(|e| ValidationReport {
            violations: vec![Violation::MalformedEdge { tree: 0, edge: 0, reason: e.to_string() }],
        })
    }

    /// A D-vine (path) on the variables in the given order.
    pub fn d_vine(order: &[usize]) -> Result<Self> {
        let d = order.len();
        let mut trees = Vec::with_capacity(d.saturating_sub(1));
        for t in 1..d {
            let tree = (0..d - t)
                .map(|i| Edge::new(order[i], order[i + t], order[i + 1..i + t].iter().copied()))
                .collect();
            trees.push(tree);
        }
        Self::new(d, trees)
    }

    /// A C-vine with root order `order` (first element is the root of tree 1).
    pub fn c_vine(order: &[usize]) -> Result<Self> {
        let d = order.len();
        let mut trees = Vec::with_capacity(d.saturating_sub(1));
        for t in 1..d {
            let root = order[t - 1];
            let cond: Vec<usize> = order[..t - 1].to_vec();
            let tree = order[t..].iter().map(|&v| Edge::new(root, v, cond.iter().copied())).collect();
            trees.push(tree);
        }
        Self::new(d, trees)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[Vec<Edge>] {
        &self.trees
    }

    pub fn n_edges(&self) -> usize {
        self.trees.iter().map(|t| t.len()).sum()
    }

    /// `(tree index, edge index, edge)` in tree order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &Edge)> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(t, tree)| tree.iter().enumerate().map(move |(k, e)| (t, k, e)))
    }

    pub(crate) fn sources(&self, tree: usize, edge: usize) -> [Source; 2] {
        self.sources[tree][edge]
    }

    pub(crate) fn sampling_order(&self) -> (usize, &[PeelStep]) {
        (self.first_var, &self.peel)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_structure(self.dim, &self.trees)
    }

    /// Structure matrix in the lower-triangular convention: column `c` has
    /// diagonal variable `x` and, reading upwards from the last row, the
    /// partners of `x` in trees 1, 2, ...; conditioning sets are the entries
    /// below. Entries are 1-based; 0 marks an empty cell.
    pub fn to_matrix(&self) -> Vec<Vec<usize>> {
        let d = self.dim;
        let mut m = vec![vec![0usize; d]; d];
        for (c, step) in self.peel.iter().rev().enumerate() {
            m[c][c] = step.var + 1;
            for (t, &j) in step.edges.iter().enumerate() {
                let e = &self.trees[t][j];
                let partner = if e.conditioned[0] == step.var { e.conditioned[1] } else { e.conditioned[0] };
                m[d - 1 - t][c] = partner + 1;
            }
        }
        m[d - 1][d - 1] = self.first_var + 1;
        m
    }

    /// Inverse of [`RVineStructure::to_matrix`]. Edge orientation is `(diagonal, partner)`.
    pub fn from_matrix(m: &[Vec<usize>]) -> Result<Self> {
        let d = m.len();
        if d < 2 || m.iter().any(|r| r.len() != d) {
            return Err(Error::Structure("structure matrix must be square with d >= 2".into()));
        }
        let mut trees: Vec<Vec<Edge>> = vec![Vec::new(); d - 1];
        for c in 0..d - 1 {
            let x = m[c][c];
            for r in c + 1..d {
                let t = d - 1 - r;
                let partner = m[r][c];
                let cond: Vec<usize> = (r + 1..d).map(|s| m[s][c]).collect();
                if x == 0 || partner == 0 || cond.contains(&0) {
                    return Err(Error::Structure(format!("structure matrix has an empty cell in column {c}")));
                }
                trees[t].push(Edge::new(x - 1, partner - 1, cond.iter().map(|v| v - 1)));
            }
        }
        Self::new(d, trees)
    }
}

/// Validation report for a tree sequence given as conditioned/conditioning sets.
pub fn validate_structure(dim: usize, trees: &[Vec<Edge>]) -> ValidationReport {
    let (report, _) = check(dim, trees);
    if report.is_valid() {
        if let Err(e) = peel(dim, trees) {
            return ValidationReport {
                violations: vec![Violation::MalformedEdge { tree: 0, edge: 0, reason: e.to_string() }],
            };
        }
    }
    report
}

/// Validation report for a tree sequence given as node links (see
/// [`RVineStructure::from_links`]). Reports proximity violations directly on
/// the links.
pub fn validate_links(dim: usize, first_tree: &[[usize; 2]], higher: &[Vec<[usize; 2]>]) -> ValidationReport {
    let mut violations = Vec::new();
    if dim < 2 {
        return ValidationReport { violations: vec![Violation::Dimension { dim }] };
    }
    if 1 + higher.len() != dim - 1 {
        violations.push(Violation::TreeCount { expected: dim - 1, found: 1 + higher.len() });
    }
    // constraint sets per tree, built as we go; None marks an unusable edge
    let mut prev_sets: Vec<Option<BTreeSet<usize>>> = Vec::new();
    let mut prev_links: Vec<[usize; 2]> = first_tree.to_vec();
    for (k, &[a, b]) in first_tree.iter().enumerate() {
        if a >= dim || b >= dim || a == b {
            violations.push(Violation::MalformedEdge { tree: 1, edge: k, reason: format!("bad variable pair ({a}, {b})") });
            prev_sets.push(None);
        } else {
            prev_sets.push(Some([a, b].into_iter().collect()));
        }
    }
    if first_tree.len() != dim - 1 {
        violations.push(Violation::EdgeCount { tree: 1, expected: dim - 1, found: first_tree.len() });
    } else if !union_find_spanning(dim, &first_tree.iter().map(|l| (l[0], l[1])).collect::<Vec<_>>()) {
        violations.push(Violation::NotSpanningTree { tree: 1 });
    }
    for (i, tree) in higher.iter().enumerate() {
        let tree_no = i + 2;
        let n_nodes = prev_sets.len();
        let expected = (dim - 1).saturating_sub(i + 1);
        if tree.len() != expected {
            violations.push(Violation::EdgeCount { tree: tree_no, expected, found: tree.len() });
        }
        let mut sets = Vec::with_capacity(tree.len());
        for (k, &[p, q]) in tree.iter().enumerate() {
            if p >= n_nodes || q >= n_nodes || p == q {
                violations.push(Violation::BadLink { tree: tree_no, edge: k, node: p.max(q) });
                sets.push(None);
                continue;
            }
            // tree-1 links hold variables, higher links hold node indices;
            // either way a shared entry is a shared node
            let (lp, lq) = (prev_links[p], prev_links[q]);
            let shared = lp.iter().any(|v| lq.contains(v));
            if !shared {
                violations.push(Violation::Proximity { tree: tree_no, edge: k });
                sets.push(None);
                continue;
            }
            match (&prev_sets[p], &prev_sets[q]) {
                (Some(sp), Some(sq)) => sets.push(Some(sp.union(sq).copied().collect())),
                _ => sets.push(None),
            }
        }
        if tree.len() == expected && !union_find_spanning(n_nodes, &tree.iter().map(|l| (l[0], l[1])).collect::<Vec<_>>()) {
            violations.push(Violation::NotSpanningTree { tree: tree_no });
        }
        prev_sets = sets;
        prev_links = tree.clone();
    }
    if violations.is_empty() {
        let trees = links_to_edges(first_tree, higher);
        return validate_structure(dim, &trees);
    }
    ValidationReport { violations }
}

/// Converts node links into conditioned/conditioning edges. Links must
/// already satisfy proximity.
fn links_to_edges(first_tree: &[[usize; 2]], higher: &[Vec<[usize; 2]>]) -> Vec<Vec<Edge>> {
    let mut trees = vec![first_tree.iter().map(|&[a, b]| Edge::new(a.min(b), a.max(b), [])).collect::<Vec<_>>()];
    for tree in higher {
        let prev = trees.last().expect("first tree present").clone();
        let edges = tree
            .iter()
            .map(|&[p, q]| {
                let sp: BTreeSet<usize> = prev[p].constraint_set().into_iter().collect();
                let sq: BTreeSet<usize> = prev[q].constraint_set().into_iter().collect();
                let a = *sp.difference(&sq).next().unwrap_or(&usize::MAX);
                let b = *sq.difference(&sp).next().unwrap_or(&usize::MAX);
                Edge::new(a, b, sp.intersection(&sq).copied())
            })
            .collect();
        trees.push(edges);
    }
    trees
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_var() -> Vec<Vec<Edge>> {
        vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]]
    }

    #[test]
    fn three_dimensional_structures_are_valid() {
        assert!(validate_structure(3, &three_var()).is_valid());
        let star = vec![vec![Edge::new(0, 1, []), Edge::new(0, 2, [])], vec![Edge::new(1, 2, [0])]];
        assert!(validate_structure(3, &star).is_valid());
    }

    #[test]
    fn proximity_violation_on_links() {
        // path 0-1-2-3; tree 2 tries to join (0,1) with (2,3)
        let report = validate_links(4, &[[0, 1], [1, 2], [2, 3]], &[vec![[0, 2], [0, 1]], vec![[0, 1]]]);
        assert!(report.has_proximity_violation(), "{report}");
        let ok = validate_links(4, &[[0, 1], [1, 2], [2, 3]], &[vec![[0, 1], [1, 2]], vec![[0, 1]]]);
        assert!(ok.is_valid(), "{ok}");
    }

    #[test]
    fn reports_each_broken_clause() {
        let cyclic = vec![vec![Edge::new(0, 1, []), Edge::new(1, 0, [])], vec![Edge::new(0, 2, [1])]];
        assert!(!validate_structure(3, &cyclic).is_valid());
        let wrong_cond = vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [])]];
        let r = validate_structure(3, &wrong_cond);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::ConditioningSize { .. })));
        let unknown = vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(1, 2, [0])]];
        let r = validate_structure(3, &unknown);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::UnknownNode { .. })), "{r}");
        assert!(!validate_structure(3, &three_var()[..1]).is_valid());
        assert!(!validate_structure(1, &[]).is_valid());
    }

    #[test]
    fn matrix_round_trip() {
        for s in [
            RVineStructure::d_vine(&[2, 0, 3, 1, 4]).unwrap(),
            RVineStructure::c_vine(&[1, 3, 0, 2]).unwrap(),
            RVineStructure::new(3, three_var()).unwrap(),
        ] {
            let m = s.to_matrix();
            let back = RVineStructure::from_matrix(&m).unwrap();
            let key = |st: &RVineStructure| -> Vec<Vec<Vec<usize>>> {
                st.trees()
                    .iter()
                    .map(|t| {
                        let mut v: Vec<Vec<usize>> = t.iter().map(|e| e.constraint_set()).collect();
                        v.sort();
                        v
                    })
                    .collect()
            };
            assert_eq!(key(&s), key(&back));
        }
    }

    #[test]
    fn c_and_d_vines_have_right_shape() {
        let c = RVineStructure::c_vine(&[0, 1, 2, 3]).unwrap();
        assert_eq!(c.n_edges(), 6);
        assert_eq!(c.trees()[2][0], Edge::new(2, 3, [0, 1]));
        let d = RVineStructure::d_vine(&[0, 1, 2, 3]).unwrap();
        assert_eq!(d.trees()[2][0], Edge::new(0, 3, [1, 2]));
    }
}
