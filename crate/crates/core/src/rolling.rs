//! Rolling-window analysis (RWA) of pair copulas and normal/abnormal regime
//! classification.
//!
//! Window `[start, end)` covers rows `start..end` (0-based, `end` exclusive).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::{quarter_tail_dependence, AssetRole, BivariateCopula, CopulaFamily};
use crate::data::PseudoObservations;
use crate::dependence::empirical_kendall_tau;
use crate::error::{Error, Result};
use crate::msrv::RegimeSpec;
use crate::vine::RVineModel;
use crate::vine_select::{fit_candidates, fit_family};

/// Smallest admissible window length.
pub const MIN_WINDOW: usize = 100;

/// Selected copula of one window and its quarter tail dependence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowFit {
    pub copula: BivariateCopula,
    pub qtd: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RwaRecord {
    pub window_start: usize,
    pub window_end: usize,
    /// Kendall's tau inside the window; `None` when it is undefined.
    pub tau_hat: Option<f64>,
    /// The selected copula, or why no family could be fitted.
    pub outcome: std::result::Result<WindowFit, String>,
}

impl RwaRecord {
    pub fn family(&self) -> Option<CopulaFamily> {
        self.outcome.as_ref().ok().map(|f| f.copula.family())
    }
}

/// Per-window model selection for one pair of (possibly conditional) margins.
#[derive(Clone, Debug, PartialEq)]
pub struct RwaSeries {
    /// Pair label such as `NKY-HSI` or `HSI-VNKY|NKY`.
    pub pair: String,
    pub roles: [AssetRole; 2],
    /// Tree level of the pair, 1 for unconditional pairs.
    pub tree: usize,
    pub window: usize,
    pub step: usize,
    pub records: Vec<RwaRecord>,
}

impl RwaSeries {
    /// Number of windows won by each family; failed windows are not counted.
    pub fn family_counts(&self) -> BTreeMap<CopulaFamily, usize> {
        let mut counts = BTreeMap::new();
        for f in self.records.iter().filter_map(RwaRecord::family) {
            *counts.entry(f).or_insert(0) += 1;
        }
        counts
    }

    /// Share of all windows, failed ones included, won by `family`.
    pub fn frequency(&self, family: CopulaFamily) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.family_counts().get(&family).copied().unwrap_or(0) as f64 / self.records.len() as f64
    }

    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Writes `window_start,window_end,family,theta,nu,tau_hat,qtd`; failed
    /// windows leave the fit columns empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["window_start", "window_end", "family", "theta", "nu", "tau_hat", "qtd"])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let (family, theta, nu, qtd) = match &r.outcome {
                Ok(f) => (
                    f.copula.family().name().to_string(),
                    f.copula.theta().to_string(),
                    opt(f.copula.nu()),
                    f.qtd.to_string(),
                ),
                Err(_) => Default::default(),
            };
            w.write_record([r.window_start.to_string(), r.window_end.to_string(), family, theta, nu, opt(r.tau_hat), qtd])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`RwaSeries::write_csv`]. Window length and
    /// step are taken from the first records; the `qtd` column is recomputed
    /// from the stored parameters and `roles`.
    pub fn read_csv<R: Read>(reader: R, pair: &str, roles: [AssetRole; 2], tree: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse(format!("RWA file lacks column `{name}`")))
        };
        let idx = [col("window_start")?, col("window_end")?, col("family")?, col("theta")?, col("nu")?, col("tau_hat")?];
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
            let num = |i: usize| -> Result<Option<f64>> {
                let s = field(i);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", line + 2)))
                }
            };
            let int = |i: usize| -> Result<usize> {
                field(i).parse().map_err(|_| Error::Parse(format!("row {}: bad index `{}`", line + 2, field(i))))
            };
            let outcome = if field(2).is_empty() {
                Err("no fit recorded".to_string())
            } else {
                let family: CopulaFamily = field(2).parse()?;
                let theta = num(3)?.ok_or_else(|| Error::Parse(format!("row {}: missing theta", line + 2)))?;
                let copula = BivariateCopula::new(family, theta, num(4)?)?;
                Ok(WindowFit { copula, qtd: quarter_tail_dependence(roles[0], roles[1], &copula) })
            };
            records.push(RwaRecord { window_start: int(0)?, window_end: int(1)?, tau_hat: num(5)?, outcome });
        }
        let first = records.first().ok_or_else(|| Error::Parse("RWA file has no records".into()))?;
        let window = first.window_end.checked_sub(first.window_start).filter(|&w| w > 0);
        let window = window.ok_or_else(|| Error::Parse("window_end must exceed window_start".into()))?;
        let step = records.get(1).map_or(1, |r| r.window_start.saturating_sub(first.window_start));
        if records.windows(2).any(|p| p[1].window_start <= p[0].window_start) {
            return Err(Error::Parse("RWA records must be ordered by window_start".into()));
        }
        Ok(Self { pair: pair.to_string(), roles, tree, window, step, records })
    }
}

fn window_starts(n: usize, window: usize, step: usize) -> Result<Vec<usize>> {
    if window < MIN_WINDOW {
        return Err(Error::Precondition(format!("window length {window} is below {MIN_WINDOW}")));
    }
    if step == 0 {
        return Err(Error::Precondition("step must be positive".into()));
    }
    if n < window + 1 {
        return Err(Error::Precondition(format!("{n} observations do not exceed the window length {window}")));
    }
    Ok((0..=n - window).step_by(step).collect())
}

/// RWA on two given columns; the building block of the other entry points.
#[allow(clippy::too_many_arguments)]
pub fn rolling_window_columns(
    pair: &str,
    roles: [AssetRole; 2],
    tree: usize,
    x: &[f64],
    y: &[f64],
    window: usize,
    step: usize,
    families: &[CopulaFamily],
) -> Result<RwaSeries> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!("columns have lengths {} and {}", x.len(), y.len())));
    }
    if families.is_empty() {
        return Err(Error::Precondition("empty family whitelist".into()));
    }
    let starts = window_starts(x.len(), window, step)?;
    let records = starts
        .par_iter()
        .map(|&s| {
            let e = s + window;
            match fit_candidates(&x[s..e], &y[s..e], families) {
                Ok(c) => {
                    let outcome = c
                        .best()
                        .map(|f| WindowFit { copula: f.copula, qtd: quarter_tail_dependence(roles[0], roles[1], &f.copula) })
                        .ok_or_else(|| {
                            let why: Vec<String> =
                                c.fits.iter().filter_map(|(f, r)| r.as_ref().err().map(|e| format!("{f}: {e}"))).collect();
                            why.join("; ")
                        });
                    RwaRecord { window_start: s, window_end: e, tau_hat: Some(c.tau_hat), outcome }
                }
                Err(err) => RwaRecord { window_start: s, window_end: e, tau_hat: None, outcome: Err(err.to_string()) },
            }
        })
        .collect();
    Ok(RwaSeries { pair: pair.to_string(), roles, tree, window, step, records })
}

fn check_pair_index(u: &PseudoObservations, pair: (usize, usize)) -> Result<()> {
    if pair.0 >= u.dim() || pair.1 >= u.dim() || pair.0 == pair.1 {
        return Err(Error::Precondition(format!("invalid column pair {pair:?} for {} columns", u.dim())));
    }
    Ok(())
}

/// Rolling-window family selection for columns `pair` of `u`.
pub fn rolling_window_analysis(
    u: &PseudoObservations,
    pair: (usize, usize),
    window: usize,
    step: usize,
    families: &[CopulaFamily],
) -> Result<RwaSeries> {
    check_pair_index(u, pair)?;
    let label = format!("{}-{}", u.labels[pair.0], u.labels[pair.1]);
    let roles = [u.roles[pair.0], u.roles[pair.1]];
    rolling_window_columns(&label, roles, 1, &u.column(pair.0), &u.column(pair.1), window, step, families)
}

/// RWA of edge `(tree, edge)` (0-based) on the conditional pseudo-observations
/// implied by a fitted model.
pub fn edge_window_analysis(
    model: &RVineModel,
    u: &PseudoObservations,
    tree: usize,
    edge: usize,
    window: usize,
    step: usize,
    families: &[CopulaFamily],
) -> Result<RwaSeries> {
    let [x, y] = model.edge_pseudo_observations(u, tree, edge)?;
    let e = &model.structure().trees()[tree][edge];
    let [a, b] = e.conditioned;
    let mut label = format!("{}-{}", u.labels[a], u.labels[b]);
    if !e.conditioning.is_empty() {
        let given: Vec<&str> = e.conditioning.iter().map(|&v| u.labels[v].as_str()).collect();
        label = format!("{label}|{}", given.join(","));
    }
    rolling_window_columns(&label, [u.roles[a], u.roles[b]], tree + 1, &x, &y, window, step, families)
}

/// One side of a regime assignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeFamily {
    pub family: CopulaFamily,
    /// Share of all windows won by the family.
    pub frequency: f64,
    /// Quarter tail dependence of the representative copula.
    pub qtd: f64,
    /// Median parameters over the family's windows.
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeAssignment {
    pub pair: String,
    pub tree: usize,
    pub normal: RegimeFamily,
    pub abnormal: RegimeFamily,
    pub full_sample_tau: f64,
    /// The second place was shared with another family and decided by name.
    pub ambiguous: bool,
}

impl RegimeAssignment {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn representative(series: &RwaSeries, family: CopulaFamily) -> Result<RegimeFamily> {
    let fits: Vec<&WindowFit> =
        series.records.iter().filter_map(|r| r.outcome.as_ref().ok()).filter(|f| f.copula.family() == family).collect();
    if fits.is_empty() {
        return Err(Error::Precondition(format!("family {family} never selected in {}", series.pair)));
    }
    let theta = median(fits.iter().map(|f| f.copula.theta()).collect());
    let nu = match family {
        CopulaFamily::StudentT => Some(median(fits.iter().filter_map(|f| f.copula.nu()).collect())),
        _ => None,
    };
    let copula = BivariateCopula::new(family, theta, nu)?;
    Ok(RegimeFamily {
        family,
        frequency: series.frequency(family),
        qtd: quarter_tail_dependence(series.roles[0], series.roles[1], &copula),
        theta,
        nu,
    })
}

/// Families ordered by window count, ties broken by family name.
fn ranked_families(series: &RwaSeries) -> Vec<(CopulaFamily, usize)> {
    let mut ranked: Vec<(CopulaFamily, usize)> = series.family_counts().into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.name().cmp(b.0.name())));
    ranked
}

/// Most frequent family used for both regimes, as for pairs above the first
/// tree where only the parameters switch.
pub fn modal_assignment(series: &RwaSeries, full_sample_tau: f64) -> Result<RegimeAssignment> {
    let ranked = ranked_families(series);
    let (top, count) = *ranked.first().ok_or_else(|| Error::Degenerate(format!("no successful window in {}", series.pair)))?;
    let side = representative(series, top)?;
    Ok(RegimeAssignment {
        pair: series.pair.clone(),
        tree: series.tree,
        normal: side,
        abnormal: side,
        full_sample_tau,
        ambiguous: ranked.get(1).is_some_and(|r| r.1 == count),
    })
}

/// Normal/abnormal families of one pair.
///
/// On the first tree the two most frequent families compete: for positive
/// full-sample tau the one with the higher representative quarter tail
/// dependence is abnormal, for negative tau the one with the lower. Higher
/// trees use the modal family for both regimes.
pub fn classify_regimes(series: &RwaSeries, full_sample_tau: f64) -> Result<RegimeAssignment> {
    if series.tree >= 2 {
        return modal_assignment(series, full_sample_tau);
    }
    if full_sample_tau == 0.0 || !full_sample_tau.is_finite() {
        return Err(Error::Precondition(format!("full-sample tau must be nonzero, got {full_sample_tau}")));
    }
    let ranked = ranked_families(series);
    if ranked.len() < 2 {
        return Err(Error::Precondition(format!(
            "{} needs at least two distinct families in the RWA, found {}",
            series.pair,
            ranked.len()
        )));
    }
    let a = representative(series, ranked[0].0)?;
    let b = representative(series, ranked[1].0)?;
    if (a.qtd - b.qtd).abs() <= 1e-12 {
        return Err(Error::Tie(format!(
            "{}: {} and {} both have quarter tail dependence {:.6}",
            series.pair, a.family, b.family, a.qtd
        )));
    }
    let a_higher = a.qtd > b.qtd;
    let (normal, abnormal) = if a_higher == (full_sample_tau > 0.0) { (b, a) } else { (a, b) };
    Ok(RegimeAssignment {
        pair: series.pair.clone(),
        tree: 1,
        normal,
        abnormal,
        full_sample_tau,
        ambiguous: ranked.get(2).is_some_and(|r| r.1 == ranked[1].1),
    })
}

/// Runs the RWA on every edge of a fitted vine and classifies each edge.
///
/// First-tree edges whose windows all select one family, or whose two top
/// families tie in quarter tail dependence, fall back to [`modal_assignment`]. Returns the assignments indexed like the trees and
/// the normal and abnormal regime specifications.
pub fn classify_vine(
    model: &RVineModel,
    u: &PseudoObservations,
    window: usize,
    step: usize,
    families: &[CopulaFamily],
) -> Result<(Vec<Vec<RegimeAssignment>>, [RegimeSpec; 2])> {
    let mut out = Vec::with_capacity(model.structure().trees().len());
    for (t, tree) in model.structure().trees().iter().enumerate() {
        let mut row = Vec::with_capacity(tree.len());
        for k in 0..tree.len() {
            let series = edge_window_analysis(model, u, t, k, window, step, families)?;
            let [x, y] = model.edge_pseudo_observations(u, t, k)?;
            let tau = empirical_kendall_tau(&x, &y)?.tau_hat;
            let a = if t == 0 && series.family_counts().len() >= 2 {
                match classify_regimes(&series, tau) {
                    Err(Error::Tie(_)) => modal_assignment(&series, tau),
                    other => other,
                }
            } else {
                modal_assignment(&series, tau)
            };
            row.push(a.map_err(|e| Error::Precondition(format!("edge {} of tree {}: {e}", k + 1, t + 1)))?);
        }
        out.push(row);
    }
    let pick = |abnormal: bool| -> Vec<Vec<CopulaFamily>> {
        out.iter()
            .map(|r| r.iter().map(|a| if abnormal { a.abnormal.family } else { a.normal.family }).collect())
            .collect()
    };
    let normal = RegimeSpec::new(model.structure().clone(), pick(false))?;
    let abnormal = RegimeSpec::new(model.structure().clone(), pick(true))?;
    Ok((out, [normal, abnormal]))
}

/// One point of the log-likelihood difference series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LlDiffPoint {
    pub window_start: usize,
    pub window_end: usize,
    /// `loglik(abnormal) - loglik(normal)`; `None` when either family cannot be fitted.
    pub value: Option<f64>,
}

/// Per-window ML fits of both families on two given columns.
pub fn loglik_difference_columns(
    x: &[f64],
    y: &[f64],
    normal: CopulaFamily,
    abnormal: CopulaFamily,
    window: usize,
    step: usize,
) -> Result<Vec<LlDiffPoint>> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!("columns have lengths {} and {}", x.len(), y.len())));
    }
    let starts = window_starts(x.len(), window, step)?;
    Ok(starts
        .par_iter()
        .map(|&s| {
            let e = s + window;
            let (xs, ys) = (&x[s..e], &y[s..e]);
            let value = empirical_kendall_tau(xs, ys).ok().and_then(|tau| {
                let ll = |f: CopulaFamily| {
                    if f.admits_tau(tau.tau_hat) {
                        fit_family(xs, ys, f, None).ok().map(|p| p.loglik)
                    } else {
                        None
                    }
                };
                Some(ll(abnormal)? - ll(normal)?)
            });
            LlDiffPoint { window_start: s, window_end: e, value }
        })
        .collect())
}

/// `loglik(abnormal) - loglik(normal)` over rolling windows of columns `pair`.
pub fn loglik_difference(
    u: &PseudoObservations,
    pair: (usize, usize),
    normal: CopulaFamily,
    abnormal: CopulaFamily,
    window: usize,
    step: usize,
) -> Result<Vec<LlDiffPoint>> {
    check_pair_index(u, pair)?;
    loglik_difference_columns(&u.column(pair.0), &u.column(pair.1), normal, abnormal, window, step)
}

/// Writes `window_start,window_end,ll_diff`; gaps are empty fields.
pub fn write_ll_diff_csv<W: Write>(writer: W, points: &[LlDiffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window_start", "window_end", "ll_diff"])?;
    for p in points {
        let v = p.value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([p.window_start.to_string(), p.window_end.to_string(), v])?;
    }
    w.flush()?;
    Ok(())
}
