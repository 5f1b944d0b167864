//! Price ingestion, log returns and rank-based pseudo-observations.
//!
//! Input files are comma-separated with a header row `date,<label>,...`, an
//! ISO-8601 date in the first column and dot-decimal levels elsewhere. Rows
//! with any missing cell (empty, `NA`, `NaN`, `null`) are dropped.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::copulas::AssetRole;
use crate::error::{Error, Result};

/// Clamp applied to already-uniform input.
pub const UNIFORM_CLAMP: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    pub roles: Vec<AssetRole>,
    /// Row-major `T x d` log returns.
    values: Vec<f64>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        labels: Vec<String>,
        roles: Vec<AssetRole>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = labels.len();
        if d < 2 || roles.len() != d {
            return Err(Error::Precondition(format!(
                "a panel needs d >= 2 labels with one role each (got {} labels, {} roles)",
                d,
                roles.len()
            )));
        }
        if rows.len() != dates.len() || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Precondition("panel rows must match dates and labels".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse("dates must be strictly increasing".into()));
        }
        Ok(Self { dates, labels, roles, values: rows.concat() })
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.values[t * d..(t + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim()).copied().collect()
    }
}

/// `T x d` matrix of values in the open unit interval, with per-column roles.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoObservations {
    pub labels: Vec<String>,
    pub roles: Vec<AssetRole>,
    /// Observation dates, when the data came from a dated source.
    pub dates: Option<Vec<NaiveDate>>,
    values: Vec<f64>,
    dim: usize,
}

impl PseudoObservations {
    /// Builds pseudo-observations from rows; every entry must lie in (0, 1).
    pub fn from_rows(labels: Vec<String>, roles: Vec<AssetRole>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = labels.len();
        if dim == 0 || roles.len() != dim {
            return Err(Error::Precondition("labels and roles must have equal, nonzero length".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Precondition(format!("row {t} has {} columns, expected {dim}", r.len())));
            }
            for &x in r {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Domain(format!("row {t}: value {x} outside (0, 1)")));
                }
            }
            values.extend_from_slice(r);
        }
        Ok(Self { labels, roles, dates: None, values, dim })
    }

    /// Unlabelled data (columns `V1..Vd`, all equity roles); convenient for simulations.
    pub fn unlabelled(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let labels = (1..=dim).map(|j| format!("V{j}")).collect();
        Self::from_rows(labels, vec![AssetRole::Eq; dim], rows)
    }

    pub fn with_dates(mut self, dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.len() != self.n_obs() {
            return Err(Error::Precondition("one date per observation required".into()));
        }
        self.dates = Some(dates);
        Ok(self)
    }

    pub fn n_obs(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Rows `[start, end)` as a new data set.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            labels: self.labels.clone(),
            roles: self.roles.clone(),
            dates: self.dates.as_ref().map(|d| d[start..end].to_vec()),
            values: self.values[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
        }
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &t in idx {
            values.extend_from_slice(self.row(t));
        }
        Self {
            labels: self.labels.clone(),
            roles: self.roles.clone(),
            dates: self.dates.as_ref().map(|d| idx.iter().map(|&t| d[t]).collect()),
            values,
            dim: self.dim,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.n_obs() {
            let mut rec = vec![match &self.dates {
                Some(d) => d[t].to_string(),
                None => t.to_string(),
            }];
            rec.extend(self.row(t).iter().map(|x| format!("{x:.12}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "#n/a" | "nan" | "null"
    )
}

struct RawTable {
    labels: Vec<String>,
    dates: Vec<NaiveDate>,
    rows: Vec<Vec<f64>>,
    first_col_is_date: bool,
}

fn read_table<R: Read>(reader: R, require_dates: bool) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(format!("bad header: {e}")))?.clone();
    if header.len() < 3 {
        return Err(Error::Parse("expected a date column and at least two series".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    let mut first_col_is_date = true;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {} has {} cells, header has {}",
                line + 2,
                rec.len(),
                header.len()
            )));
        }
        let key = &rec[0];
        let date = match NaiveDate::parse_from_str(key, "%Y-%m-%d") {
            Ok(d) => Some(d),
            Err(_) if !require_dates && key.parse::<usize>().is_ok() => {
                first_col_is_date = false;
                None
            }
            Err(e) => return Err(Error::Parse(format!("row {}: bad date `{key}`: {e}", line + 2))),
        };
        if rec.iter().skip(1).any(is_missing) {
            continue;
        }
        let mut row = Vec::with_capacity(labels.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!("row {}, column `{}`: non-numeric cell `{cell}`", line + 2, labels[j]))
            })?;
            row.push(v);
        }
        dates.push(date.unwrap_or_default());
        rows.push(row);
    }
    Ok(RawTable { labels, dates, rows, first_col_is_date })
}

fn resolve_roles(labels: &[String], role_map: &HashMap<String, AssetRole>) -> Result<Vec<AssetRole>> {
    labels
        .iter()
        .map(|l| {
            role_map
                .get(l)
                .copied()
                .ok_or_else(|| Error::Role(format!("column `{l}` has no asset role")))
        })
        .collect()
}

/// Reads price levels and converts them to log returns.
pub fn parse_levels<R: Read>(reader: R, role_map: &HashMap<String, AssetRole>) -> Result<ReturnPanel> {
    let table = read_table(reader, true)?;
    let roles = resolve_roles(&table.labels, role_map)?;
    if table.rows.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 complete rows of levels, found {}",
            table.rows.len()
        )));
    }
    if table.dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parse("dates must be strictly increasing".into()));
    }
    for (t, row) in table.rows.iter().enumerate() {
        if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Parse(format!(
                "level {v} in column `{}` (data row {}) is not a positive number",
                table.labels[j],
                t + 1
            )));
        }
    }
    let returns: Vec<Vec<f64>> = table
        .rows
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(p1, p0)| (p1 / p0).ln()).collect())
        .collect();
    ReturnPanel::new(table.dates[1..].to_vec(), table.labels, roles, returns)
}

pub fn load_levels(path: impl AsRef<Path>, role_map: &HashMap<String, AssetRole>) -> Result<ReturnPanel> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_levels(file, role_map)
}

/// Reads data that is already on the unit scale (e.g. residual PITs),
/// clamping to `[1e-10, 1 - 1e-10]`. The first column may be a date or a row index.
pub fn parse_uniforms<R: Read>(reader: R, role_map: &HashMap<String, AssetRole>) -> Result<PseudoObservations> {
    let table = read_table(reader, false)?;
    let roles = resolve_roles(&table.labels, role_map)?;
    let rows: Vec<Vec<f64>> = table
        .rows
        .iter()
        .enumerate()
        .map(|(t, r)| {
            r.iter()
                .map(|&x| {
                    if (0.0..=1.0).contains(&x) {
                        Ok(x.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP))
                    } else {
                        Err(Error::Domain(format!("data row {}: value {x} outside [0, 1]", t + 1)))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let obs = PseudoObservations::from_rows(table.labels, roles, &rows)?;
    if table.first_col_is_date && !rows.is_empty() {
        obs.with_dates(table.dates)
    } else {
        Ok(obs)
    }
}

pub fn load_uniforms(path: impl AsRef<Path>, role_map: &HashMap<String, AssetRole>) -> Result<PseudoObservations> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_uniforms(file, role_map)
}

/// Rank transform of one column: average ranks over `T + 1`, with tied
/// groups spread by `1 / (10 (T + 1))` in original index order.
pub fn rank_pit_column(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("rank transform input contains NaN".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps original index order inside tie groups
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let denom = (n + 1) as f64;
    let eps = 1.0 / (10.0 * denom);
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let m = end - start;
        if m == n && n > 1 {
            return Err(Error::Degenerate("cannot rank-transform a constant column".into()));
        }
        // ranks start+1 ..= end, average (start + end + 1) / 2
        let avg = (start + end + 1) as f64 / 2.0;
        let center = (m as f64 - 1.0) / 2.0;
        for (k, &idx) in order[start..end].iter().enumerate() {
            out[idx] = avg / denom + (k as f64 - center) * eps;
        }
        start = end;
    }
    Ok(out)
}

/// Column-wise rank probability integral transform.
pub fn rank_pit(panel: &ReturnPanel) -> Result<PseudoObservations> {
    let t = panel.n_obs();
    if t < 10 {
        return Err(Error::Precondition(format!("rank transform needs T >= 10, got {t}")));
    }
    let d = panel.dim();
    let cols = (0..d)
        .map(|j| {
            rank_pit_column(&panel.column(j))
                .map_err(|e| Error::Degenerate(format!("column `{}`: {e}", panel.labels[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..t).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    PseudoObservations::from_rows(panel.labels.clone(), panel.roles.clone(), &rows)?
        .with_dates(panel.dates.clone())
}

pub fn write_returns<W: Write>(panel: &ReturnPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.labels.iter().cloned());
    w.write_record(&header)?;
    for t in 0..panel.n_obs() {
        let mut rec = vec![panel.dates[t].to_string()];
        rec.extend(panel.row(t).iter().map(|x| format!("{x:.12}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles(labels: &[&str]) -> HashMap<String, AssetRole> {
        labels.iter().map(|l| (l.to_string(), AssetRole::Eq)).collect()
    }

    #[test]
    fn log_returns() {
        let csv = "date,A,B\n2020-01-01,100,100\n2020-01-02,110,100\n";
        let p = parse_levels(csv.as_bytes(), &roles(&["A", "B"])).unwrap();
        assert_eq!(p.n_obs(), 1);
        assert!((p.row(0)[0] - 1.1f64.ln()).abs() < 1e-15);
        assert!((p.row(0)[0] - 0.09531).abs() < 1e-5);
        assert_eq!(p.row(0)[1], 0.0);
        let csv = "date,A,B\n2020-01-01,100,1\n2020-01-02,100,2\n2020-01-03,100,3\n";
        let p = parse_levels(csv.as_bytes(), &roles(&["A", "B"])).unwrap();
        assert_eq!(p.column(0), vec![0.0, 0.0]);
    }

    #[test]
    fn missing_rows_are_dropped() {
        let csv = "date,A,B\n2020-01-01,100,100\n2020-01-02,NA,100\n2020-01-03,,101\n2020-01-06,120,102\n";
        let p = parse_levels(csv.as_bytes(), &roles(&["A", "B"])).unwrap();
        assert_eq!(p.n_obs(), 1);
        assert!((p.row(0)[0] - 1.2f64.ln()).abs() < 1e-15);
        assert_eq!(p.dates[0].to_string(), "2020-01-06");
    }

    #[test]
    fn ingestion_errors() {
        let r = roles(&["A", "B"]);
        assert!(matches!(parse_levels("date,A,B\n2020-01-01,1,x\n2020-01-02,1,1\n".as_bytes(), &r), Err(Error::Parse(_))));
        assert!(matches!(parse_levels("date,A,B\n2020-01-01,1,1\n".as_bytes(), &r), Err(Error::Degenerate(_))));
        assert!(matches!(parse_levels("date,A,C\n2020-01-01,1,1\n2020-01-02,1,1\n".as_bytes(), &r), Err(Error::Role(_))));
        assert!(matches!(parse_levels("date,A,B\n01/02/2020,1,1\n".as_bytes(), &r), Err(Error::Parse(_))));
    }

    #[test]
    fn complete_rows_give_t_minus_one_returns() {
        let mut csv = String::from("date,A,B\n");
        let start = NaiveDate::from_ymd_opt(2002, 1, 1).unwrap();
        for i in 0..3435 {
            let d = start + chrono::Days::new(i);
            csv.push_str(&format!("{d},{},{}\n", 100.0 + (i % 7) as f64, 50.0 + (i % 5) as f64));
        }
        let p = parse_levels(csv.as_bytes(), &roles(&["A", "B"])).unwrap();
        assert_eq!(p.n_obs(), 3434);
    }

    #[test]
    fn rank_transform_examples() {
        assert_eq!(rank_pit_column(&[3.0, 1.0, 2.0]).unwrap(), vec![0.75, 0.25, 0.5]);
        let inc = rank_pit_column(&[-1.0, 0.5, 2.0, 9.0]).unwrap();
        for (a, b) in inc.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
        let tied = rank_pit_column(&[1.0, 1.0, 2.0]).unwrap();
        assert!(tied[0] < tied[1] && tied[1] < tied[2]);
        assert!((0.5 * (tied[0] + tied[1]) - 0.375).abs() < 1e-15);
        assert!(tied.iter().all(|&u| u > 0.0 && u < 1.0));
        assert!(rank_pit_column(&[2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn uniforms_are_clamped() {
        let csv = "date,A,B\n0,0.0,0.5\n1,1.0,0.25\n";
        let u = parse_uniforms(csv.as_bytes(), &roles(&["A", "B"])).unwrap();
        assert_eq!(u.row(0)[0], UNIFORM_CLAMP);
        assert_eq!(u.row(1)[0], 1.0 - UNIFORM_CLAMP);
        assert!(u.dates.is_none());
        assert!(parse_uniforms("date,A,B\n0,1.5,0.5\n".as_bytes(), &roles(&["A", "B"])).is_err());
    }
}
