//! Two-regime Markov-switching R-vine copulas.
//!
//! Regime index 0 is the "normal" regime and index 1 the "abnormal" one.

mod em;
mod filter;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PseudoObservations;
use crate::error::{Error, Result};
use crate::vine::{open_uniform, RVineModel, VineModelFile};

pub use em::{default_init, em_fit, EmOptions, EmTrace, InitialRule, RegimeSpec};
pub use filter::{filter_log_densities, hamilton_filter, kim_smoother, update_transition, FilterOutput, SmoothedOutput};

/// Row-stochastic 2x2 matrix, `p[k][l] = P(S_t = l | S_{t-1} = k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct TransitionMatrix([[f64; 2]; 2]);

impl TransitionMatrix {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self> {
        for row in &p {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Parameter(format!("transition entries must lie in [0, 1], got {row:?}")));
            }
            if (row[0] + row[1] - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!("transition row {row:?} does not sum to 1")));
            }
        }
        Ok(Self(p))
    }

    /// Matrix with staying probabilities `p00` and `p11`.
    pub fn from_diagonal(p00: f64, p11: f64) -> Result<Self> {
        Self::new([[p00, 1.0 - p00], [1.0 - p11, p11]])
    }

    pub fn identity() -> Self {
        Self([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.0[from][to]
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        self.0
    }

    /// Stationary distribution; `(0.5, 0.5)` for the identity.
    pub fn stationary(&self) -> [f64; 2] {
        let (a, b) = (self.0[0][1], self.0[1][0]);
        if a + b == 0.0 {
            [0.5, 0.5]
        } else {
            [b / (a + b), a / (a + b)]
        }
    }

    /// The same chain with the two states relabelled.
    pub fn swapped(&self) -> Self {
        Self([[self.0[1][1], self.0[1][0]], [self.0[0][1], self.0[0][0]]])
    }
}

impl TryFrom<[[f64; 2]; 2]> for TransitionMatrix {
    type Error = Error;

    fn try_from(p: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(p)
    }
}

impl From<TransitionMatrix> for [[f64; 2]; 2] {
    fn from(p: TransitionMatrix) -> Self {
        p.0
    }
}

/// Two regime vines driven by a hidden two-state Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct MsrVineModel {
    pub regimes: [RVineModel; 2],
    pub transition: TransitionMatrix,
    /// Distribution of the first state.
    pub initial: [f64; 2],
}

impl MsrVineModel {
    pub fn new(regimes: [RVineModel; 2], transition: TransitionMatrix, initial: [f64; 2]) -> Result<Self> {
        if regimes[0].dim() != regimes[1].dim() {
            return Err(Error::Precondition(format!(
                "regime dimensions differ: {} and {}",
                regimes[0].dim(),
                regimes[1].dim()
            )));
        }
        if initial.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (initial[0] + initial[1] - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("initial distribution {initial:?} is not a probability vector")));
        }
        Ok(Self { regimes, transition, initial })
    }

    pub fn dim(&self) -> usize {
        self.regimes[0].dim()
    }

    /// The same model with regimes, transition matrix and initial law relabelled.
    pub fn swapped(&self) -> Self {
        Self {
            regimes: [self.regimes[1].clone(), self.regimes[0].clone()],
            transition: self.transition.swapped(),
            initial: [self.initial[1], self.initial[0]],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MsrModelFile {
            normal: VineModelFile::from(&self.regimes[0]),
            abnormal: VineModelFile::from(&self.regimes[1]),
            transition: self.transition.rows(),
            initial: self.initial,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: MsrModelFile = serde_json::from_str(s)?;
        Self::new([f.normal.into_model()?, f.abnormal.into_model()?], TransitionMatrix::new(f.transition)?, f.initial)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MsrModelFile {
    normal: VineModelFile,
    abnormal: VineModelFile,
    transition: [[f64; 2]; 2],
    initial: [f64; 2],
}

/// Copula density of regime `k` (0 or 1) at one observation.
pub fn regime_density(m: &MsrVineModel, u_t: &[f64], k: usize) -> Result<f64> {
    let model = m.regimes.get(k).ok_or_else(|| Error::Precondition(format!("regime index {k} is not 0 or 1")))?;
    Ok(model.log_density(u_t)?.exp())
}

/// Draws `n` observations and the hidden state path; deterministic in `seed`.
pub fn simulate_ms(m: &MsrVineModel, n: usize, seed: u64) -> Result<(PseudoObservations, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut s = usize::from(open_uniform(&mut rng) >= m.initial[0]);
    for t in 0..n {
        if t > 0 {
            s = usize::from(open_uniform(&mut rng) >= m.transition.get(s, 0));
        }
        states.push(s);
        rows.push(m.regimes[s].simulate_row(&mut rng)?);
    }
    let labels = m.regimes[0].labels.clone();
    let roles = m.regimes[0].roles.clone();
    Ok((PseudoObservations::from_rows(labels, roles, &rows)?, states))
}

/// Writes `date,p_normal,p_abnormal` and, when `ma_window > 0`, a trailing
/// moving average of `p_abnormal` in column `ma`. Without dates the first
/// column holds the 1-based row index.
pub fn write_smoothed_csv<W: Write>(
    writer: W,
    sm: &SmoothedOutput,
    dates: Option<&[chrono::NaiveDate]>,
    ma_window: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date", "p_normal", "p_abnormal"];
    if ma_window > 0 {
        header.push("ma");
    }
    w.write_record(&header)?;
    let mut running = 0.0;
    for (t, p) in sm.smoothed.iter().enumerate() {
        let date = match dates {
            Some(d) => d[t].to_string(),
            None => (t + 1).to_string(),
        };
        let mut rec = vec![date, p[0].to_string(), p[1].to_string()];
        if ma_window > 0 {
            running += p[1];
            if t >= ma_window {
                running -= sm.smoothed[t - ma_window][1];
            }
            let len = (t + 1).min(ma_window);
            rec.push((running / len as f64).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::{BivariateCopula, CopulaFamily};
    use crate::vine::RVineStructure;

    fn pair_model(c: BivariateCopula) -> RVineModel {
        RVineModel::new(RVineStructure::d_vine(&[0, 1]).unwrap(), vec![vec![c]]).unwrap()
    }

    #[test]
    fn transition_validation() {
        assert!(TransitionMatrix::new([[0.9, 0.1], [0.2, 0.8]]).is_ok());
        assert!(TransitionMatrix::new([[0.9, 0.2], [0.2, 0.8]]).is_err());
        assert!(TransitionMatrix::new([[1.1, -0.1], [0.2, 0.8]]).is_err());
        let p = TransitionMatrix::from_diagonal(0.9, 0.7).unwrap();
        let pi = p.stationary();
        assert!((pi[0] * 0.1 - pi[1] * 0.3).abs() < 1e-15);
    }

    #[test]
    fn regime_density_delegates() {
        let ind = RVineModel::independence(RVineStructure::d_vine(&[0, 1]).unwrap());
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap();
        let m = MsrVineModel::new([ind, pair_model(g)], TransitionMatrix::identity(), [1.0, 0.0]).unwrap();
        assert!((regime_density(&m, &[0.5, 0.5], 0).unwrap() - 1.0).abs() < 1e-14);
        let want = g.density(0.5, 0.5).unwrap();
        assert!((regime_density(&m, &[0.5, 0.5], 1).unwrap() - want).abs() < 1e-12);
        assert!(regime_density(&m, &[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn simulation_follows_the_chain() {
        let a = pair_model(BivariateCopula::gauss(0.3).unwrap());
        let b = pair_model(BivariateCopula::gauss(-0.3).unwrap());
        let m = MsrVineModel::new([a.clone(), b.clone()], TransitionMatrix::identity(), [1.0, 0.0]).unwrap();
        let (_, s) = simulate_ms(&m, 500, 1).unwrap();
        assert!(s.iter().all(|&k| k == 0));

        let p = TransitionMatrix::new([[0.7, 0.3], [0.4, 0.6]]).unwrap();
        let m = MsrVineModel::new([a, b], p, [0.5, 0.5]).unwrap();
        let (u, s) = simulate_ms(&m, 100_000, 2).unwrap();
        assert_eq!(u.n_obs(), 100_000);
        let mut counts = [[0.0f64; 2]; 2];
        for w in s.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
        for k in 0..2 {
            let row = counts[k][0] + counts[k][1];
            for l in 0..2 {
                assert!((counts[k][l] / row - p.get(k, l)).abs() < 0.01);
            }
        }
        assert_eq!(simulate_ms(&m, 50, 9).unwrap(), simulate_ms(&m, 50, 9).unwrap());
    }

    #[test]
    fn model_file_round_trip() {
        let a = pair_model(BivariateCopula::student_t(0.3, 4.0).unwrap());
        let b = pair_model(BivariateCopula::gumbel(CopulaFamily::Gumbel180, 1.5).unwrap());
        let m = MsrVineModel::new([a, b], TransitionMatrix::from_diagonal(0.95, 0.9).unwrap(), [0.25, 0.75]).unwrap();
        assert_eq!(MsrVineModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn smoothed_csv_has_moving_average() {
        let sm = SmoothedOutput { smoothed: vec![[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], pairwise: vec![] };
        let mut buf = Vec::new();
        write_smoothed_csv(&mut buf, &sm, None, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "date,p_normal,p_abnormal,ma");
        assert_eq!(lines[2], "2,0,1,0.5");
        assert_eq!(lines[3], "3,0,1,1");
    }
}
