//! Bivariate copula families: Gauss, Student-t, Gumbel and its three
//! counter-clockwise rotations.
//!
//! Every family exposes its density, distribution function, the conditional
//! distribution functions ("h-functions") used to move pseudo-data between
//! vine trees, Kendall's tau, the classical tail dependence coefficients and
//! the role-aware quarter tail dependence.
//!
//! Gumbel parameters are always stored as `theta >= 1`; the rotation is part
//! of the family tag.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{norm_cdf, norm_quantile, t_cdf, t_ln_norm, t_quantile};

/// Upper bound on the Student-t degrees of freedom.
pub const NU_MAX: f64 = 100.0;
/// Exclusive lower bound on the Student-t degrees of freedom.
pub const NU_MIN: f64 = 2.0;
/// Degrees of freedom used when a Student-t copula is built from tau alone.
pub const DEFAULT_NU: f64 = 8.0;
/// Degrees of freedom at or above which a Student-t fit is reported as Gauss-like.
pub const GAUSS_LIKE_NU: f64 = 90.0;

const H_INV_TOL: f64 = 1e-10;
const H_INV_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CopulaFamily {
    Gauss,
    StudentT,
    Gumbel,
    Gumbel90,
    Gumbel180,
    Gumbel270,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 6] = [
        CopulaFamily::Gauss,
        CopulaFamily::StudentT,
        CopulaFamily::Gumbel,
        CopulaFamily::Gumbel90,
        CopulaFamily::Gumbel180,
        CopulaFamily::Gumbel270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Gauss => "Gauss",
            CopulaFamily::StudentT => "StudentT",
            CopulaFamily::Gumbel => "Gumbel",
            CopulaFamily::Gumbel90 => "Gumbel90",
            CopulaFamily::Gumbel180 => "Gumbel180",
            CopulaFamily::Gumbel270 => "Gumbel270",
        }
    }

    /// Number of free parameters (used for AIC/BIC).
    pub fn n_params(self) -> usize {
        match self {
            CopulaFamily::StudentT => 2,
            _ => 1,
        }
    }

    pub fn is_elliptical(self) -> bool {
        matches!(self, CopulaFamily::Gauss | CopulaFamily::StudentT)
    }

    pub fn is_gumbel(self) -> bool {
        !self.is_elliptical()
    }

    /// Family of the copula of `(V, U)` when `self` is the copula of `(U, V)`.
    pub fn transposed(self) -> CopulaFamily {
        match self {
            CopulaFamily::Gumbel90 => CopulaFamily::Gumbel270,
            CopulaFamily::Gumbel270 => CopulaFamily::Gumbel90,
            other => other,
        }
    }

    /// Whether the family can produce a Kendall's tau with the sign of `tau`.
    pub fn admits_tau(self, tau: f64) -> bool {
        match self {
            CopulaFamily::Gauss | CopulaFamily::StudentT => true,
            CopulaFamily::Gumbel | CopulaFamily::Gumbel180 => tau >= 0.0,
            CopulaFamily::Gumbel90 | CopulaFamily::Gumbel270 => tau <= 0.0,
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let family = match key.as_str() {
            "gauss" | "ga" | "gaussian" | "normal" => CopulaFamily::Gauss,
            "studentt" | "t" | "st" | "stt" | "student" => CopulaFamily::StudentT,
            "gumbel" | "gu" | "gumbel0" => CopulaFamily::Gumbel,
            "gumbel90" | "gu90" => CopulaFamily::Gumbel90,
            "gumbel180" | "gu180" => CopulaFamily::Gumbel180,
            "gumbel270" | "gu270" => CopulaFamily::Gumbel270,
            _ => return Err(Error::Parse(format!("unknown copula family `{s}`"))),
        };
        Ok(family)
    }
}

/// Asset class of one margin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetRole {
    Eq,
    Vol,
    Cmd,
}

impl fmt::Display for AssetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssetRole::Eq => "Eq",
            AssetRole::Vol => "Vol",
            AssetRole::Cmd => "Cmd",
        })
    }
}

impl FromStr for AssetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eq" | "equity" => Ok(AssetRole::Eq),
            "vol" | "volatility" => Ok(AssetRole::Vol),
            "cmd" | "com" | "commodity" => Ok(AssetRole::Cmd),
            _ => Err(Error::Role(format!("unknown asset role `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailDependence {
    pub lower: f64,
    pub upper: f64,
}

/// A validated parametric pair-copula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivariateCopula {
    family: CopulaFamily,
    theta: f64,
    nu: Option<f64>,
}

impl BivariateCopula {
    pub fn new(family: CopulaFamily, theta: f64, nu: Option<f64>) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::Parameter(format!("{family}: theta must be finite, got {theta}")));
        }
        match family {
            CopulaFamily::Gauss | CopulaFamily::StudentT => {
                if !(theta > -1.0 && theta < 1.0) {
                    return Err(Error::Parameter(format!(
                        "{family}: theta must lie in (-1, 1), got {theta}"
                    )));
                }
            }
            _ => {
                if theta < 1.0 {
                    return Err(Error::Parameter(format!(
                        "{family}: theta must be >= 1, got {theta}"
                    )));
                }
            }
        }
        match (family, nu) {
            (CopulaFamily::StudentT, Some(nu)) => {
                if !(nu > NU_MIN && nu <= NU_MAX) {
                    return Err(Error::Parameter(format!(
                        "StudentT: nu must lie in ({NU_MIN}, {NU_MAX}], got {nu}"
                    )));
                }
            }
            (CopulaFamily::StudentT, None) => {
                return Err(Error::Parameter("StudentT requires degrees of freedom".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Parameter(format!("{family} takes no degrees of freedom")))
            }
            (_, None) => {}
        }
        Ok(Self { family, theta, nu })
    }

    pub fn gauss(theta: f64) -> Result<Self> {
        Self::new(CopulaFamily::Gauss, theta, None)
    }

    pub fn student_t(theta: f64, nu: f64) -> Result<Self> {
        Self::new(CopulaFamily::StudentT, theta, Some(nu))
    }

    pub fn gumbel(family: CopulaFamily, theta: f64) -> Result<Self> {
        if family.is_elliptical() {
            return Err(Error::Parameter(format!("{family} is not a Gumbel family")));
        }
        Self::new(family, theta, None)
    }

    pub fn independence() -> Self {
        Self { family: CopulaFamily::Gauss, theta: 0.0, nu: None }
    }

    pub fn family(&self) -> CopulaFamily {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn n_params(&self) -> usize {
        self.family.n_params()
    }

    /// Student-t fits whose degrees of freedom sit near the upper box are
    /// practically Gaussian.
    pub fn is_gauss_like(&self) -> bool {
        self.nu.is_some_and(|nu| nu >= GAUSS_LIKE_NU)
    }

    /// Copula of `(V, U)`.
    pub fn transposed(&self) -> Self {
        Self { family: self.family.transposed(), ..*self }
    }

    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        Ok(self.ln_density_unchecked(u, v).exp())
    }

    pub fn ln_density(&self, u: f64, v: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        Ok(self.ln_density_unchecked(u, v))
    }

    /// Log-density without argument validation; callers guarantee `u, v` in (0,1).
    pub fn ln_density_unchecked(&self, u: f64, v: f64) -> f64 {
        match self.family {
            CopulaFamily::Gauss => {
                gauss_ln_density(self.theta, norm_quantile(u), norm_quantile(v))
            }
            CopulaFamily::StudentT => {
                let nu = self.nu.unwrap_or(DEFAULT_NU);
                let k = StudentTConsts::new(self.theta, nu);
                k.ln_density(t_quantile(u, nu), t_quantile(v, nu))
            }
            CopulaFamily::Gumbel => gumbel_ln_density(self.theta, u, v),
            CopulaFamily::Gumbel90 => gumbel_ln_density(self.theta, 1.0 - u, v),
            CopulaFamily::Gumbel180 => gumbel_ln_density(self.theta, 1.0 - u, 1.0 - v),
            CopulaFamily::Gumbel270 => gumbel_ln_density(self.theta, u, 1.0 - v),
        }
    }

    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        let value = match self.family {
            CopulaFamily::Gauss | CopulaFamily::StudentT => {
                if self.theta == 0.0 {
                    u * v
                } else {
                    // C(u, v) = integral of dC(u, s)/ds over s in [0, v]
                    quadrature::integrate(|s| self.h_unchecked(u, s.clamp(1e-300, 1.0)), 0.0, v, 1e-14)
                }
            }
            CopulaFamily::Gumbel => gumbel_cdf(self.theta, u, v),
            CopulaFamily::Gumbel90 => v - gumbel_cdf(self.theta, 1.0 - u, v),
            CopulaFamily::Gumbel180 => u + v - 1.0 + gumbel_cdf(self.theta, 1.0 - u, 1.0 - v),
            CopulaFamily::Gumbel270 => u - gumbel_cdf(self.theta, u, 1.0 - v),
        };
        Ok(value.clamp(0.0, u.min(v)))
    }

    /// Conditional distribution `h(u | v) = dC(u, v)/dv`.
    pub fn h_function(&self, u: f64, given_v: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("given_v", given_v)?;
        Ok(self.h_unchecked(u, given_v))
    }

    /// Conditional distribution `dC(u, v)/du`, i.e. of `V` given `U = given_u`.
    pub fn h_function_first(&self, given_u: f64, v: f64) -> Result<f64> {
        self.transposed().h_function(v, given_u)
    }

    pub(crate) fn h_unchecked(&self, u: f64, v: f64) -> f64 {
        let h = match self.family {
            CopulaFamily::Gauss => {
                let s = (1.0 - self.theta * self.theta).sqrt();
                norm_cdf((norm_quantile(u) - self.theta * norm_quantile(v)) / s)
            }
            CopulaFamily::StudentT => {
                let nu = self.nu.unwrap_or(DEFAULT_NU);
                let x1 = t_quantile(u, nu);
                let x2 = t_quantile(v, nu);
                student_t_h(self.theta, nu, x1, x2)
            }
            CopulaFamily::Gumbel => gumbel_h(self.theta, u, v),
            CopulaFamily::Gumbel90 => gumbel_h_complement(self.theta, 1.0 - u, v),
            CopulaFamily::Gumbel180 => gumbel_h_complement(self.theta, 1.0 - u, 1.0 - v),
            CopulaFamily::Gumbel270 => gumbel_h(self.theta, u, 1.0 - v),
        };
        h.clamp(0.0, 1.0)
    }

    /// Inverse of `h(. | given_v)`: the `u` with `h(u | given_v) = p`.
    pub fn h_inverse(&self, p: f64, given_v: f64) -> Result<f64> {
        check_unit("p", p)?;
        check_unit("given_v", given_v)?;
        self.h_inverse_unchecked(p, given_v)
    }

    /// Inverse of `dC(u, v)/du` in `v`, for fixed `given_u`.
    pub fn h_inverse_first(&self, p: f64, given_u: f64) -> Result<f64> {
        self.transposed().h_inverse(p, given_u)
    }

    pub(crate) fn h_inverse_unchecked(&self, p: f64, v: f64) -> Result<f64> {
        let u = match self.family {
            CopulaFamily::Gauss => {
                let s = (1.0 - self.theta * self.theta).sqrt();
                norm_cdf(norm_quantile(p) * s + self.theta * norm_quantile(v))
            }
            CopulaFamily::StudentT => {
                let nu = self.nu.unwrap_or(DEFAULT_NU);
                let x2 = t_quantile(v, nu);
                let scale = ((nu + x2 * x2) * (1.0 - self.theta * self.theta) / (nu + 1.0)).sqrt();
                t_cdf(t_quantile(p, nu + 1.0) * scale + self.theta * x2, nu)
            }
            CopulaFamily::Gumbel => gumbel_h_inverse(self.theta, p, v, false)?,
            CopulaFamily::Gumbel90 => 1.0 - gumbel_h_inverse(self.theta, p, v, true)?,
            CopulaFamily::Gumbel180 => 1.0 - gumbel_h_inverse(self.theta, p, 1.0 - v, true)?,
            CopulaFamily::Gumbel270 => gumbel_h_inverse(self.theta, p, 1.0 - v, false)?,
        };
        Ok(u)
    }

    /// Population Kendall's tau.
    pub fn tau(&self) -> f64 {
        match self.family {
            CopulaFamily::Gauss | CopulaFamily::StudentT => {
                std::f64::consts::FRAC_2_PI * self.theta.asin()
            }
            CopulaFamily::Gumbel | CopulaFamily::Gumbel180 => 1.0 - 1.0 / self.theta,
            CopulaFamily::Gumbel90 | CopulaFamily::Gumbel270 => -(1.0 - 1.0 / self.theta),
        }
    }

    /// Copula of `family` with Kendall's tau `tau`; Student-t gets [`DEFAULT_NU`].
    pub fn from_tau(family: CopulaFamily, tau: f64) -> Result<Self> {
        if !(tau > -1.0 && tau < 1.0) {
            return Err(Error::Parameter(format!("tau must lie in (-1, 1), got {tau}")));
        }
        if !family.admits_tau(tau) {
            return Err(Error::Incompatible { family, tau });
        }
        match family {
            CopulaFamily::Gauss => Self::gauss((std::f64::consts::FRAC_PI_2 * tau).sin()),
            CopulaFamily::StudentT => {
                Self::student_t((std::f64::consts::FRAC_PI_2 * tau).sin(), DEFAULT_NU)
            }
            _ => Self::gumbel(family, 1.0 / (1.0 - tau.abs())),
        }
    }

    pub fn tail_dependence(&self) -> TailDependence {
        match self.family {
            CopulaFamily::Gauss => TailDependence { lower: 0.0, upper: 0.0 },
            CopulaFamily::StudentT => {
                let lambda = student_t_tail_coefficient(self.theta, self.nu.unwrap_or(DEFAULT_NU));
                TailDependence { lower: lambda, upper: lambda }
            }
            CopulaFamily::Gumbel => {
                TailDependence { lower: 0.0, upper: gumbel_tail_coefficient(self.theta) }
            }
            CopulaFamily::Gumbel180 => {
                TailDependence { lower: gumbel_tail_coefficient(self.theta), upper: 0.0 }
            }
            CopulaFamily::Gumbel90 | CopulaFamily::Gumbel270 => {
                TailDependence { lower: 0.0, upper: 0.0 }
            }
        }
    }
}

impl fmt::Display for BivariateCopula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nu {
            Some(nu) => write!(f, "{}(theta={:.4}, nu={:.2})", self.family, self.theta, nu),
            None => write!(f, "{}(theta={:.4})", self.family, self.theta),
        }
    }
}

/// `2 - 2^(1/theta)`.
pub fn gumbel_tail_coefficient(theta: f64) -> f64 {
    2.0 - 2f64.powf(1.0 / theta)
}

/// `2 t_{nu+1}(-sqrt(nu+1) sqrt((1-theta)/(1+theta)))`, evaluated for any `nu > 0`.
pub fn student_t_tail_coefficient(theta: f64, nu: f64) -> f64 {
    let arg = -((nu + 1.0) * (1.0 - theta) / (1.0 + theta)).sqrt();
    2.0 * t_cdf(arg, nu + 1.0)
}

/// Role-aware quarter tail dependence of `c` for margins with roles `(role_u, role_v)`.
///
/// The pair `(Cmd, Cmd)` is not covered by the original case list; it is
/// treated like the equity/commodity pairs (lower tail).
pub fn quarter_tail_dependence(role_u: AssetRole, role_v: AssetRole, c: &BivariateCopula) -> f64 {
    use AssetRole::*;
    match (role_u, role_v) {
        (Vol, Vol) => c.tail_dependence().upper,
        (Eq, Vol) | (Cmd, Vol) => off_diagonal_tail(c, CopulaFamily::Gumbel90),
        (Eq, Eq) | (Cmd, Eq) | (Eq, Cmd) | (Cmd, Cmd) => c.tail_dependence().lower,
        (Vol, Eq) | (Vol, Cmd) => off_diagonal_tail(c, CopulaFamily::Gumbel270),
    }
}

/// Second/fourth quadrant tail: the upper TDC of the copula reflected back into
/// the first quadrant, for the one Gumbel rotation that lives in that quadrant
/// and for negatively dependent Student-t copulas.
fn off_diagonal_tail(c: &BivariateCopula, rotation: CopulaFamily) -> f64 {
    match c.family {
        CopulaFamily::StudentT if c.theta < 0.0 => {
            student_t_tail_coefficient(-c.theta, c.nu.unwrap_or(DEFAULT_NU))
        }
        f if f == rotation => gumbel_tail_coefficient(c.theta),
        _ => 0.0,
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} is outside the open unit interval")))
    }
}

// ---------------------------------------------------------------------------
// Family kernels. The fitting code evaluates these on pre-transformed data.
// ---------------------------------------------------------------------------

/// Gaussian copula log-density at normal scores `z1, z2`.
#[inline]
pub(crate) fn gauss_ln_density(rho: f64, z1: f64, z2: f64) -> f64 {
    let one_m = 1.0 - rho * rho;
    -0.5 * one_m.ln() - (rho * rho * (z1 * z1 + z2 * z2) - 2.0 * rho * z1 * z2) / (2.0 * one_m)
}

/// Constants of the bivariate t copula density for fixed `(rho, nu)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StudentTConsts {
    rho: f64,
    nu: f64,
    one_m: f64,
    ln_const: f64,
    half_nu_p1: f64,
}

impl StudentTConsts {
    pub(crate) fn new(rho: f64, nu: f64) -> Self {
        use statrs::function::gamma::ln_gamma;
        let one_m = 1.0 - rho * rho;
        // ln f2 normalizer minus twice the univariate one
        let ln_f2 = ln_gamma(0.5 * (nu + 2.0)) - ln_gamma(0.5 * nu)
            - (nu * std::f64::consts::PI).ln()
            - 0.5 * one_m.ln();
        let ln_const = ln_f2 - 2.0 * t_ln_norm(nu);
        Self { rho, nu, one_m, ln_const, half_nu_p1: 0.5 * (nu + 1.0) }
    }

    /// Log-density at t scores `x1, x2` (quantiles with `nu` degrees of freedom).
    #[inline]
    pub(crate) fn ln_density(&self, x1: f64, x2: f64) -> f64 {
        let q = (x1 * x1 + x2 * x2 - 2.0 * self.rho * x1 * x2) / (self.nu * self.one_m);
        self.ln_const - 0.5 * (self.nu + 2.0) * q.ln_1p()
            + self.half_nu_p1 * ((x1 * x1 / self.nu).ln_1p() + (x2 * x2 / self.nu).ln_1p())
    }
}

#[inline]
fn student_t_h(rho: f64, nu: f64, x1: f64, x2: f64) -> f64 {
    let scale = ((nu + x2 * x2) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
    t_cdf((x1 - rho * x2) / scale, nu + 1.0)
}

/// `ln(x^theta + y^theta)` without overflow.
#[inline]
fn ln_sum_pow(theta: f64, lnx: f64, lny: f64) -> f64 {
    let (hi, lo) = if lnx >= lny { (lnx, lny) } else { (lny, lnx) };
    theta * hi + (theta * (lo - hi)).exp().ln_1p()
}

/// Base Gumbel log-density from `x = -ln u`, `y = -ln v` and their logs.
#[inline]
pub(crate) fn gumbel_ln_density_xy(theta: f64, x: f64, y: f64, lnx: f64, lny: f64) -> f64 {
    let ln_a = ln_sum_pow(theta, lnx, lny);
    let w = (ln_a / theta).exp();
    -w + x + y + (theta - 1.0) * (lnx + lny) + (1.0 / theta - 2.0) * ln_a + (w + theta - 1.0).ln()
}

#[inline]
fn gumbel_ln_density(theta: f64, u: f64, v: f64) -> f64 {
    let x = -u.ln();
    let y = -v.ln();
    gumbel_ln_density_xy(theta, x, y, x.ln(), y.ln())
}

fn gumbel_cdf(theta: f64, u: f64, v: f64) -> f64 {
    let lnx = (-u.ln()).ln();
    let lny = (-v.ln()).ln();
    (-(ln_sum_pow(theta, lnx, lny) / theta).exp()).exp()
}

/// Log of the base Gumbel `dC(u, v)/dv`, written as
/// `-y expm1(L / theta) - (1 - 1/theta) L` with `L = ln(1 + (x/y)^theta)` so
/// that both `h` and `1 - h` keep relative precision.
#[inline]
fn gumbel_ln_h(theta: f64, u: f64, v: f64) -> f64 {
    if theta == 1.0 {
        return u.ln();
    }
    let x = -u.ln();
    let y = -v.ln();
    let d = theta * (x.ln() - y.ln());
    let l = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    -y * (l / theta).exp_m1() - (1.0 - 1.0 / theta) * l
}

#[inline]
fn gumbel_h(theta: f64, u: f64, v: f64) -> f64 {
    gumbel_ln_h(theta, u, v).exp()
}

/// `1 - gumbel_h(u | v)` without cancellation.
#[inline]
fn gumbel_h_complement(theta: f64, u: f64, v: f64) -> f64 {
    -gumbel_ln_h(theta, u, v).exp_m1()
}

/// Solves `gumbel_h(u | v) = p` for `u`, or `gumbel_h_complement(u | v) = p`
/// when `complement` is set, with Newton steps safeguarded by a shrinking
/// bisection bracket.
fn gumbel_h_inverse(theta: f64, p: f64, v: f64, complement: bool) -> Result<f64> {
    if theta == 1.0 {
        return Ok(if complement { 1.0 - p } else { p });
    }
    let p = p.clamp(1e-300, 1.0);
    // increasing in u in both cases
    let f = |u: f64| if complement { p - gumbel_h_complement(theta, u, v) } else { gumbel_h(theta, u, v) - p };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut u = if complement { 1.0 - p } else { p }.clamp(1e-300, 1.0 - 1e-16);
    for _ in 0..H_INV_MAX_ITER {
        let fu = f(u);
        if fu == 0.0 {
            return Ok(u);
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let dens = gumbel_ln_density(theta, u, v).exp();
        let newton = u - fu / dens;
        let next = if dens.is_finite() && dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - u).abs();
        u = next;
        if step < 1e-15 * u.max(1e-300) || hi - lo < H_INV_TOL * 1e-2 {
            return Ok(u);
        }
    }
    if hi - lo < H_INV_TOL {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Convergence(format!(
            "Gumbel h-inverse (theta={theta}, p={p}, v={v}) did not converge"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_density(c: &BivariateCopula, u: f64, v: f64, h: f64) -> f64 {
        let cdf = |a: f64, b: f64| c.cdf(a, b).unwrap();
        (cdf(u + h, v + h) - cdf(u + h, v - h) - cdf(u - h, v + h) + cdf(u - h, v - h)) / (4.0 * h * h)
    }

    fn zoo() -> Vec<BivariateCopula> {
        vec![
            BivariateCopula::gauss(0.0).unwrap(),
            BivariateCopula::gauss(0.6).unwrap(),
            BivariateCopula::gauss(-0.85).unwrap(),
            BivariateCopula::student_t(0.4, 4.0).unwrap(),
            BivariateCopula::student_t(-0.7, 2.5).unwrap(),
            BivariateCopula::student_t(0.2, 60.0).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel, 1.0).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel90, 1.7).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel180, 3.5).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel270, 1.3).unwrap(),
            BivariateCopula::gumbel(CopulaFamily::Gumbel90, 6.0).unwrap(),
        ]
    }

    #[test]
    fn independence_cases() {
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 1.0).unwrap();
        for &(u, v) in &[(0.1, 0.2), (0.5, 0.5), (0.93, 0.04)] {
            assert!((g.density(u, v).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((g.cdf(0.4, 0.5).unwrap() - 0.2).abs() < 1e-14);
        let ga = BivariateCopula::gauss(0.0).unwrap();
        assert!((ga.density(0.3, 0.7).unwrap() - 1.0).abs() < 1e-14);
        for &v in &[0.01, 0.5, 0.99] {
            assert!((ga.h_function(0.37, v).unwrap() - 0.37).abs() < 1e-14);
        }
    }

    #[test]
    fn gumbel_closed_form_values() {
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap();
        let expected = (-(2.0 * 2f64.ln().powi(2)).sqrt()).exp();
        assert!((g.cdf(0.5, 0.5).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.3753).abs() < 1e-4);
        let g90 = BivariateCopula::gumbel(CopulaFamily::Gumbel90, 2.0).unwrap();
        let base = g.cdf(0.6, 0.5).unwrap();
        assert!((g90.cdf(0.4, 0.5).unwrap() - (0.5 - base)).abs() < 1e-15);
    }

    #[test]
    fn gauss_median_h() {
        let c = BivariateCopula::gauss(0.5).unwrap();
        assert!((c.h_function(0.5, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn density_matches_cdf_finite_differences() {
        for c in zoo() {
            for &(u, v) in &[(0.5, 0.5), (0.2, 0.7), (0.8, 0.3), (0.15, 0.12), (0.9, 0.85)] {
                let d = c.density(u, v).unwrap();
                let fd = fd_density(&c, u, v, 1e-4);
                // the fourth difference of the cdf carries ~1e-8 rounding noise
                assert!((fd - d).abs() < 1e-4 * d + 1e-8, "{c} at ({u},{v}): density {d} vs fd {fd}");
            }
        }
    }

    #[test]
    fn h_matches_cdf_derivative() {
        for c in zoo() {
            for &(u, v) in &[(0.3, 0.6), (0.7, 0.2), (0.05, 0.5)] {
                let step = 1e-5;
                let fd = (c.cdf(u, v + step).unwrap() - c.cdf(u, v - step).unwrap()) / (2.0 * step);
                let h = c.h_function(u, v).unwrap();
                assert!((fd - h).abs() < 1e-5, "{c}: h={h} fd={fd}");
                let fd1 = (c.cdf(u + step, v).unwrap() - c.cdf(u - step, v).unwrap()) / (2.0 * step);
                let h1 = c.h_function_first(u, v).unwrap();
                assert!((fd1 - h1).abs() < 1e-5, "{c}: h1={h1} fd={fd1}");
            }
        }
    }

    #[test]
    fn h_inverse_round_trip_grid() {
        for c in zoo() {
            for i in 1..=20 {
                for j in 1..=20 {
                    let u = i as f64 / 21.0;
                    let v = j as f64 / 21.0;
                    let p = c.h_function(u, v).unwrap();
                    // beyond 1 - 1e-9 the double nearest p no longer pins u to 1e-8
                    if p <= 0.0 || p >= 1.0 - 1e-9 {
                        continue;
                    }
                    let back = c.h_inverse(p, v).unwrap();
                    assert!((back - u).abs() < 1e-8, "{c}: u={u} v={v} p={p} back={back}");
                    let p1 = c.h_function_first(v, u).unwrap();
                    if p1 > 0.0 && p1 < 1.0 - 1e-9 {
                        let back1 = c.h_inverse_first(p1, v).unwrap();
                        assert!((back1 - u).abs() < 1e-8, "{c}: first-arg round trip");
                    }
                }
            }
        }
    }

    #[test]
    fn h_is_monotone_in_u() {
        for c in zoo() {
            for &v in &[0.05, 0.5, 0.95] {
                let mut prev = 0.0;
                for i in 1..200 {
                    let h = c.h_function(i as f64 / 200.0, v).unwrap();
                    assert!(h >= prev - 1e-15, "{c}");
                    prev = h;
                }
            }
        }
    }

    #[test]
    fn tau_and_inverse() {
        assert_eq!(BivariateCopula::gauss(0.0).unwrap().tau(), 0.0);
        let g = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap();
        assert!((g.tau() - 0.5).abs() < 1e-15);
        let g90 = BivariateCopula::gumbel(CopulaFamily::Gumbel90, 2.0).unwrap();
        assert_eq!(g90.tau(), -g.tau());
        let back = BivariateCopula::from_tau(CopulaFamily::Gumbel, 0.5).unwrap();
        assert!((back.theta() - 2.0).abs() < 1e-12);
        assert_eq!(BivariateCopula::from_tau(CopulaFamily::Gauss, 0.0).unwrap().theta(), 0.0);
        assert!(matches!(
            BivariateCopula::from_tau(CopulaFamily::Gumbel90, 0.3),
            Err(Error::Incompatible { .. })
        ));
        for fam in CopulaFamily::ALL {
            for &tau in &[-0.8, -0.3, 0.0, 0.25, 0.7] {
                if let Ok(c) = BivariateCopula::from_tau(fam, tau) {
                    assert!((c.tau() - tau).abs() < 1e-6, "{fam} {tau}");
                }
            }
        }
    }

    #[test]
    fn tail_coefficients() {
        let td = BivariateCopula::gauss(0.9).unwrap().tail_dependence();
        assert_eq!((td.lower, td.upper), (0.0, 0.0));
        let td = BivariateCopula::gumbel(CopulaFamily::Gumbel, 2.0).unwrap().tail_dependence();
        assert_eq!(td.lower, 0.0);
        assert!((td.upper - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        // nu = 1 lies outside the fitted box but the closed form is still defined
        let lambda = student_t_tail_coefficient(0.0, 1.0);
        let closed = 2.0 * 0.5 * (1.0 - 2f64.sqrt() / 2.0);
        assert!((lambda - closed).abs() < 1e-12);
        assert!((lambda - 0.2929).abs() < 1e-4);
    }

    #[test]
    fn parameter_validation() {
        assert!(BivariateCopula::gauss(1.0).is_err());
        assert!(BivariateCopula::student_t(0.2, 2.0).is_err());
        assert!(BivariateCopula::student_t(0.2, 100.0).is_ok());
        assert!(BivariateCopula::student_t(0.2, 100.5).is_err());
        assert!(BivariateCopula::gumbel(CopulaFamily::Gumbel90, 0.5).is_err());
        assert!(BivariateCopula::new(CopulaFamily::Gauss, 0.1, Some(4.0)).is_err());
        let g = BivariateCopula::gauss(0.1).unwrap();
        assert!(matches!(g.density(0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(g.cdf(0.5, 1.0), Err(Error::Domain(_))));
        assert!(g.h_function(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn family_parsing() {
        for fam in CopulaFamily::ALL {
            assert_eq!(fam.name().parse::<CopulaFamily>().unwrap(), fam);
        }
        assert_eq!("Student-t".parse::<CopulaFamily>().unwrap(), CopulaFamily::StudentT);
        assert_eq!("Gu90".parse::<CopulaFamily>().unwrap(), CopulaFamily::Gumbel90);
        assert!("Clayton".parse::<CopulaFamily>().is_err());
    }
}
