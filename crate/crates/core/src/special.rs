//! Univariate normal and Student-t building blocks used by the elliptical copulas.

use statrs::function::{beta, erf, gamma};
use std::f64::consts::{PI, SQRT_2};

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Normal quantile: inverse complementary error function plus one Newton step.
pub fn norm_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // work in the tail that keeps relative precision
    let (q, y) = if x > 0.0 { (1.0 - p, -x) } else { (p, x) };
    let step = (norm_cdf(y) - q) / norm_ln_pdf(y).exp();
    if step.is_finite() {
        if x > 0.0 {
            x + step
        } else {
            x - step
        }
    } else {
        x
    }
}

pub fn norm_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Student-t CDF with `nu` degrees of freedom (real-valued `nu > 0`).
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Log-normalizing constant of the univariate t density.
pub fn t_ln_norm(nu: f64) -> f64 {
    gamma::ln_gamma(0.5 * (nu + 1.0)) - gamma::ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
}

/// Student-t quantile: incomplete-beta inversion polished by Newton steps
/// on the CDF, so that `t_cdf(t_quantile(p)) == p` to near machine precision.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let lower = p.min(1.0 - p);
    let y = beta::inv_beta_reg(0.5 * nu, 0.5, 2.0 * lower);
    // x <= 0 for the lower tail
    let mut x = -(nu * (1.0 - y) / y).sqrt();
    let ln_norm = t_ln_norm(nu);
    for _ in 0..3 {
        let f = 0.5 * beta::beta_reg(0.5 * nu, 0.5, nu / (nu + x * x)) - lower;
        let dens = (ln_norm - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp();
        if !(dens > 0.0) {
            break;
        }
        let step = f / dens;
        let next = x - step;
        if !next.is_finite() || next > 0.0 {
            break;
        }
        x = next;
        if step.abs() <= 1e-14 * x.abs().max(1.0) {
            break;
        }
    }
    if p < 0.5 {
        x
    } else {
        -x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-14 + 1e-12 * p, "p={p}");
        }
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for &nu in &[2.0001, 2.5, 4.0, 7.3, 30.0, 100.0] {
            for &p in &[1e-10, 1e-5, 0.02, 0.25, 0.5, 0.6, 0.97, 1.0 - 1e-8] {
                let x = t_quantile(p, nu);
                let back = t_cdf(x, nu);
                assert!((back - p).abs() < 1e-13 + 1e-10 * p.min(1.0 - p), "nu={nu} p={p} back={back}");
            }
        }
    }

    #[test]
    fn t_cdf_closed_form_two_dof() {
        // t_2(x) = 1/2 (1 + x / sqrt(2 + x^2))
        for &x in &[-3.0, -1.0, 0.0, 0.4, 2.5] {
            let closed = 0.5 * (1.0 + x / (2.0f64 + x * x).sqrt());
            assert!((t_cdf(x, 2.0) - closed).abs() < 1e-13);
        }
    }
}
