//! Log expected improvement for minimization, stable deep into the
//! no-improvement tail.
//!
//! `EI = σ·h(z)` with `z = (f_best − μ)/σ` and `h(z) = zΦ(z) + φ(z)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Floor applied to the posterior standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `erfcx` switches from `exp(x²)·erfc(x)` to the continued fraction here.
const CF_START: f64 = 2.0;
const CF_TERMS: usize = 100;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Tail `t₁ = x + 1/(x + (3/2)/(x + 2/(x + …)))` of the continued fraction
/// `erfcx(x) = 1/(√π·(x + (1/2)/t₁))`.
fn cf_tail(x: f64) -> f64 {
    let mut t = x;
    for k in (2..=CF_TERMS).rev() {
        t = x + 0.5 * k as f64 / t;
    }
    t
}

/// Scaled complementary error function `exp(x²)·erfc(x)` for `x ≥ 0`.
pub fn erfcx(x: f64) -> f64 {
    if x < CF_START {
        (x * x).exp() * erfc(x)
    } else {
        1.0 / (PI.sqrt() * (x + 0.5 / cf_tail(x)))
    }
}

/// `log(1 − exp(a))` for `a < 0`.
fn log1mexp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

/// `log h(z)`.
///
/// For `z ≤ −1`, `h(z) = φ(z)·(1 − |z|·Φ(z)/φ(z))`. Far out the bracket is
/// taken straight from the continued fraction as `(1/2)/(t₁·t)`, which
/// avoids the cancellation in `1 − |z|·m`.
pub fn log_h(z: f64) -> f64 {
    if z > -1.0 {
        return (z * norm_cdf(z) + norm_pdf(z)).ln();
    }
    let x = -z * FRAC_1_SQRT_2;
    let log_pdf = -0.5 * z * z - LN_SQRT_2PI;
    if x < CF_START {
        let m = (PI / 2.0).sqrt() * erfcx(x);
        log_pdf + log1mexp((m * -z).ln())
    } else {
        let t1 = cf_tail(x);
        let t = x + 0.5 / t1;
        log_pdf - (2.0 * t1 * t).ln()
    }
}

/// `d log h / dz = Φ(z)/h(z)`.
pub fn dlog_h(z: f64) -> f64 {
    if z > -1.0 {
        return norm_cdf(z) / (z * norm_cdf(z) + norm_pdf(z));
    }
    let x = -z * FRAC_1_SQRT_2;
    if x < CF_START {
        let m = (PI / 2.0).sqrt() * erfcx(x);
        m / (1.0 + z * m)
    } else {
        SQRT_2 * cf_tail(x)
    }
}

/// `(log EI, ∂/∂μ, ∂/∂σ)` with the floor applied to `σ` (the σ-derivative
/// is zero while the floor is active).
pub fn log_expected_improvement(mu: f64, sigma: f64, f_best: f64) -> (f64, f64, f64) {
    let floored = !(sigma > SIGMA_FLOOR);
    let s = if floored { SIGMA_FLOOR } else { sigma };
    let z = (f_best - mu) / s;
    let value = s.ln() + log_h(z);
    let dh = dlog_h(z);
    let dmu = -dh / s;
    let dsigma = if floored { 0.0 } else { 1.0 / s - dh * z / s };
    (value, dmu, dsigma)
}
