//! Closed-form one-axis-twisting moments for arbitrary `N`, the optimal
//! squeezing strength, and the preparation-error threshold solver.
//!
//! With `S = N/2` and `μ = 2λ`:
//! `A = 1 - cos^{2S-2} μ`, `B = 4 sin(μ/2) cos^{2S-2}(μ/2)`, `δ = ½ atan(B/A)`.
//! The rotation angle `ν` follows the `exp(+i ν J_x)`-after-`π` convention, so
//! the crate's `exp(-i θ J_x)` angle is `θ = π - ν` and the optimal `θ` is `δ`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bias_coefficient, error_metric, ErrorSummary};

/// Intermediate coefficients of the closed-form moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticCoefficients {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticMoments {
    pub s_x_mean: f64,
    pub var_x: f64,
    /// Transverse variance along the axis carried to `y` by the rotation.
    pub var_plus: f64,
    /// Transverse variance along the measured `z` axis.
    pub var_minus: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub delta_angle: f64,
}

/// `cos(x)^k` for integer-valued `k ≥ 0`, via `exp(k ln|cos x|)`.
fn cos_pow(x: f64, k: f64) -> f64 {
    let c = x.cos();
    if k == 0.0 {
        return 1.0;
    }
    let mag = (k * c.abs().ln()).exp();
    if c < 0.0 && (k as i64) % 2 != 0 {
        -mag
    } else {
        mag
    }
}

/// `1 - cos(x)^k` without cancellation for small `x`.
fn one_minus_cos_pow(x: f64, k: f64) -> f64 {
    let c = x.cos();
    if k == 0.0 {
        return 0.0;
    }
    if c > 0.0 {
        -(k * c.ln()).exp_m1()
    } else {
        1.0 - cos_pow(x, k)
    }
}

fn check_n(n_atoms: usize) -> Result<f64> {
    if n_atoms < 2 {
        return Err(Error::InvalidArgument(
            "closed-form moments need N >= 2".into(),
        ));
    }
    Ok(n_atoms as f64 / 2.0)
}

pub fn analytic_coefficients(n_atoms: usize, lambda: f64) -> Result<AnalyticCoefficients> {
    let s = check_n(n_atoms)?;
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let mu = 2.0 * lambda;
    let a = one_minus_cos_pow(mu, 2.0 * s - 2.0);
    let b = 4.0 * (mu / 2.0).sin() * cos_pow(mu / 2.0, 2.0 * s - 2.0);
    Ok(AnalyticCoefficients {
        a,
        b,
        delta: 0.5 * b.atan2(a),
    })
}

/// Moments of `exp(i ν J_x)`-rotated OAT state, `ν` in the closed-form
/// convention (`θ = π - ν`).
pub fn analytic_moments(n_atoms: usize, lambda: f64, nu: f64) -> Result<AnalyticMoments> {
    let s = check_n(n_atoms)?;
    let AnalyticCoefficients { a, b, delta } = analytic_coefficients(n_atoms, lambda)?;
    let half = lambda;
    let s_x_mean = s * cos_pow(half, 2.0 * s - 1.0);
    let var_x =
        0.5 * s * (2.0 * s * one_minus_cos_pow(half, 2.0 * (2.0 * s - 1.0)) - (s - 0.5) * a);
    let radius = a.hypot(b);
    let c = (2.0 * nu + 2.0 * delta).cos();
    let var_minus = 0.5 * s * (1.0 + 0.5 * (s - 0.5) * (a - radius * c));
    let var_plus = 0.5 * s * (1.0 + 0.5 * (s - 0.5) * (a + radius * c));
    Ok(AnalyticMoments {
        s_x_mean,
        var_x,
        var_plus,
        var_minus,
        a_coeff: a,
        b_coeff: b,
        delta_angle: delta,
    })
}

/// Closed-form `ν` corresponding to the crate angle `θ`.
pub fn nu_from_theta(theta: f64) -> f64 {
    PI - theta
}

/// Twisting strength of maximal OAT squeezing, `24^{1/6} / (2^{1/3} N^{2/3})`.
pub fn lambda_opt(n_atoms: usize) -> f64 {
    24f64.powf(1.0 / 6.0) / (2f64.cbrt() * (n_atoms as f64).powf(2.0 / 3.0))
}

/// `B`, `Q`, `E` for an OAT state twisted with `lambda`, rotated by the
/// optimal angle for `lambda_assumed`, and read out with the MOM estimator
/// calibrated at `lambda_assumed`. `mse` is at `φ = Q/√m` with `m = 1`.
pub fn e_metric_analytic(n_atoms: usize, lambda: f64, lambda_assumed: f64) -> Result<ErrorSummary> {
    if !(lambda >= 0.0) || !(lambda_assumed >= 0.0) {
        return Err(Error::InvalidArgument("lambda values must be >= 0".into()));
    }
    let s = check_n(n_atoms)?;
    let assumed = analytic_coefficients(n_atoms, lambda_assumed)?;
    let nu = nu_from_theta(assumed.delta);
    let actual = analytic_moments(n_atoms, lambda, nu)?;
    let jx0_assumed = s * cos_pow(lambda_assumed, 2.0 * s - 1.0);
    if jx0_assumed == 0.0 {
        return Err(Error::UndefinedMetric("assumed <S_x> vanishes".into()));
    }
    let b = bias_coefficient(actual.s_x_mean, jx0_assumed)?;
    let q = (actual.var_minus / (jx0_assumed * jx0_assumed)).sqrt();
    let e = error_metric(n_atoms, q, b);
    Ok(ErrorSummary {
        bias_coeff: b,
        q_single_shot: q,
        e_metric: e,
        mse: e * e / n_atoms as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMode {
    RelativeToUnbiased,
    RelativeToShotNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub mode: ThresholdMode,
    pub factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CritResult {
    /// `|λ' - λ| / λ` at the threshold crossing, with the solved `λ'`.
    Crossing { ratio: f64, lambda_assumed: f64 },
    /// `E` never reaches the threshold on `λ' ∈ (0, λ)`.
    NoCrossing,
}

impl CritResult {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            CritResult::Crossing { ratio, .. } => Some(*ratio),
            CritResult::NoCrossing => None,
        }
    }
}

const CRIT_SCAN: usize = 400;
const CRIT_REL_TOL: f64 = 1e-6;

/// Solves `E(λ')/E(λ) = factor` or `E(λ') = factor` on the `λ' < λ` branch at
/// `λ = lambda_opt(N)`, scanning down from `λ' = λ` to the first crossing.
pub fn delta_lambda_crit(n_atoms: usize, spec: ThresholdSpec) -> Result<CritResult> {
    if !(spec.factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold factor must be > 0, got {}",
            spec.factor
        )));
    }
    let lambda = lambda_opt(n_atoms);
    let e0 = e_metric_analytic(n_atoms, lambda, lambda)?.e_metric;
    let target = match spec.mode {
        ThresholdMode::RelativeToUnbiased => spec.factor * e0,
        ThresholdMode::RelativeToShotNoise => spec.factor,
    };
    let g =
        |lp: f64| -> Result<f64> { Ok(e_metric_analytic(n_atoms, lambda, lp)?.e_metric - target) };
    if g(lambda)? >= 0.0 {
        return Ok(CritResult::Crossing {
            ratio: 0.0,
            lambda_assumed: lambda,
        });
    }
    let mut hi = lambda;
    for i in 1..=CRIT_SCAN {
        let lo = lambda * (1.0 - i as f64 / CRIT_SCAN as f64);
        let lo = if i == CRIT_SCAN { lambda * 1e-9 } else { lo };
        if g(lo)? >= 0.0 {
            let (mut a, mut b) = (lo, hi);
            while (b - a) > CRIT_REL_TOL * b {
                let mid = 0.5 * (a + b);
                if g(mid)? >= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let lp = 0.5 * (a + b);
            return Ok(CritResult::Crossing {
                ratio: (lambda - lp) / lambda,
                lambda_assumed: lp,
            });
        }
        hi = lo;
    }
    Ok(CritResult::NoCrossing)
}
