//! Classical and quantum Fisher information, the `(φ, λ)` Fisher matrix, the
//! misspecification bias, the sandwich variance and the two-parameter bound.

use crate::error::{Error, Result};
use crate::model::{JointModel, PhaseDerivatives, PhaseModel};
use crate::optimize::{linspace, refine_from_grid};
use crate::spin_core::{CMatrix, CollectiveOps, ProbDist, SpinState};

/// Default central-difference step for φ and λ.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Outcomes with probability below this are left out of Fisher sums.
pub const FISHER_PROB_CUTOFF: f64 = 1e-12;
/// Relative drift between step `h` and `h/2` that raises a warning.
pub const STEP_DRIFT_TOL: f64 = 0.01;

/// A value with the numerical-quality warnings raised while computing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checked<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Checked<T> {
    fn clean(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
        }
    }
}

/// Symmetric 2×2 Fisher matrix over `(φ, λ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherMatrix {
    pub f_phiphi: f64,
    pub f_philambda: f64,
    pub f_lambdalambda: f64,
}

impl FisherMatrix {
    /// Rejects matrices that are not PSD within `det ≥ -1e-8 trace²`.
    pub fn new(f_phiphi: f64, f_philambda: f64, f_lambdalambda: f64) -> Result<Self> {
        let m = Self {
            f_phiphi,
            f_philambda,
            f_lambdalambda,
        };
        let tr = m.trace();
        if f_phiphi < -1e-8 * tr.abs().max(1e-300)
            || f_lambdalambda < -1e-8 * tr.abs().max(1e-300)
            || m.det() < -1e-8 * tr * tr
        {
            return Err(Error::Numerical(format!("Fisher matrix is not PSD: {m:?}")));
        }
        Ok(m)
    }

    pub fn det(&self) -> f64 {
        self.f_phiphi * self.f_lambdalambda - self.f_philambda * self.f_philambda
    }

    pub fn trace(&self) -> f64 {
        self.f_phiphi + self.f_lambdalambda
    }
}

fn fisher_sum(p: &[f64], dp: impl Iterator<Item = f64>) -> f64 {
    p.iter()
        .zip(dp)
        .filter(|(&p, _)| p >= FISHER_PROB_CUTOFF)
        .map(|(&p, d)| d * d / p)
        .sum()
}

fn central_diff(plus: &ProbDist, minus: &ProbDist, h: f64) -> Vec<f64> {
    plus.probs()
        .iter()
        .zip(minus.probs())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    Ok(())
}

fn drift_warning(label: &str, coarse: f64, fine: f64, scale: f64) -> Option<String> {
    let drift = (coarse - fine).abs();
    (drift > STEP_DRIFT_TOL * scale.abs() + 1e-12)
        .then(|| format!("{label}: step-halving drift {drift:.3e} exceeds 1% of {scale:.6e}"))
}

fn fc_at_step(model: &dyn PhaseModel, phi: f64, h: f64) -> Result<f64> {
    let p0 = model.dist(phi)?;
    let d = central_diff(&model.dist(phi + h)?, &model.dist(phi - h)?, h);
    Ok(fisher_sum(p0.probs(), d.into_iter()))
}

/// `F_c(φ) = Σ (∂φ P)² / P` with the default step.
pub fn classical_fisher(model: &dyn PhaseModel, phi: f64) -> Result<Checked<f64>> {
    classical_fisher_with_step(model, phi, DEFAULT_STEP)
}

pub fn classical_fisher_with_step(
    model: &dyn PhaseModel,
    phi: f64,
    h: f64,
) -> Result<Checked<f64>> {
    check_step(h)?;
    let coarse = fc_at_step(model, phi, h)?;
    let fine = fc_at_step(model, phi, h / 2.0)?;
    let mut out = Checked::clean(coarse);
    out.warnings
        .extend(drift_warning("classical Fisher", coarse, fine, coarse));
    Ok(out)
}

/// `F_Q = 4 Var(generator)` for a pure state.
pub fn qfi_pure(ops: &CollectiveOps, state: &SpinState, generator: &CMatrix) -> Result<f64> {
    Ok(4.0 * ops.variance(state, generator)?)
}

fn matrix_at_step(model: &dyn JointModel, phi: f64, lambda: f64, h: f64) -> Result<FisherMatrix> {
    let p0 = model.dist(phi, lambda)?;
    let dphi = central_diff(
        &model.dist(phi + h, lambda)?,
        &model.dist(phi - h, lambda)?,
        h,
    );
    let dlam = central_diff(
        &model.dist(phi, lambda + h)?,
        &model.dist(phi, lambda - h)?,
        h,
    );
    let p = p0.probs();
    let fpp = fisher_sum(p, dphi.iter().copied());
    let fll = fisher_sum(p, dlam.iter().copied());
    let fpl: f64 = p
        .iter()
        .zip(dphi.iter().zip(&dlam))
        .filter(|(&p, _)| p >= FISHER_PROB_CUTOFF)
        .map(|(&p, (a, b))| a * b / p)
        .sum();
    FisherMatrix::new(fpp, fpl, fll)
}

/// `F_ij = Σ ∂_i P ∂_j P / P` at the actual `(φ, λ)`.
pub fn fisher_matrix(
    model: &dyn JointModel,
    phi: f64,
    lambda: f64,
) -> Result<Checked<FisherMatrix>> {
    fisher_matrix_with_step(model, phi, lambda, DEFAULT_STEP)
}

pub fn fisher_matrix_with_step(
    model: &dyn JointModel,
    phi: f64,
    lambda: f64,
    h: f64,
) -> Result<Checked<FisherMatrix>> {
    check_step(h)?;
    let coarse = matrix_at_step(model, phi, lambda, h)?;
    let fine = matrix_at_step(model, phi, lambda, h / 2.0)?;
    let mut out = Checked::clean(coarse);
    let scale = coarse.f_phiphi.abs().max(coarse.f_lambdalambda.abs());
    for (label, a, b) in [
        ("F_phiphi", coarse.f_phiphi, fine.f_phiphi),
        ("F_philambda", coarse.f_philambda, fine.f_philambda),
        ("F_lambdalambda", coarse.f_lambdalambda, fine.f_lambdalambda),
    ] {
        out.warnings
            .extend(drift_warning(label, a, b, a.abs().max(1e-6 * scale)));
    }
    Ok(out)
}

/// Predicted MLE bias `-(F_φλ / F_φφ) (λ' - λ)`.
pub fn misspec_bias(fm: &FisherMatrix, delta_lambda: f64) -> Result<f64> {
    if !(fm.f_phiphi > 0.0) {
        return Err(Error::Degenerate(format!("F_phiphi = {}", fm.f_phiphi)));
    }
    Ok(-(fm.f_philambda / fm.f_phiphi) * delta_lambda)
}

/// `Var(Z) / E[∂Z]²` for per-outcome scores `z`, weighted by the actual
/// outcome probabilities.
pub fn sandwich_variance(z: &[f64], weights: &[f64], dz_dphi: f64) -> Result<f64> {
    if z.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: z.len(),
        });
    }
    if dz_dphi == 0.0 || !dz_dphi.is_finite() {
        return Err(Error::Degenerate(
            "vanishing expected score derivative".into(),
        ));
    }
    let mean: f64 = z.iter().zip(weights).map(|(z, w)| w * z).sum();
    let var: f64 = z
        .iter()
        .zip(weights)
        .map(|(z, w)| w * (z - mean).powi(2))
        .sum();
    Ok(var / (dz_dphi * dz_dphi))
}

/// Sandwich analysis of a possibly misspecified one-parameter model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichResult {
    /// Pseudo-true parameter maximising `E_actual[log P_assumed(φ)]`.
    pub phi_star: f64,
    /// Single-shot variance `Q²`.
    pub q2: f64,
}

const SCORE_STEP: f64 = 1e-4;

fn finite_difference_derivatives(
    model: &dyn PhaseModel,
    phi: f64,
    h: f64,
) -> Result<PhaseDerivatives> {
    let p0 = model.dist(phi)?;
    let pp = model.dist(phi + h)?;
    let pm = model.dist(phi - h)?;
    let mut out = PhaseDerivatives {
        p: p0.probs().to_vec(),
        dp: Vec::with_capacity(p0.len()),
        d2p: Vec::with_capacity(p0.len()),
    };
    for ((&a, &b), &c) in p0.probs().iter().zip(pp.probs()).zip(pm.probs()) {
        out.dp.push((b - c) / (2.0 * h));
        out.d2p.push((b - 2.0 * a + c) / (h * h));
    }
    Ok(out)
}

/// Per-outcome scores `∂φ log P` and their derivatives under `assumed` at
/// `phi`, exact when the model provides derivatives.
fn scores(assumed: &dyn PhaseModel, phi: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let d = match assumed.derivatives(phi) {
        Some(d) => d?,
        None => finite_difference_derivatives(assumed, phi, h)?,
    };
    let mut z = Vec::with_capacity(d.p.len());
    let mut dz = Vec::with_capacity(d.p.len());
    for ((&a, &d1), &d2) in d.p.iter().zip(&d.dp).zip(&d.d2p) {
        if a < FISHER_PROB_CUTOFF {
            z.push(0.0);
            dz.push(0.0);
        } else {
            z.push(d1 / a);
            dz.push(d2 / a - (d1 / a).powi(2));
        }
    }
    Ok((z, dz, d.p))
}

/// Maximiser of `Σ_m P_actual(m) log P_assumed(m | φ)` over `domain`.
pub fn pseudo_true_phi(
    actual: &ProbDist,
    assumed: &dyn PhaseModel,
    domain: (f64, f64),
) -> Result<f64> {
    let objective = |phi: f64| -> f64 {
        match assumed.dist(phi) {
            Ok(d) => actual
                .probs()
                .iter()
                .zip(d.log_probs())
                .filter(|(&w, _)| w > 0.0)
                .map(|(w, l)| w * l)
                .sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let grid = linspace(domain.0, domain.1, 2001);
    let values: Vec<f64> = grid.iter().map(|&x| objective(x)).collect();
    refine_from_grid(objective, &grid, &values, 1e-10)
        .map(|(x, _, _)| x)
        .ok_or_else(|| Error::Numerical("pseudo-true search found no finite value".into()))
}

/// Pseudo-true φ and sandwich `Q²` of the `assumed` model against data from
/// `actual`. At zero misspecification `Q² = 1/F_c`.
pub fn sandwich_for_models(
    actual: &ProbDist,
    assumed: &dyn PhaseModel,
    domain: (f64, f64),
) -> Result<SandwichResult> {
    let phi_star = pseudo_true_phi(actual, assumed, domain)?;
    let (z, dz, p_assumed) = scores(assumed, phi_star, SCORE_STEP)?;
    let w = actual.probs();
    let leaked: f64 = w
        .iter()
        .zip(&p_assumed)
        .filter(|(_, &pa)| pa < FISHER_PROB_CUTOFF)
        .map(|(w, _)| w)
        .sum();
    if leaked > 1e-9 {
        return Err(Error::Numerical(format!(
            "actual distribution puts mass {leaked:.3e} where the assumed model has none"
        )));
    }
    let mean_dz: f64 = dz.iter().zip(w).map(|(d, w)| d * w).sum();
    Ok(SandwichResult {
        phi_star,
        q2: sandwich_variance(&z, w, mean_dz)?,
    })
}

/// Two-parameter single-shot noise `sqrt(F_λλ / det F)`.
pub fn two_param_q(fm: &FisherMatrix) -> Result<f64> {
    let det = fm.det();
    if !(det > 1e-12 * fm.trace() * fm.trace()) || !(fm.f_lambdalambda > 0.0) {
        return Err(Error::Unidentifiable(format!(
            "singular Fisher matrix {fm:?}"
        )));
    }
    Ok((fm.f_lambdalambda / det).sqrt())
}
