//! Moment-based error theory for the arcsin (method-of-moments) estimator.

use crate::error::{Error, Result};
use crate::spin_core::{CollectiveOps, SpinState};

/// Pre-encoding moments of `|ψ_Λ>`. `cov_zy0` holds `Covar(z,y) + Covar(y,z)`,
/// twice the symmetrised covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentSet {
    pub jx0: f64,
    pub jy0: f64,
    pub jz0: f64,
    pub var_x0: f64,
    pub var_y0: f64,
    pub var_z0: f64,
    pub cov_zy0: f64,
}

impl MomentSet {
    pub fn of(ops: &CollectiveOps, state: &SpinState) -> Result<Self> {
        Ok(Self {
            jx0: ops.expectation(state, ops.jx())?,
            jy0: ops.expectation(state, ops.jy())?,
            jz0: ops.expectation(state, ops.jz())?,
            var_x0: ops.variance(state, ops.jx())?,
            var_y0: ops.variance(state, ops.jy())?,
            var_z0: ops.variance(state, ops.jz())?,
            cov_zy0: 2.0 * ops.sym_covariance(state, ops.jz(), ops.jy())?,
        })
    }

    /// `<J²> - J(J+1)` from these moments; zero for a symmetric state.
    pub fn casimir_residual(&self, n_atoms: usize) -> f64 {
        let j = n_atoms as f64 / 2.0;
        let second = self.var_x0
            + self.var_y0
            + self.var_z0
            + self.jx0 * self.jx0
            + self.jy0 * self.jy0
            + self.jz0 * self.jz0;
        second - j * (j + 1.0)
    }
}

/// `E = sqrt(N Q² (1 + B²))` and `MSE = (Bφ)² + Q²/m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSummary {
    pub bias_coeff: f64,
    pub q_single_shot: f64,
    pub e_metric: f64,
    pub mse: f64,
}

impl ErrorSummary {
    /// Assembles the summary at the operating point `φ = Q/√m`.
    pub fn at_resolution(n_atoms: usize, bias_coeff: f64, q_single_shot: f64, shots: u64) -> Self {
        let m = shots.max(1) as f64;
        let phi = q_single_shot / m.sqrt();
        Self {
            bias_coeff,
            q_single_shot,
            e_metric: error_metric(n_atoms, q_single_shot, bias_coeff),
            mse: mse(bias_coeff, phi, q_single_shot, shots),
        }
    }
}

/// Wineland parameter `sqrt(N Var(J_z)) / |<J_x>|`.
pub fn wineland_xi(ops: &CollectiveOps, state: &SpinState) -> Result<f64> {
    let jx = ops.expectation(state, ops.jx())?;
    if jx.abs() < 1e-12 * ops.j().max(1.0) {
        return Err(Error::UndefinedMetric("<J_x> vanishes".into()));
    }
    let vz = ops.variance(state, ops.jz())?;
    Ok((ops.n_atoms() as f64 * vz).sqrt() / jx.abs())
}

/// `arcsin(-jz_mean / jx0_assumed)`; fails with `Saturation` outside the domain.
pub fn mom_estimate(jz_mean: f64, jx0_assumed: f64) -> Result<f64> {
    if jx0_assumed == 0.0 || !jx0_assumed.is_finite() {
        return Err(Error::UndefinedMetric("assumed <J_x0> is zero".into()));
    }
    let ratio = -jz_mean / jx0_assumed;
    if ratio.abs() > 1.0 {
        return Err(Error::Saturation { ratio: ratio.abs() });
    }
    Ok(ratio.asin())
}

/// Like [`mom_estimate`] but clamps a saturated ratio to `±π/2`. The flag
/// reports whether clamping happened.
pub fn mom_estimate_clamped(jz_mean: f64, jx0_assumed: f64) -> Result<(f64, bool)> {
    match mom_estimate(jz_mean, jx0_assumed) {
        Ok(v) => Ok((v, false)),
        Err(Error::Saturation { .. }) => {
            let ratio = -jz_mean / jx0_assumed;
            Ok((ratio.signum() * std::f64::consts::FRAC_PI_2, true))
        }
        Err(e) => Err(e),
    }
}

/// `B = 1 - jx0_assumed / jx0_actual`, so `σ_B ≈ B φ`.
pub fn bias_coefficient(jx0_actual: f64, jx0_assumed: f64) -> Result<f64> {
    if jx0_actual == 0.0 || jx0_assumed == 0.0 {
        return Err(Error::UndefinedMetric(
            "zero <J_x0> in bias coefficient".into(),
        ));
    }
    Ok(1.0 - jx0_assumed / jx0_actual)
}

/// Linearised MOM variance `σ_Q²` for `m` shots; `Q² = m σ_Q²`.
pub fn sigma_q_linearized(
    moments: &MomentSet,
    theta: f64,
    jx0_assumed: f64,
    shots: u64,
) -> Result<f64> {
    check_shots(shots)?;
    if jx0_assumed == 0.0 {
        return Err(Error::UndefinedMetric("zero assumed <J_x0>".into()));
    }
    let (s, c) = theta.sin_cos();
    let num = c * c * moments.var_z0 + s * s * moments.var_y0 + s * c * moments.cov_zy0;
    Ok(num / (shots as f64 * jx0_assumed * jx0_assumed))
}

/// Un-linearised MOM variance including the `sin²φ Var(J_x0)` term and the
/// φ-dependent slope.
pub fn sigma_q_full(
    moments: &MomentSet,
    theta: f64,
    phi: f64,
    jz0_mean: f64,
    jy0_mean: f64,
    jx0_assumed: f64,
    shots: u64,
) -> Result<f64> {
    check_shots(shots)?;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let num = ct * ct * cp * cp * moments.var_z0
        + sp * sp * moments.var_x0
        + cp * cp * (st * st * moments.var_y0 + st * ct * moments.cov_zy0);
    let slope = cp * jx0_assumed + sp * (jz0_mean * ct + jy0_mean * st);
    if slope == 0.0 {
        return Err(Error::UndefinedMetric("vanishing MOM slope".into()));
    }
    Ok(num / (shots as f64 * slope * slope))
}

/// `sqrt(N Q² (1 + B²))`.
pub fn error_metric(n_atoms: usize, q_single_shot: f64, bias_coeff: f64) -> f64 {
    (n_atoms as f64 * q_single_shot * q_single_shot * (1.0 + bias_coeff * bias_coeff)).sqrt()
}

/// `(Bφ)² + Q²/m`.
pub fn mse(bias_coeff: f64, phi: f64, q_single_shot: f64, shots: u64) -> f64 {
    let b = bias_coeff * phi;
    b * b + q_single_shot * q_single_shot / shots.max(1) as f64
}

fn check_shots(shots: u64) -> Result<()> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be >= 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{PrepConfig, Preparer, SchemeKind};
    use proptest::prelude::*;

    fn prepared(p: &Preparer, scheme: SchemeKind, l: f64, lp: f64) -> SpinState {
        p.prepare(&PrepConfig::new(p.n_atoms(), scheme, l, lp))
            .unwrap()
    }

    #[test]
    fn css_xi_is_one() {
        for n in [1, 7, 100] {
            let ops = CollectiveOps::new(n).unwrap();
            assert!((wineland_xi(&ops, &ops.css_x()).unwrap() - 1.0).abs() < 1e-12);
        }
        let ops = CollectiveOps::new(4).unwrap();
        let dicke = SpinState::dicke(4, 2).unwrap();
        assert!(matches!(
            wineland_xi(&ops, &dicke),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn mom_estimate_inverse_pair_and_saturation() {
        assert_eq!(mom_estimate(0.0, 50.0).unwrap(), 0.0);
        let jx = 47.3;
        assert!((mom_estimate(-jx * 0.3_f64.sin(), jx).unwrap() - 0.3).abs() < 1e-14);
        let biased = mom_estimate(-49.0 * 0.01_f64.sin(), 49.5).unwrap();
        assert!((biased - (49.0 * 0.01_f64.sin() / 49.5).asin()).abs() < 1e-15);
        assert!((biased - 0.009899).abs() < 1e-6);
        assert!(matches!(
            mom_estimate(-60.0, 50.0),
            Err(Error::Saturation { .. })
        ));
        let (v, clamped) = mom_estimate_clamped(-60.0, 50.0).unwrap();
        assert!(clamped && v == std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn bias_coefficient_signs() {
        assert_eq!(bias_coefficient(40.0, 40.0).unwrap(), 0.0);
        assert!(bias_coefficient(40.0, 45.0).unwrap() < 0.0);
        assert!(bias_coefficient(0.0, 1.0).is_err());
        let p = Preparer::new(100).unwrap();
        let jx0 = |l: f64| {
            let s = prepared(&p, SchemeKind::TatSqueezed, l, l);
            p.ops().expectation(&s, p.ops().jx()).unwrap()
        };
        assert!(bias_coefficient(jx0(0.02), jx0(0.01)).unwrap() < 0.0);
    }

    #[test]
    fn css_noise_is_shot_noise() {
        let ops = CollectiveOps::new(100).unwrap();
        let m = MomentSet::of(&ops, &ops.css_x()).unwrap();
        let q2 = sigma_q_linearized(&m, 0.0, 50.0, 1).unwrap();
        assert!((q2 - 0.01).abs() < 1e-14);
        let q2y = sigma_q_linearized(&m, std::f64::consts::FRAC_PI_2, 1.0, 1).unwrap();
        assert!((q2y - m.var_y0).abs() < 1e-12);
        let phi = std::f64::consts::FRAC_PI_4;
        let full = sigma_q_full(&m, 0.0, phi, 0.0, 0.0, 50.0, 1).unwrap();
        // a J_x eigenstate has Var(J_x0) = 0, so the numerator is (N/4) cos²φ
        assert!((full - 25.0 * phi.cos().powi(2) / (phi.cos() * 50.0).powi(2)).abs() < 1e-12);
        let enc = ops.rotate(&ops.css_x(), crate::Axis::Y, phi).unwrap();
        let exact = ops.variance(&enc, ops.jz()).unwrap();
        assert!((exact - 25.0 * phi.cos().powi(2)).abs() < 1e-10);
        assert!(error_metric(100, 0.1, 0.0) == 1.0);
        assert!(sigma_q_linearized(&m, 0.0, 50.0, 0).is_err());
    }

    #[test]
    fn full_reduces_to_linearized_at_zero_phase() {
        let p = Preparer::new(60).unwrap();
        for scheme in [SchemeKind::TatSqueezed, SchemeKind::OatSqueezed] {
            let s = prepared(&p, scheme, 0.03, 0.03);
            let m = MomentSet::of(p.ops(), &s).unwrap();
            for theta in [0.0, 0.4, 1.3] {
                let a = sigma_q_linearized(&m, theta, 27.0, 3).unwrap();
                let b = sigma_q_full(&m, theta, 0.0, 0.0, 0.0, 27.0, 3).unwrap();
                assert!((a - b).abs() <= 1e-14 * a.abs());
            }
        }
    }

    #[test]
    fn linearized_matches_exact_encoded_variance() {
        // Var(J_z) after encoding with φ → 0 equals the θ = 0 linearised numerator
        let p = Preparer::new(80).unwrap();
        let s = prepared(&p, SchemeKind::OatSqueezed, 0.02, 0.02);
        let m = MomentSet::of(p.ops(), &s).unwrap();
        let enc = p.encode_phase(&s, 0.0).unwrap();
        let v = p.ops().variance(&enc, p.ops().jz()).unwrap();
        let q2 = sigma_q_linearized(&m, 0.0, 1.0, 1).unwrap();
        assert!((v - q2).abs() < 1e-10);
        // and the full formula tracks the exact variance away from φ = 0
        let phi = 0.15;
        let enc = p.encode_phase(&s, phi).unwrap();
        let v = p.ops().variance(&enc, p.ops().jz()).unwrap();
        let jz0 = m.jz0;
        let jy0 = m.jy0;
        let full = sigma_q_full(&m, 0.0, phi, jz0, jy0, 1.0, 1).unwrap();
        let slope = phi.cos() + phi.sin() * jz0;
        assert!(
            (full * slope * slope - v).abs() < 1e-6 * v.max(1.0),
            "{} vs {v}",
            full * slope * slope
        );
    }

    #[test]
    fn tat_variance_minimised_at_zero_phase() {
        let p = Preparer::new(100).unwrap();
        let s = prepared(&p, SchemeKind::TatSqueezed, 0.02, 0.02);
        let v = |phi: f64| {
            let e = p.encode_phase(&s, phi).unwrap();
            p.ops().variance(&e, p.ops().jz()).unwrap()
        };
        let v0 = v(0.0);
        for phi in [-0.2, -0.1, -0.02, 0.02, 0.1, 0.2] {
            assert!(v(phi) > v0);
        }
    }

    #[test]
    fn casimir_holds_for_moment_sets() {
        let p = Preparer::new(50).unwrap();
        for scheme in SchemeKind::ALL {
            let s = prepared(&p, scheme, 0.04, 0.04);
            let m = MomentSet::of(p.ops(), &s).unwrap();
            assert!(m.casimir_residual(50).abs() < 1e-8, "{scheme}");
        }
    }

    #[test]
    fn tat_q_improves_for_underestimated_lambda() {
        let p = Preparer::new(100).unwrap();
        let s = prepared(&p, SchemeKind::TatSqueezed, 0.02, 0.02);
        let m = MomentSet::of(p.ops(), &s).unwrap();
        let jx0 = |l: f64| {
            let s = prepared(&p, SchemeKind::TatSqueezed, l, l);
            p.ops().expectation(&s, p.ops().jx()).unwrap()
        };
        let q = |lp: f64| sigma_q_linearized(&m, 0.0, jx0(lp), 1).unwrap().sqrt();
        let e = |lp: f64| error_metric(100, q(lp), bias_coefficient(jx0(0.02), jx0(lp)).unwrap());
        assert!(q(0.01) < q(0.015) && q(0.015) < q(0.02));
        assert!(e(0.018) < e(0.02));
    }

    #[test]
    fn mom_bias_is_linear_in_phase() {
        // the arcsin expansion: bias = φ (J/J' - 1) up to O(φ³); B agrees with
        // J/J' - 1 up to O(B²)
        let p = Preparer::new(100).unwrap();
        let jx0 = |l: f64| {
            let s = prepared(&p, SchemeKind::TatSqueezed, l, l);
            p.ops().expectation(&s, p.ops().jx()).unwrap()
        };
        for (l, lp) in [(0.01, 0.008), (0.02, 0.018), (0.02, 0.022), (0.005, 0.01)] {
            let (a, b) = (jx0(l), jx0(lp));
            let bc = bias_coefficient(a, b).unwrap();
            for phi in [1e-3, -5e-4, 1e-4] {
                let est = mom_estimate(-a * f64::sin(phi), b).unwrap();
                assert!((est - phi - phi * (a / b - 1.0)).abs() <= 1e-6 * phi.abs());
                assert!(
                    (est - phi - bc * phi).abs() <= 2.0 * bc * bc * phi.abs() + 1e-6 * phi.abs()
                );
            }
        }
    }

    #[test]
    fn robust_points_have_small_bias() {
        // where ∂λ<J_x0> ≈ 0 the bias coefficient vanishes to first order
        let p = Preparer::new(100).unwrap();
        let jx0 = |l: f64| {
            let s = p.twisted(SchemeKind::OatNonGauss, l).unwrap();
            p.ops().expectation(&s, p.ops().jx()).unwrap()
        };
        let h = 1e-4;
        let slope = |l: f64| (jx0(l + h) - jx0(l - h)) / (2.0 * h);
        // OAT <J_x0> = (N/2) cos^{N-1} λ is stationary at λ = 0
        assert!(slope(0.0).abs() < 1e-8);
        let b = bias_coefficient(jx0(0.0), jx0(1e-3)).unwrap();
        assert!(b.abs() < 1e-4);
        let b_steep = bias_coefficient(jx0(0.05), jx0(0.051)).unwrap();
        assert!(b_steep.abs() > 10.0 * b.abs());
    }

    #[test]
    fn e_bounds_and_summary_consistency() {
        let s = ErrorSummary::at_resolution(100, 0.3, 0.08, 1000);
        assert!((s.e_metric - (100.0 * 0.08f64.powi(2) * (1.0 + 0.09)).sqrt()).abs() < 1e-12);
        assert!(s.e_metric > (100.0f64).sqrt() * 0.08);
        assert!(mse(0.0, 0.1, 0.2, u64::MAX) < 1e-20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(25))]
        #[test]
        fn tat_moments_do_not_depend_on_assumed(l in 0.0f64..0.04, lp in 0.0f64..0.04) {
            let p = Preparer::new(30).unwrap();
            let a = MomentSet::of(p.ops(), &prepared(&p, SchemeKind::TatSqueezed, l, l)).unwrap();
            let b = MomentSet::of(p.ops(), &prepared(&p, SchemeKind::TatSqueezed, l, lp)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn oat_moments_depend_on_assumed(l in 0.01f64..0.05, d in 0.003f64..0.01) {
            let p = Preparer::new(30).unwrap();
            let a = MomentSet::of(p.ops(), &prepared(&p, SchemeKind::OatSqueezed, l, l)).unwrap();
            let b = MomentSet::of(p.ops(), &prepared(&p, SchemeKind::OatSqueezed, l, l + d)).unwrap();
            prop_assert!((a.var_z0 - b.var_z0).abs() > 1e-9);
        }

        #[test]
        fn e_at_least_unbiased_noise(q in 0.0f64..1.0, b in -3.0f64..3.0) {
            let e = error_metric(100, q, b);
            prop_assert!(e + 1e-15 >= error_metric(100, q, 0.0));
        }
    }
}
