//! The four state-preparation protocols and the phase-encoding step.
//!
//! Twisting conventions (all acting on `|CSS_x>`):
//! - TAT: `exp(-i π/2 J_x) exp(i λ (J_z J_y + J_y J_z))`
//! - OAT squeezed: `exp(-i θ(λ') J_x) exp(i λ J_z²)`
//! - OAT non-Gaussian: `exp(i λ J_z²)`
//! - TNT: `exp(i J_x) exp(-i λ (J_z² + (N/2) J_x))`

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::largescale;
use crate::optimize::{golden_min, linspace};
use crate::spin_core::{Axis, CMatrix, CollectiveOps, Propagator, SpinState};

/// λ above which OAT states are labelled non-Gaussian (N = 100). Labels only.
pub const OAT_NON_GAUSSIAN_ONSET: f64 = 0.1;
/// λ above which TNT states are labelled non-Gaussian (N = 100). Labels only.
pub const TNT_NON_GAUSSIAN_ONSET: f64 = 0.045;

/// Rotation applied after TNT twisting, in the `exp(-i θ J_x)` convention.
pub const TNT_ROTATION: f64 = -1.0;

const OAT_SCAN_POINTS: usize = 256;
const OAT_ANGLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    TatSqueezed,
    OatSqueezed,
    OatNonGauss,
    Tnt,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::TatSqueezed,
        SchemeKind::OatSqueezed,
        SchemeKind::OatNonGauss,
        SchemeKind::Tnt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::TatSqueezed => "TatSqueezed",
            SchemeKind::OatSqueezed => "OatSqueezed",
            SchemeKind::OatNonGauss => "OatNonGauss",
            SchemeKind::Tnt => "Tnt",
        }
    }

    /// Cosmetic regime label for output tables.
    pub fn regime_label(self, lambda: f64) -> &'static str {
        match self {
            SchemeKind::OatNonGauss | SchemeKind::OatSqueezed
                if lambda >= OAT_NON_GAUSSIAN_ONSET =>
            {
                "non_gaussian"
            }
            SchemeKind::Tnt if lambda >= TNT_NON_GAUSSIAN_ONSET => "non_gaussian",
            _ => "gaussian",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the OAT-squeezed rotation angle is chosen. Other schemes use their
/// fixed angles unless `FixedAngle` overrides them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum RotationPolicy {
    AnalyticKu,
    #[default]
    NumericOptimal,
    FixedAngle(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrepConfig {
    pub n_atoms: usize,
    pub lambda_actual: f64,
    pub lambda_assumed: f64,
    pub scheme: SchemeKind,
    pub rotation_policy: RotationPolicy,
}

impl PrepConfig {
    pub fn new(
        n_atoms: usize,
        scheme: SchemeKind,
        lambda_actual: f64,
        lambda_assumed: f64,
    ) -> Self {
        Self {
            n_atoms,
            lambda_actual,
            lambda_assumed,
            scheme,
            rotation_policy: RotationPolicy::default(),
        }
    }

    pub fn unbiased(n_atoms: usize, scheme: SchemeKind, lambda: f64) -> Self {
        Self::new(n_atoms, scheme, lambda, lambda)
    }

    pub fn with_policy(mut self, policy: RotationPolicy) -> Self {
        self.rotation_policy = policy;
        self
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_actual", self.lambda_actual),
            ("lambda_assumed", self.lambda_assumed),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Cached preparation engine for one atom number. `Sync`, so sweep workers
/// share one instance.
#[derive(Debug)]
pub struct Preparer {
    ops: CollectiveOps,
    tat: OnceLock<Result<Propagator>>,
    tnt: OnceLock<Result<Propagator>>,
}

impl Preparer {
    pub fn new(n_atoms: usize) -> Result<Self> {
        Ok(Self::from_ops(CollectiveOps::new(n_atoms)?))
    }

    pub fn from_ops(ops: CollectiveOps) -> Self {
        Self {
            ops,
            tat: OnceLock::new(),
            tnt: OnceLock::new(),
        }
    }

    pub fn ops(&self) -> &CollectiveOps {
        &self.ops
    }

    pub fn n_atoms(&self) -> usize {
        self.ops.n_atoms()
    }

    /// Propagator of `G = J_z J_y + J_y J_z`.
    pub fn tat_propagator(&self) -> Result<&Propagator> {
        self.tat
            .get_or_init(|| Propagator::new(&tat_generator(&self.ops)))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Propagator of `J_z² + (N/2) J_x`.
    pub fn tnt_propagator(&self) -> Result<&Propagator> {
        self.tnt
            .get_or_init(|| Propagator::new(&tnt_generator(&self.ops, 1.0)))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// The twisted state before the post-twist `J_x` rotation.
    pub fn twisted(&self, scheme: SchemeKind, lambda: f64) -> Result<SpinState> {
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite, got {lambda}"
            )));
        }
        let css = self.ops.css_x();
        match scheme {
            SchemeKind::TatSqueezed => self.ops.evolve(&css, self.tat_propagator()?, -lambda),
            SchemeKind::OatSqueezed | SchemeKind::OatNonGauss => {
                self.ops.apply_jz_squared_phase(&css, lambda)
            }
            SchemeKind::Tnt => self.ops.evolve(&css, self.tnt_propagator()?, lambda),
        }
    }

    /// Angle `θ` of the applied `exp(-i θ J_x)` for this configuration.
    pub fn applied_rotation(&self, config: &PrepConfig) -> Result<f64> {
        if let RotationPolicy::FixedAngle(theta) = config.rotation_policy {
            return Ok(theta);
        }
        Ok(match config.scheme {
            SchemeKind::TatSqueezed => FRAC_PI_2,
            SchemeKind::OatNonGauss => 0.0,
            SchemeKind::Tnt => TNT_ROTATION,
            SchemeKind::OatSqueezed => match config.rotation_policy {
                RotationPolicy::AnalyticKu => {
                    analytic_rotation(self.n_atoms(), config.lambda_assumed)?
                }
                _ => self.optimal_oat_rotation(config.lambda_assumed)?,
            },
        })
    }

    /// Pre-encoding state `|ψ_Λ>`.
    pub fn prepare(&self, config: &PrepConfig) -> Result<SpinState> {
        self.check_n(config)?;
        config.validate()?;
        let theta = self.applied_rotation(config)?;
        self.prepare_with_rotation(config.scheme, config.lambda_actual, theta)
    }

    /// Twists with `lambda` then applies `exp(-i θ J_x)`.
    pub fn prepare_with_rotation(
        &self,
        scheme: SchemeKind,
        lambda: f64,
        theta: f64,
    ) -> Result<SpinState> {
        let twisted = self.twisted(scheme, lambda)?;
        if theta == 0.0 {
            return Ok(twisted);
        }
        self.ops.rotate(&twisted, Axis::X, theta)
    }

    /// `θ ∈ [0, π)` minimising `Var(J_z)` after `exp(-i θ J_x)` on the OAT
    /// twisted state with strength `lambda`.
    pub fn optimal_oat_rotation(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "optimal OAT rotation needs lambda > 0, got {lambda}"
            )));
        }
        let twisted = self.twisted(SchemeKind::OatSqueezed, lambda)?;
        let vz = self.ops.variance(&twisted, self.ops.jz())?;
        let vy = self.ops.variance(&twisted, self.ops.jy())?;
        let cyz = self
            .ops
            .sym_covariance(&twisted, self.ops.jz(), self.ops.jy())?;
        Ok(minimise_rotated_variance(vz, vy, cyz))
    }

    /// Applies the phase `exp(-i φ J_y)`; `|φ| ≤ π/2`.
    pub fn encode_phase(&self, state: &SpinState, phi: f64) -> Result<SpinState> {
        check_phase_domain(phi)?;
        self.ops.rotate(state, Axis::Y, phi)
    }

    fn check_n(&self, config: &PrepConfig) -> Result<()> {
        if config.n_atoms != self.n_atoms() {
            return Err(Error::DimensionMismatch {
                expected: self.n_atoms(),
                got: config.n_atoms,
            });
        }
        Ok(())
    }
}

/// `Var(J_z)` of the state after `exp(-i θ J_x)`, from pre-rotation moments:
/// `cos²θ Vz + sin²θ Vy + sin2θ C` with `C` the symmetrised covariance.
pub fn rotated_z_variance(theta: f64, var_z: f64, var_y: f64, sym_cov_zy: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c * var_z + s * s * var_y + 2.0 * s * c * sym_cov_zy
}

fn minimise_rotated_variance(vz: f64, vy: f64, cyz: f64) -> f64 {
    let f = |t: f64| rotated_z_variance(t, vz, vy, cyz);
    let grid = linspace(0.0, PI, OAT_SCAN_POINTS + 1);
    let grid = &grid[..OAT_SCAN_POINTS];
    let step = PI / OAT_SCAN_POINTS as f64;
    let (mut best, mut best_v) = (0.0, f64::INFINITY);
    for &t in grid {
        let v = f(t);
        if v < best_v {
            best = t;
            best_v = v;
        }
    }
    // π-periodic: the bracket may cross 0 or π before being wrapped back
    let (t, _) = golden_min(f, best - step, best + step, OAT_ANGLE_TOL);
    t.rem_euclid(PI)
}

/// Closed-form optimal OAT angle from the large-N moment formulas.
pub fn analytic_rotation(n_atoms: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "analytic OAT rotation needs lambda > 0, got {lambda}"
        )));
    }
    Ok(largescale::analytic_coefficients(n_atoms, lambda)?.delta)
}

/// `J_z J_y + J_y J_z`.
pub fn tat_generator(ops: &CollectiveOps) -> CMatrix {
    let zy = ops.jz() * ops.jy();
    let yz = ops.jy() * ops.jz();
    zy + yz
}

/// `J_z² + drive · (N/2) J_x`; `drive = 1` is the TNT protocol.
pub fn tnt_generator(ops: &CollectiveOps, drive: f64) -> CMatrix {
    let jz2 = ops.jz() * ops.jz();
    let half_n = ops.n_atoms() as f64 / 2.0;
    jz2 + ops.jx().map(|z| z * (drive * half_n))
}

fn check_phase_domain(phi: f64) -> Result<()> {
    if !phi.is_finite() || phi.abs() > FRAC_PI_2 {
        return Err(Error::InvalidArgument(format!(
            "phase {phi} outside [-π/2, π/2]"
        )));
    }
    Ok(())
}

/// One-shot convenience over [`Preparer::prepare`].
pub fn prepare(config: &PrepConfig) -> Result<SpinState> {
    Preparer::new(config.n_atoms)?.prepare(config)
}

/// One-shot convenience over [`Preparer::optimal_oat_rotation`].
pub fn optimal_oat_rotation(n_atoms: usize, lambda: f64) -> Result<f64> {
    Preparer::new(n_atoms)?.optimal_oat_rotation(lambda)
}

/// One-shot convenience over [`Preparer::encode_phase`].
pub fn encode_phase(state: &SpinState, phi: f64) -> Result<SpinState> {
    check_phase_domain(phi)?;
    CollectiveOps::new(state.n_atoms())?.rotate(state, Axis::Y, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wineland_xi;

    fn prep(n: usize) -> Preparer {
        Preparer::new(n).unwrap()
    }

    #[test]
    fn zero_twist_with_zero_rotation_is_css() {
        let p = prep(20);
        let css = p.ops().css_x();
        for scheme in SchemeKind::ALL {
            let cfg =
                PrepConfig::unbiased(20, scheme, 0.0).with_policy(RotationPolicy::FixedAngle(0.0));
            let s = p.prepare(&cfg).unwrap();
            assert!(s.fidelity(&css) > 1.0 - 1e-12, "{scheme}");
        }
    }

    #[test]
    fn tat_squeezing_anchors() {
        let p = prep(100);
        let xi = |l: f64| {
            let s = p
                .prepare(&PrepConfig::unbiased(100, SchemeKind::TatSqueezed, l))
                .unwrap();
            wineland_xi(p.ops(), &s).unwrap()
        };
        assert!((xi(0.01) - 0.38).abs() < 0.01);
        assert!((xi(0.02) - 0.20).abs() < 0.01);
    }

    #[test]
    fn tat_state_ignores_assumed_lambda() {
        let p = prep(60);
        let a = p
            .prepare(&PrepConfig::new(60, SchemeKind::TatSqueezed, 0.02, 0.02))
            .unwrap();
        let b = p
            .prepare(&PrepConfig::new(60, SchemeKind::TatSqueezed, 0.02, 0.005))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oat_numeric_angle_beats_dense_scan() {
        let p = prep(100);
        let twisted = p.twisted(SchemeKind::OatSqueezed, 0.02).unwrap();
        let pre = p.ops().variance(&twisted, p.ops().jz()).unwrap();
        let theta = p.optimal_oat_rotation(0.02).unwrap();
        let post_state = p.ops().rotate(&twisted, Axis::X, theta).unwrap();
        let post = p.ops().variance(&post_state, p.ops().jz()).unwrap();
        assert!(post < pre);
        for t in linspace(0.0, PI, 1000) {
            let s = p.ops().rotate(&twisted, Axis::X, t).unwrap();
            let v = p.ops().variance(&s, p.ops().jz()).unwrap();
            assert!(post <= v + 1e-9, "theta {t}: {v} < {post}");
        }
    }

    #[test]
    fn oat_numeric_angle_matches_analytic() {
        let p = prep(100);
        for l in [0.005, 0.01, 0.02, 0.03] {
            let numeric = p.optimal_oat_rotation(l).unwrap();
            let analytic = analytic_rotation(100, l).unwrap();
            assert!(
                (numeric - analytic).abs() < 1e-6,
                "lambda {l}: {numeric} vs {analytic}"
            );
        }
        assert!(p.optimal_oat_rotation(0.0).is_err());
    }

    #[test]
    fn oat_wrong_angle_increases_variance() {
        let p = prep(100);
        let var = |assumed: f64| {
            let s = p
                .prepare(&PrepConfig::new(
                    100,
                    SchemeKind::OatSqueezed,
                    0.034,
                    assumed,
                ))
                .unwrap();
            p.ops().variance(&s, p.ops().jz()).unwrap()
        };
        assert!(var(0.014) > var(0.034));
    }

    #[test]
    fn oat_misspecification_only_changes_rotation() {
        let p = prep(50);
        let a = p.twisted(SchemeKind::OatSqueezed, 0.03).unwrap();
        let cfg = PrepConfig::new(50, SchemeKind::OatSqueezed, 0.03, 0.02);
        let theta = p.applied_rotation(&cfg).unwrap();
        let b = p
            .ops()
            .rotate(&p.prepare(&cfg).unwrap(), Axis::X, -theta)
            .unwrap();
        assert!(a.fidelity(&b) > 1.0 - 1e-12);
    }

    #[test]
    fn tnt_without_drive_is_reversed_oat() {
        // exp(-iλJz²) is the complex conjugate of the OAT twist exp(+iλJz²)
        let p = prep(40);
        let css = p.ops().css_x();
        let lambda = 0.03;
        let oat = p.twisted(SchemeKind::OatNonGauss, lambda).unwrap();
        let oat_conj = SpinState::new(40, oat.amplitudes().map(|z| z.conj())).unwrap();
        let mut last = 0.0;
        for drive in [1e-1, 1e-2, 1e-3, 0.0] {
            let g = tnt_generator(p.ops(), drive);
            let s = p.ops().apply_hermitian_evolution(&css, &g, lambda).unwrap();
            let f = s.fidelity(&oat_conj);
            assert!(f >= last - 1e-12);
            last = f;
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn tnt_matches_direct_evolution() {
        let p = prep(30);
        let lambda = 0.07;
        let direct = {
            let g = tnt_generator(p.ops(), 1.0);
            let s = p
                .ops()
                .apply_hermitian_evolution(&p.ops().css_x(), &g, lambda)
                .unwrap();
            p.ops().rotate(&s, Axis::X, -1.0).unwrap()
        };
        let s = p
            .prepare(&PrepConfig::unbiased(30, SchemeKind::Tnt, lambda))
            .unwrap();
        assert!(s.fidelity(&direct) > 1.0 - 1e-12);
    }

    #[test]
    fn encode_sign_and_domain() {
        let p = prep(100);
        let css = p.ops().css_x();
        assert!(p.encode_phase(&css, 0.0).unwrap().fidelity(&css) > 1.0 - 1e-12);
        let s = p.encode_phase(&css, 0.1).unwrap();
        let jz = p.ops().expectation(&s, p.ops().jz()).unwrap();
        assert!((jz + 50.0 * 0.1_f64.sin()).abs() < 1e-8);
        assert!(p.encode_phase(&css, 1.6).is_err());
        assert!(encode_phase(&css, -1.6).is_err());
    }

    #[test]
    fn tat_response_follows_jx0() {
        let p = prep(100);
        let s = p
            .prepare(&PrepConfig::unbiased(100, SchemeKind::TatSqueezed, 0.02))
            .unwrap();
        let jx0 = p.ops().expectation(&s, p.ops().jx()).unwrap();
        let phi = 1e-4;
        let enc = p.encode_phase(&s, phi).unwrap();
        let jz = p.ops().expectation(&enc, p.ops().jz()).unwrap();
        assert!((jz / (-jx0 * phi.sin()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let p = prep(10);
        assert!(p
            .prepare(&PrepConfig::unbiased(11, SchemeKind::Tnt, 0.1))
            .is_err());
        assert!(p
            .prepare(&PrepConfig::new(10, SchemeKind::Tnt, -0.1, 0.1))
            .is_err());
        assert_eq!(SchemeKind::Tnt.regime_label(0.08), "non_gaussian");
        assert_eq!(SchemeKind::OatNonGauss.regime_label(0.08), "gaussian");
    }

    #[test]
    fn oat_xi_minimum_near_optimal_lambda() {
        let p = prep(100);
        let grid = linspace(0.03, 0.08, 501);
        let xis: Vec<f64> = grid
            .iter()
            .map(|&l| {
                let s = p
                    .prepare(&PrepConfig::unbiased(100, SchemeKind::OatSqueezed, l))
                    .unwrap();
                wineland_xi(p.ops(), &s).unwrap()
            })
            .collect();
        let i = crate::optimize::argmax(&xis.iter().map(|x| -x).collect::<Vec<_>>()).unwrap();
        // the closed form is asymptotic; at N = 100 the exact minimum sits at ~0.80 λ(N)
        let ratio = grid[i] / largescale::lambda_opt(100);
        assert!((0.78..0.83).contains(&ratio), "ratio {ratio}");
    }
}
