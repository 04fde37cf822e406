//! Random preparation error: a Gaussian mixture over λ, its moments, the
//! method-of-moments sensitivity and the classical Cramér–Rao bound.
//!
//! The weight is `exp(-(λ - λ₀)² / (2Δλ))`, so `Δλ` acts as a variance and the
//! spread of the support is `√Δλ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fisher::{classical_fisher, Checked};
use crate::model::{PhaseDerivatives, PhaseFamily, PhaseModel};
use crate::optimize::linspace;
use crate::schemes::{PrepConfig, Preparer, SchemeKind};
use crate::spin_core::{Basis, CMatrix, ProbDist, SpinState};

pub const DEFAULT_NODES: usize = 41;
pub const DEFAULT_TRUNCATION: f64 = 4.0;
const SLOPE_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureSpec {
    pub lambda0: f64,
    pub delta_lambda: f64,
    pub n_nodes: usize,
    /// Half-width of the support in units of `√Δλ`.
    pub truncation: f64,
}

impl MixtureSpec {
    pub fn new(lambda0: f64, delta_lambda: f64) -> Self {
        Self {
            lambda0,
            delta_lambda,
            n_nodes: DEFAULT_NODES,
            truncation: DEFAULT_TRUNCATION,
        }
    }

    pub fn with_nodes(mut self, n_nodes: usize) -> Self {
        self.n_nodes = n_nodes;
        self
    }

    /// Quadrature nodes and normalised weights.
    pub fn nodes(&self) -> Result<Vec<(f64, f64)>> {
        if !(self.delta_lambda >= 0.0) || !self.lambda0.is_finite() {
            return Err(Error::InvalidArgument(format!("bad mixture spec {self:?}")));
        }
        if self.delta_lambda == 0.0 {
            return Ok(vec![(1.0, self.lambda0)]);
        }
        if self.n_nodes < 2 || !(self.truncation > 0.0) {
            return Err(Error::InvalidArgument(
                "mixture needs >= 2 nodes and positive truncation".into(),
            ));
        }
        let half = self.truncation * self.delta_lambda.sqrt();
        let grid = linspace(self.lambda0 - half, self.lambda0 + half, self.n_nodes);
        let raw: Vec<f64> = grid
            .iter()
            .map(|l| (-(l - self.lambda0).powi(2) / (2.0 * self.delta_lambda)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(raw.iter().zip(grid).map(|(w, l)| (w / total, l)).collect())
    }
}

/// Weighted pure states; every node uses the rotation chosen for `λ₀`.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub spec: MixtureSpec,
    pub scheme: SchemeKind,
    pub theta: f64,
    pub nodes: Vec<(f64, f64, SpinState)>,
}

impl Mixture {
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|(w, _, _)| *w)
    }
}

pub fn build_mixture(prep: &Preparer, spec: MixtureSpec, scheme: SchemeKind) -> Result<Mixture> {
    let theta =
        prep.applied_rotation(&PrepConfig::unbiased(prep.n_atoms(), scheme, spec.lambda0))?;
    let nodes = spec
        .nodes()?
        .into_par_iter()
        .map(|(w, l)| Ok((w, l, prep.prepare_with_rotation(scheme, l, theta)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mixture {
        spec,
        scheme,
        theta,
        nodes,
    })
}

/// `Tr(ρA)` and `Tr(ρA²) - Tr(ρA)²`.
pub fn mixed_moments(prep: &Preparer, mixture: &Mixture, op: &CMatrix) -> Result<(f64, f64)> {
    let ops = prep.ops();
    let mut mean = 0.0;
    let mut second = 0.0;
    for (w, _, s) in &mixture.nodes {
        let m = ops.expectation(s, op)?;
        let v = ops.variance(s, op)?;
        mean += w * m;
        second += w * (v + m * m);
    }
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Outcome distribution of the encoded mixture in `basis`.
pub fn mixed_distribution(
    prep: &Preparer,
    mixture: &Mixture,
    basis: Basis,
    phi: f64,
) -> Result<ProbDist> {
    let parts: Vec<(f64, ProbDist)> = mixture
        .nodes
        .iter()
        .map(|(w, _, s)| (*w, PhaseFamily::new(prep.ops(), s, basis).dist(phi)))
        .collect();
    ProbDist::mixture(&parts)
}

/// φ-family of the encoded mixture, reusing one eigenbasis projection per node.
pub struct MixtureFamily<'a> {
    parts: Vec<(f64, PhaseFamily<'a>)>,
}

impl<'a> MixtureFamily<'a> {
    pub fn new(prep: &'a Preparer, mixture: &Mixture, basis: Basis) -> Self {
        Self {
            parts: mixture
                .nodes
                .iter()
                .map(|(w, _, s)| (*w, PhaseFamily::new(prep.ops(), s, basis)))
                .collect(),
        }
    }
}

impl PhaseModel for MixtureFamily<'_> {
    fn dist(&self, phi: f64) -> Result<ProbDist> {
        let parts: Vec<(f64, ProbDist)> =
            self.parts.iter().map(|(w, f)| (*w, f.dist(phi))).collect();
        ProbDist::mixture(&parts)
    }

    fn derivatives(&self, phi: f64) -> Option<Result<PhaseDerivatives>> {
        let len = self.parts.first().map(|(_, f)| f.dist(phi).len())?;
        let mut acc = PhaseDerivatives::zeros(len);
        for (w, f) in &self.parts {
            acc.accumulate(*w, &f.derivatives(phi));
        }
        Some(Ok(acc))
    }
}

/// `ΔJ_z / (√m |∂φ Tr(ρ J_z)|)` of the z readout.
pub fn mom_sensitivity_mixed(
    prep: &Preparer,
    mixture: &Mixture,
    phi: f64,
    shots: u64,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be >= 1".into()));
    }
    let fam = MixtureFamily::new(prep, mixture, Basis::Z);
    let d0 = fam.dist(phi)?;
    let slope = (fam.dist(phi + SLOPE_STEP)?.mean() - fam.dist(phi - SLOPE_STEP)?.mean())
        / (2.0 * SLOPE_STEP);
    if slope.abs() < 1e-12 {
        return Err(Error::UndefinedMetric("vanishing slope of Tr(ρJ_z)".into()));
    }
    Ok(d0.variance().sqrt() / ((shots as f64).sqrt() * slope.abs()))
}

/// Single-shot Cramér–Rao noise `1/√F_c` of the mixture in `basis`.
pub fn crb_mixed(
    prep: &Preparer,
    mixture: &Mixture,
    basis: Basis,
    phi: f64,
) -> Result<Checked<f64>> {
    let fam = MixtureFamily::new(prep, mixture, basis);
    let fc = classical_fisher(&fam, phi)?;
    if !(fc.value > 0.0) {
        return Err(Error::Degenerate(
            "mixture carries no phase information".into(),
        ));
    }
    Ok(Checked {
        value: 1.0 / fc.value.sqrt(),
        warnings: fc.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{mom_pipeline, sample_outcomes, stats_of};
    use crate::metrics::mom_estimate;

    #[test]
    fn zero_spread_is_pure_state() {
        let p = Preparer::new(100).unwrap();
        let mix = build_mixture(&p, MixtureSpec::new(0.02, 0.0), SchemeKind::TatSqueezed).unwrap();
        assert_eq!(mix.nodes.len(), 1);
        let pure = p
            .prepare(&PrepConfig::unbiased(100, SchemeKind::TatSqueezed, 0.02))
            .unwrap();
        let (m, v) = mixed_moments(&p, &mix, p.ops().jz()).unwrap();
        assert!((m - p.ops().expectation(&pure, p.ops().jz()).unwrap()).abs() < 1e-10);
        assert!((v - p.ops().variance(&pure, p.ops().jz()).unwrap()).abs() < 1e-10);
        let crb = crb_mixed(&p, &mix, Basis::Z, 0.0).unwrap().value;
        let fam = PhaseFamily::new(p.ops(), &pure, Basis::Z);
        let pure_crb = 1.0 / classical_fisher(&fam, 0.0).unwrap().value.sqrt();
        assert!((crb / pure_crb - 1.0).abs() < 1e-6);
    }

    #[test]
    fn css_sensitivity_is_shot_noise() {
        let p = Preparer::new(100).unwrap();
        let mix = build_mixture(&p, MixtureSpec::new(0.0, 0.0), SchemeKind::OatNonGauss).unwrap();
        let d = mom_sensitivity_mixed(&p, &mix, 0.0, 400).unwrap();
        assert!((d - 1.0 / (400.0f64 * 100.0).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn weights_symmetric_and_normalised() {
        let nodes = MixtureSpec::new(0.02, 1e-5).nodes().unwrap();
        let total: f64 = nodes.iter().map(|n| n.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let k = nodes.len();
        for i in 0..k {
            assert!((nodes[i].0 - nodes[k - 1 - i].0).abs() < 1e-15);
            assert!(((nodes[i].1 - 0.02) + (nodes[k - 1 - i].1 - 0.02)).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_converges() {
        let p = Preparer::new(100).unwrap();
        let spec = MixtureSpec::new(0.02, 0.002);
        let a = build_mixture(&p, spec, SchemeKind::TatSqueezed).unwrap();
        let b = build_mixture(&p, spec.with_nodes(81), SchemeKind::TatSqueezed).unwrap();
        let fam = |m: &Mixture| {
            MixtureFamily::new(&p, m, Basis::Z)
                .dist(0.01)
                .unwrap()
                .mean()
        };
        assert!((fam(&a) - fam(&b)).abs() < 1e-6);
        for scheme in [SchemeKind::TatSqueezed, SchemeKind::OatSqueezed] {
            let spec = MixtureSpec::new(0.01, 5e-4);
            let a = build_mixture(&p, spec, scheme).unwrap();
            let b = build_mixture(&p, spec.with_nodes(81), scheme).unwrap();
            let (sa, sb) = (
                mom_sensitivity_mixed(&p, &a, 0.0, 1).unwrap(),
                mom_sensitivity_mixed(&p, &b, 0.0, 1).unwrap(),
            );
            assert!((sa / sb - 1.0).abs() < 1e-3);
            let (ca, cb) = (
                crb_mixed(&p, &a, Basis::Z, 0.0).unwrap().value,
                crb_mixed(&p, &b, Basis::Z, 0.0).unwrap().value,
            );
            assert!((ca / cb - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn total_variance_dominates_node_average() {
        let p = Preparer::new(60).unwrap();
        let mix = build_mixture(&p, MixtureSpec::new(0.02, 1e-4), SchemeKind::TatSqueezed).unwrap();
        let (_, v) = mixed_moments(&p, &mix, p.ops().jx()).unwrap();
        let avg: f64 = mix
            .nodes
            .iter()
            .map(|(w, _, s)| w * p.ops().variance(s, p.ops().jx()).unwrap())
            .sum();
        assert!(v >= avg);
    }

    #[test]
    fn tat_jx_variance_grows_with_spread() {
        let p = Preparer::new(100).unwrap();
        let mut last = 0.0;
        for dl in [0.0, 1e-5, 1e-4, 1e-3] {
            let mix =
                build_mixture(&p, MixtureSpec::new(0.02, dl), SchemeKind::TatSqueezed).unwrap();
            let (_, v) = mixed_moments(&p, &mix, p.ops().jx()).unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn crb_never_worse_than_mom() {
        let p = Preparer::new(100).unwrap();
        for scheme in [SchemeKind::TatSqueezed, SchemeKind::OatSqueezed] {
            for dl in [1e-5, 1e-4, 5e-4] {
                let mix = build_mixture(&p, MixtureSpec::new(0.01, dl), scheme).unwrap();
                let mom = mom_sensitivity_mixed(&p, &mix, 0.0, 1).unwrap();
                let crb = crb_mixed(&p, &mix, Basis::Z, 0.0).unwrap().value;
                assert!(crb <= mom * (1.0 + 1e-9), "{scheme} {dl}");
            }
        }
    }

    #[test]
    fn mixture_calibrated_mom_is_unbiased() {
        // the response curve of the mixture itself calibrates the estimator
        let p = Preparer::new(100).unwrap();
        let mix = build_mixture(&p, MixtureSpec::new(0.01, 2e-4), SchemeKind::TatSqueezed).unwrap();
        let (jx0, _) = mixed_moments(&p, &mix, p.ops().jx()).unwrap();
        let phi = 0.01;
        let d = MixtureFamily::new(&p, &mix, Basis::Z).dist(phi).unwrap();
        assert!((mom_estimate(d.mean(), jx0).unwrap() - phi).abs() < 1e-6);
        let results: Vec<_> = (0..200)
            .map(|t| {
                let s = sample_outcomes(&d, 10_000, 77, t).unwrap();
                mom_pipeline(&s, p.ops().m_values(), jx0).unwrap()
            })
            .collect();
        let st = stats_of(&results, phi).unwrap();
        assert!(st.bias.abs() < 2.0 * st.se_bias, "{st:?}");
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(MixtureSpec::new(0.01, -1.0).nodes().is_err());
        assert!(MixtureSpec::new(0.01, 1e-4).with_nodes(1).nodes().is_err());
    }
}
