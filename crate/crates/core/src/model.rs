//! Outcome-probability models `P(m | φ)` and `P(m | φ, λ)` built on the exact
//! engine.

use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::schemes::{Preparer, SchemeKind};
use crate::spin_core::{Axis, Basis, CVector, CollectiveOps, ProbDist, Propagator, SpinState, C64};

/// Distributions of a fixed pre-encoding state under `exp(-i φ J_y)` and a
/// readout in `basis`. Each evaluation costs one `O(dim²)` product.
#[derive(Clone, Debug)]
pub struct PhaseFamily<'a> {
    ops: &'a CollectiveOps,
    prop: &'a Propagator,
    coeffs: CVector,
    shift: f64,
}

impl<'a> PhaseFamily<'a> {
    pub fn new(ops: &'a CollectiveOps, state: &SpinState, basis: Basis) -> Self {
        let prop = ops.propagator(Axis::Y).expect("J_y propagator is cached");
        // the x readout is a further -π/2 turn about the same axis
        let shift = match basis {
            Basis::Z => 0.0,
            Basis::X => -FRAC_PI_2,
        };
        Self {
            ops,
            prop,
            coeffs: prop.to_eigenbasis(state.amplitudes()),
            shift,
        }
    }

    pub fn dist(&self, phi: f64) -> ProbDist {
        let amps = self
            .prop
            .evolve_from_eigenbasis(&self.coeffs, phi + self.shift);
        ProbDist::from_amplitudes(self.ops.m_values(), &amps)
    }

    /// Exact `(P, ∂φP, ∂²φP)`; the φ dependence is diagonal in the `J_y`
    /// eigenbasis.
    pub fn derivatives(&self, phi: f64) -> PhaseDerivatives {
        let t = phi + self.shift;
        let e = self.prop.eigenvalues();
        let evolved = self.prop.evolve_from_eigenbasis(&self.coeffs, t);
        let d1c = CVector::from_iterator(
            self.coeffs.len(),
            self.coeffs
                .iter()
                .zip(e)
                .map(|(c, &d)| c * C64::new(0.0, -d)),
        );
        let d2c = CVector::from_iterator(
            self.coeffs.len(),
            self.coeffs
                .iter()
                .zip(e)
                .map(|(c, &d)| c * C64::new(-d * d, 0.0)),
        );
        let a1 = self.prop.evolve_from_eigenbasis(&d1c, t);
        let a2 = self.prop.evolve_from_eigenbasis(&d2c, t);
        let mut out = PhaseDerivatives {
            p: Vec::with_capacity(evolved.len()),
            dp: Vec::with_capacity(evolved.len()),
            d2p: Vec::with_capacity(evolved.len()),
        };
        for ((a, b), c) in evolved.iter().zip(a1.iter()).zip(a2.iter()) {
            out.p.push(a.norm_sqr());
            out.dp.push(2.0 * (a.conj() * b).re);
            out.d2p.push(2.0 * (b.norm_sqr() + (a.conj() * c).re));
        }
        out
    }
}

/// Outcome probabilities with their first and second φ derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDerivatives {
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub d2p: Vec<f64>,
}

impl PhaseDerivatives {
    pub(crate) fn accumulate(&mut self, w: f64, other: &PhaseDerivatives) {
        for (acc, x) in [
            (&mut self.p, &other.p),
            (&mut self.dp, &other.dp),
            (&mut self.d2p, &other.d2p),
        ] {
            for (a, b) in acc.iter_mut().zip(x) {
                *a += w * b;
            }
        }
    }

    pub(crate) fn zeros(len: usize) -> Self {
        Self {
            p: vec![0.0; len],
            dp: vec![0.0; len],
            d2p: vec![0.0; len],
        }
    }
}

/// A one-parameter phase model.
pub trait PhaseModel: Sync {
    fn dist(&self, phi: f64) -> Result<ProbDist>;

    /// Exact φ derivatives when the model can supply them.
    fn derivatives(&self, _phi: f64) -> Option<Result<PhaseDerivatives>> {
        None
    }
}

impl PhaseModel for PhaseFamily<'_> {
    fn dist(&self, phi: f64) -> Result<ProbDist> {
        Ok(PhaseFamily::dist(self, phi))
    }

    fn derivatives(&self, phi: f64) -> Option<Result<PhaseDerivatives>> {
        Some(Ok(PhaseFamily::derivatives(self, phi)))
    }
}

impl<F: Fn(f64) -> Result<ProbDist> + Sync> PhaseModel for F {
    fn dist(&self, phi: f64) -> Result<ProbDist> {
        self(phi)
    }
}

/// A two-parameter `(φ, λ)` model.
pub trait JointModel: Sync {
    fn dist(&self, phi: f64, lambda: f64) -> Result<ProbDist>;

    /// The φ-family at fixed `lambda`; the default re-evaluates `dist`.
    fn slice(&self, lambda: f64) -> Result<Box<dyn PhaseModel + '_>> {
        Ok(Box::new(move |phi: f64| self.dist(phi, lambda)))
    }
}

/// The protocol of `scheme` twisted with λ and rotated by a fixed `theta`,
/// then encoded and read out in `basis`.
#[derive(Clone, Copy, Debug)]
pub struct SchemeModel<'a> {
    pub prep: &'a Preparer,
    pub scheme: SchemeKind,
    pub basis: Basis,
    pub theta: f64,
}

impl<'a> SchemeModel<'a> {
    pub fn new(prep: &'a Preparer, scheme: SchemeKind, basis: Basis, theta: f64) -> Self {
        Self {
            prep,
            scheme,
            basis,
            theta,
        }
    }

    /// Uses the scheme's rotation for the configuration `(λ, λ')`.
    pub fn for_assumed(
        prep: &'a Preparer,
        scheme: SchemeKind,
        basis: Basis,
        lambda_assumed: f64,
    ) -> Result<Self> {
        let cfg = crate::schemes::PrepConfig::unbiased(prep.n_atoms(), scheme, lambda_assumed);
        Ok(Self::new(prep, scheme, basis, prep.applied_rotation(&cfg)?))
    }

    pub fn state(&self, lambda: f64) -> Result<SpinState> {
        self.prep
            .prepare_with_rotation(self.scheme, lambda, self.theta)
    }

    pub fn family(&self, lambda: f64) -> Result<PhaseFamily<'a>> {
        Ok(PhaseFamily::new(
            self.prep.ops(),
            &self.state(lambda)?,
            self.basis,
        ))
    }
}

impl JointModel for SchemeModel<'_> {
    fn dist(&self, phi: f64, lambda: f64) -> Result<ProbDist> {
        Ok(self.family(lambda)?.dist(phi))
    }

    fn slice(&self, lambda: f64) -> Result<Box<dyn PhaseModel + '_>> {
        Ok(Box::new(self.family(lambda)?))
    }
}
