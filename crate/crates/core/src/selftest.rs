//! Runtime self-test: sign convention, operator algebra, closed-form OAT
//! moments and normalisation.

use crate::error::Result;
use crate::largescale::{analytic_coefficients, analytic_moments, nu_from_theta};
use crate::metrics::MomentSet;
use crate::model::PhaseFamily;
use crate::schemes::{PrepConfig, Preparer, RotationPolicy, SchemeKind};
use crate::spin_core::{Basis, CMatrix, CollectiveOps, C64};

pub const SIGN_GATE_TOL: f64 = 1e-8;
pub const ALGEBRA_TOL: f64 = 1e-10;
pub const ORACLE_TOL: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-10;

/// Test hooks. `flip_encoding_sign` encodes `-φ` in place of `φ`, which the
/// sign gate must catch.
#[derive(Clone, Copy, Debug, Default)]
pub struct SelftestOptions {
    pub flip_encoding_sign: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelftestReport {
    pub items: Vec<CheckItem>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckItem> {
        self.items.iter().find(|i| !i.passed)
    }

    fn record(&mut self, name: impl Into<String>, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.items.push(CheckItem {
            name: name.into(),
            passed,
            detail,
        });
    }
}

pub fn selftest(opts: SelftestOptions) -> SelftestReport {
    let mut report = SelftestReport::default();
    report.record(
        "sign gate: <J_z> = -<J_x0> sin(phi) on the coherent state",
        sign_gate(opts),
    );
    for n in [1usize, 2, 4, 10, 50, 100] {
        report.record(format!("operator algebra N={n}"), operator_algebra(n));
    }
    report.record("closed-form OAT moments vs exact, N=100", oracle(100));
    report.record(
        "normalisation of prepared and encoded states",
        normalisation(),
    );
    report
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn sign_gate(opts: SelftestOptions) -> Result<(bool, String)> {
    let prep = Preparer::new(100)?;
    let ops = prep.ops();
    let css = ops.css_x();
    let jx0 = ops.expectation(&css, ops.jx())?;
    let mut worst: f64 = 0.0;
    for phi in [0.1, -0.1, 0.01, -0.01] {
        let applied = if opts.flip_encoding_sign { -phi } else { phi };
        let enc = prep.encode_phase(&css, applied)?;
        let jz = ops.expectation(&enc, ops.jz())?;
        worst = worst.max(rel(jz, -jx0 * f64::sin(phi)));
    }
    Ok((
        worst <= SIGN_GATE_TOL,
        format!("max relative error {worst:.3e}"),
    ))
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn operator_algebra(n: usize) -> Result<(bool, String)> {
    let ops = CollectiveOps::new(n)?;
    let (x, y, z) = (ops.jx(), ops.jy(), ops.jz());
    let i = C64::new(0.0, 1.0);
    let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
    let err_xy = max_abs(&(comm(x, y) - z * i));
    let err_yz = max_abs(&(comm(y, z) - x * i));
    let err_zx = max_abs(&(comm(z, x) - y * i));
    let j = ops.j();
    let dim = ops.dim();
    let casimir =
        x * x + y * y + z * z - CMatrix::identity(dim, dim) * C64::new(j * (j + 1.0), 0.0);
    let err_c = max_abs(&casimir);
    let herm = [x, y, z]
        .iter()
        .map(|m| max_abs(&(*m - m.adjoint())))
        .fold(0.0, f64::max);
    let worst = err_xy.max(err_yz).max(err_zx).max(err_c).max(herm);
    Ok((worst <= ALGEBRA_TOL, format!("max entry error {worst:.3e}")))
}

fn oracle(n: usize) -> Result<(bool, String)> {
    let prep = Preparer::new(n)?;
    let mut worst: f64 = 0.0;
    for l in [1e-3, 0.01, 0.03, 0.05] {
        let theta = analytic_coefficients(n, l)?.delta;
        let cfg = PrepConfig::unbiased(n, SchemeKind::OatSqueezed, l)
            .with_policy(RotationPolicy::FixedAngle(theta));
        let exact = MomentSet::of(prep.ops(), &prep.prepare(&cfg)?)?;
        let closed = analytic_moments(n, l, nu_from_theta(theta))?;
        worst = worst
            .max(rel(closed.s_x_mean, exact.jx0))
            .max(rel(closed.var_minus, exact.var_z0))
            .max(rel(closed.var_plus, exact.var_y0));
    }
    Ok((
        worst <= ORACLE_TOL,
        format!("max relative error {worst:.3e}"),
    ))
}

fn normalisation() -> Result<(bool, String)> {
    let prep = Preparer::new(40)?;
    let mut worst: f64 = 0.0;
    for scheme in SchemeKind::ALL {
        for l in [0.01, 0.05, 0.15] {
            let s = prep.prepare(&PrepConfig::unbiased(40, scheme, l))?;
            worst = worst.max((s.norm() - 1.0).abs());
            worst = worst.max((prep.encode_phase(&s, 0.3)?.norm() - 1.0).abs());
            for basis in [Basis::Z, Basis::X] {
                let total: f64 = PhaseFamily::new(prep.ops(), &s, basis)
                    .dist(0.3)
                    .probs()
                    .iter()
                    .sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    Ok((worst <= NORM_TOL, format!("max deviation {worst:.3e}")))
}
