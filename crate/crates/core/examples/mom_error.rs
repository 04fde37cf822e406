//! Bias coefficient, single-shot noise and total error of the arcsin
//! estimator when the squeezing strength is miscalibrated.

use prepbias::metrics::{bias_coefficient, error_metric, sigma_q_linearized, MomentSet};
use prepbias::{PrepConfig, Preparer, SchemeKind};

fn main() -> prepbias::Result<()> {
    let n = 100;
    let lambda = 0.02;
    let prep = Preparer::new(n)?;
    let ops = prep.ops();
    println!("scheme,lambda_assumed,B,Q,E");
    for scheme in [SchemeKind::TatSqueezed, SchemeKind::OatSqueezed] {
        for k in 0..=8 {
            let assumed = 0.012 + 0.002 * k as f64;
            // the state is built with the rotation the experimenter chose for `assumed`
            let state = prep.prepare(&PrepConfig::new(n, scheme, lambda, assumed))?;
            let moments = MomentSet::of(ops, &state)?;
            let reference = prep.prepare(&PrepConfig::unbiased(n, scheme, assumed))?;
            let jx0_assumed = ops.expectation(&reference, ops.jx())?;
            let b = bias_coefficient(moments.jx0, jx0_assumed)?;
            let q = sigma_q_linearized(&moments, 0.0, jx0_assumed, 1)?.sqrt();
            println!(
                "{},{assumed:.3},{b:.5},{q:.5},{:.4}",
                scheme.name(),
                error_metric(n, q, b)
            );
        }
    }
    Ok(())
}
