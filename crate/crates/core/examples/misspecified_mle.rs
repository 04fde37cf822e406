//! Maximum-likelihood phase estimates from a model calibrated at the wrong
//! twisting strength, against the linear bias prediction from the Fisher
//! matrix.

use prepbias::estimation::{mle_single, phase_domain, sample_outcomes, stats_of};
use prepbias::fisher::{fisher_matrix, misspec_bias};
use prepbias::{Basis, Preparer, SchemeKind, SchemeModel};

fn main() -> prepbias::Result<()> {
    let prep = Preparer::new(100)?;
    let (lambda, dlambda, phi) = (0.05, 0.0025, 0.02);
    let basis = Basis::X;
    let model = SchemeModel::new(&prep, SchemeKind::OatNonGauss, basis, 0.0);
    let actual = model.family(lambda)?.dist(phi);
    let assumed = model.family(lambda + dlambda)?;

    let mut results = Vec::new();
    for trial in 0..5 {
        let samples = sample_outcomes(&actual, 100_000, 7, trial)?;
        results.push(mle_single(&samples, &assumed, phase_domain(basis))?);
    }
    let s = stats_of(&results, phi)?;
    let predicted = misspec_bias(&fisher_matrix(&model, phi, lambda)?.value, dlambda)?;
    println!(
        "Monte-Carlo bias {:.3e} +/- {:.1e}, linear prediction {predicted:.3e}",
        s.bias, s.se_bias
    );
    Ok(())
}
