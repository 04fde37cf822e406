//! Estimating the phase and the twisting strength jointly removes the bias
//! of a miscalibrated single-parameter fit.

use prepbias::estimation::{mle_single, mle_two_param, phase_domain, sample_outcomes, stats_of};
use prepbias::fisher::{fisher_matrix, two_param_q};
use prepbias::{Basis, JointModel, Preparer, SchemeKind, SchemeModel};

fn main() -> prepbias::Result<()> {
    let n = 100;
    let prep = Preparer::new(n)?;
    let (lambda, assumed, phi, shots) = (0.015, 0.02, 0.02, 250);
    let basis = Basis::Z;
    let model = SchemeModel::for_assumed(&prep, SchemeKind::TatSqueezed, basis, assumed)?;
    let actual = model.family(lambda)?.dist(phi);
    let single = model.slice(assumed)?;

    let (mut one, mut two) = (Vec::new(), Vec::new());
    for trial in 0..200 {
        let samples = sample_outcomes(&actual, shots, 11, trial)?;
        one.push(mle_single(&samples, single.as_ref(), phase_domain(basis))?);
        two.push(mle_two_param(
            &samples,
            &model,
            phase_domain(basis),
            (0.0, assumed + 0.02),
        )?);
    }
    let scale = |mse: f64| (n as f64 * mse).sqrt();
    let crb = two_param_q(&fisher_matrix(&model, phi, lambda)?.value)?;
    println!(
        "sqrt(N MSE): single {:.4}, joint {:.4}, joint bound {:.4}",
        scale(stats_of(&one, phi)?.mse),
        scale(stats_of(&two, phi)?.mse),
        crb * (n as f64 / shots as f64).sqrt()
    );
    Ok(())
}
