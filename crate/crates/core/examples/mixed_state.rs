//! Shot-to-shot jitter of the twisting strength: method-of-moments noise
//! against the Cramér-Rao noise of the resulting mixture.

use prepbias::mixedstate::{build_mixture, crb_mixed, mom_sensitivity_mixed, MixtureSpec};
use prepbias::{Basis, Preparer, SchemeKind};

fn main() -> prepbias::Result<()> {
    let n = 100;
    let prep = Preparer::new(n)?;
    let sqrt_n = (n as f64).sqrt();
    println!("scheme,delta_lambda,sqrtN_mom,sqrtN_crb");
    for scheme in [SchemeKind::TatSqueezed, SchemeKind::OatSqueezed] {
        for spread in [0.0, 2e-5, 5e-5, 1e-4, 2e-4] {
            let mix = build_mixture(&prep, MixtureSpec::new(0.01, spread), scheme)?;
            let mom = mom_sensitivity_mixed(&prep, &mix, 0.0, 1)?;
            let crb = crb_mixed(&prep, &mix, Basis::Z, 0.0)?.value;
            println!(
                "{},{spread:e},{:.4},{:.4}",
                scheme.name(),
                sqrt_n * mom,
                sqrt_n * crb
            );
        }
    }
    Ok(())
}
