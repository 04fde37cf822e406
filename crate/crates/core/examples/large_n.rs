//! Closed-form one-axis-twisting moments for large ensembles: optimal
//! strength and the relative miscalibration that degrades the error by a
//! given factor.

use prepbias::largescale::{delta_lambda_crit, lambda_opt, ThresholdMode, ThresholdSpec};

fn main() -> prepbias::Result<()> {
    println!("n_atoms,lambda_opt,crit_x2,crit_shot_noise");
    for n in [1_000usize, 10_000, 100_000, 1_000_000] {
        let relative = delta_lambda_crit(
            n,
            ThresholdSpec {
                mode: ThresholdMode::RelativeToUnbiased,
                factor: 2.0,
            },
        )?;
        let shot_noise = delta_lambda_crit(
            n,
            ThresholdSpec {
                mode: ThresholdMode::RelativeToShotNoise,
                factor: 1.0,
            },
        )?;
        println!(
            "{n},{:.3e},{:.4},{:.4}",
            lambda_opt(n),
            relative.ratio().unwrap_or(f64::NAN),
            shot_noise.ratio().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
