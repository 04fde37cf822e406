//! Loads a shipped experiment config, applies an override and prints the
//! resulting CSV.

use std::path::Path;

use prepbias::experiments::{run_experiment, ExperimentConfig};

fn main() -> prepbias::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/squeeze_sweep.json");
    let cfg = ExperimentConfig::load(&path, &["lambda.count=6".to_string()])?;
    let out = run_experiment(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", out.table.to_csv()?);
    Ok(())
}
