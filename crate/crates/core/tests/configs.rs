use std::path::Path;

use prepbias::experiments::{ExperimentConfig, ExperimentKind};

#[test]
fn every_experiment_ships_a_valid_config() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for kind in ExperimentKind::ALL {
        let path = dir.join(format!("{}.json", kind.file_stem()));
        let cfg = ExperimentConfig::load(&path, &[])
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(cfg.experiment, kind);
    }
}

#[test]
fn hash_ignores_output_settings_only() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let path = dir.join("squeeze_sweep.json");
    let base = ExperimentConfig::load(&path, &[]).unwrap();
    let moved = ExperimentConfig::load(&path, &["out=\"elsewhere\"".into()]).unwrap();
    let changed = ExperimentConfig::load(&path, &["n_atoms=50".into()]).unwrap();
    assert_eq!(base.hash(), moved.hash());
    assert_ne!(base.hash(), changed.hash());
}
