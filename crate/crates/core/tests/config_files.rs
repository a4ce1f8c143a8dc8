use std::path::PathBuf;

use lasercover_core::trial::{load_trial_config, prepare_trial, ConfigError, TrialConfig};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_default_matches_built_in_default() {
    let cfg = load_trial_config(&config("default.toml"), &[]).unwrap();
    assert_eq!(cfg, TrialConfig::default());
}

#[test]
fn cheek_config_prepares_with_exclusions() {
    let cfg = load_trial_config(&config("cheek76-landmarks.toml"), &[]).unwrap();
    assert_eq!(cfg.patches.len(), 1);
    assert_eq!(cfg.patches[0].exclusions.len(), 2);
    let trial = prepare_trial(&cfg).unwrap();
    let patch = &trial.patches[0];
    assert!(patch.region.operable_area() < 76.0 * 76.0);
    let plan = patch.robot_plan.as_ref().unwrap();
    assert!(plan.shots.iter().all(|s| patch.region.disc_exclusion_hit(s.uv, 3.0).is_none()));
}

#[test]
fn overrides_apply_on_top_of_files() {
    let cfg = load_trial_config(&config("default.toml"), &["subjects=4".into(), "human.rate_cv=0.5".into()]).unwrap();
    assert_eq!(cfg.subjects, 4);
    assert_eq!(cfg.human.rate_cv, 0.5);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_trial_config(&config("nope.toml"), &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
}
