use std::fs;

use probekit::harness::{run_experiment, run_gamma_sweep, ExperimentConfig, Preconditioner};
use probekit::Error;

fn small(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.n = 32;
    cfg.output = dir.join("out");
    cfg.cache = Some(dir.join("cache"));
    cfg.reflectivity = "layered".into();
    cfg.reference.steps = 15;
    cfg.basis.truncations = vec![[1, 1, 0]];
    cfg.probing.preconditioners = ["R1", "R2", "K1", "K2"].map(String::from).to_vec();
    cfg.generalization.seeds = vec![3];
    cfg.generalization.preconditioners = ["R1", "K1"].map(String::from).to_vec();
    cfg
}

#[test]
fn small_experiment_writes_everything_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.misfit.len(), 16);
    assert!(r.misfit.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.mask_count > 0);
    for label in ["migrated", "R1", "R2", "K1", "K2"] {
        let row = r.rows.iter().find(|row| row.label == label).unwrap_or_else(|| panic!("{label}"));
        assert!(row.mse_masked_reference.is_finite() && row.mse_reference.is_finite());
    }
    assert!(r.generalization_error(3, "K1", "1-1-0").unwrap().is_finite());

    let dir = &cfg.output;
    for f in ["mse.csv", "generalization.csv", "misfit.csv", "manifest.txt", "reference.pgm", "migrated.pkgrid"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(dir.join("fits/R2_1-1-0.pksym").is_file());
    let tag = &r.config_hash[..16];
    let csv = fs::read_to_string(dir.join("mse.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with(tag)));
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains(&r.config_hash) && manifest.contains("complete"));

    let again = run_experiment(&cfg).unwrap();
    assert_eq!(again.rows, r.rows);
    assert_eq!(fs::read_to_string(dir.join("mse.csv")).unwrap(), csv);
}

#[test]
fn invalid_config_fails_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.medium.gamma = 0.9;
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    cfg.medium.gamma = 0.0;
    cfg.probing.preconditioners = vec!["Z1".into()];
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

#[test]
fn gamma_sweep_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let rows = run_gamma_sweep(&cfg, &[0.0, 0.4], Preconditioner::Random(1)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.mse_masked_reference.is_finite()));
    let csv = fs::read_to_string(cfg.output.join("gamma_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(run_gamma_sweep(&cfg, &[], Preconditioner::Random(1)).is_err());
}
