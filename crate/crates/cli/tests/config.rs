use std::fs;

use neuroflux::error::Error;
use neuroflux::types::Metric;
use neuroflux_cli::config::RunConfig;

#[test]
fn defaults_are_valid_and_request_every_metric() {
    let cfg = RunConfig::default();
    cfg.validate().unwrap();
    assert_eq!(
        cfg.metrics().unwrap(),
        vec![Metric::Pcc, Metric::Plv, Metric::Msc, Metric::Ddtf, Metric::Gpdc]
    );
    assert_eq!(cfg.io.data_dir.to_str(), Some("data"));
    assert_eq!(cfg.stats.alpha, 0.05);
}

#[test]
fn file_overrides_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(
        &path,
        r#"
[io]
data_dir = "cohort"

[ec]
order = 5
n_freqs = 32

[stats]
mode = "exact"
zeros = "pratt"
alpha = 0.01
holm = true

[cli]
metrics = ["gpdc", "pcc", "gpdc"]

[synth]
n_subjects = 4
seed = 99
"#,
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.io.data_dir.to_str(), Some("cohort"));
    assert_eq!(cfg.ec.order, Some(5));
    assert_eq!(cfg.ec.n_freqs, 32);
    assert_eq!(cfg.stats.alpha, 0.01);
    assert!(cfg.stats.holm);
    assert_eq!(cfg.synth.n_subjects, 4);
    assert_eq!(cfg.synth.seed, 99);
    // duplicates collapse and the canonical metric order is restored
    assert_eq!(cfg.metrics().unwrap(), vec![Metric::Pcc, Metric::Gpdc]);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(&path, "[io]\ndata_dri = \"typo\"\n").unwrap();
    match RunConfig::load(&path) {
        Err(Error::BadConfig(msg)) => assert!(msg.contains("data_dri"), "{msg}"),
        other => panic!("expected BadConfig, got {other:?}"),
    }
}

#[test]
fn malformed_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");

    fs::write(&path, "[stats]\nalpha = \"lots\"\n").unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::BadConfig(_))));

    fs::write(&path, "[stats]\nalpha = 1.5\n").unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::BadConfig(_))));

    fs::write(&path, "[cli]\nmetrics = [\"psi\"]\n").unwrap();
    match RunConfig::load(&path) {
        Err(Error::BadConfig(msg)) => assert!(msg.contains("psi"), "{msg}"),
        other => panic!("expected BadConfig, got {other:?}"),
    }

    fs::write(&path, "[cli]\nmetrics = []\n").unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::BadConfig(_))));
}

#[test]
fn missing_file_reports_the_path() {
    match RunConfig::load("no/such/config.toml".as_ref()) {
        Err(Error::Io { path, .. }) => assert!(path.contains("config.toml")),
        other => panic!("expected Io error, got {other:?}"),
    }
}
