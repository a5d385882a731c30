//! Lifecycle tests over real directory trees: generate a small cohort,
//! analyze it, verify the manifests, render reports, and make sure every
//! stage refuses inconsistent input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use neuroflux::error::Error;
use neuroflux::io;
use neuroflux::types::{EpochWindow, Metric};
use neuroflux_cli::config::RunConfig;
use neuroflux_cli::driver::{self, Manifest};
use neuroflux_cli::report;

fn tiny_config(data: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.io.data_dir = data.to_path_buf();
    cfg.io.out_dir = out.to_path_buf();
    cfg.dsp.eeg_bandpass_hz = [1.0, 30.0];
    cfg.pipeline.eeg_window = EpochWindow::new(0.5, 8.0);
    cfg.pipeline.fnirs_window = EpochWindow::new(2.0, 12.0);
    cfg.pipeline.fused_len = 128;
    cfg.ec.order = Some(2);
    cfg.ec.n_freqs = 16;
    cfg.synth.n_subjects = 3;
    cfg.synth.fs_eeg = 100.0;
    cfg.synth.n_trials = 6;
    cfg.synth.iti_s = 6.0;
    cfg.synth.lead_in_s = 6.0;
    cfg.synth.tail_s = 16.0;
    cfg.synth.seed = 7;
    cfg.validate().unwrap();
    cfg
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in fs::read_dir(root.join(&rel)).unwrap() {
            let entry = entry.unwrap();
            let child = rel.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                stack.push(child);
            } else {
                let bytes = fs::read(entry.path()).unwrap();
                files.insert(child.to_string_lossy().into_owned(), bytes);
            }
        }
    }
    files
}

#[test]
fn synth_writes_a_complete_dataset_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = tiny_config(&data, &tmp.path().join("out"));

    let summary = driver::cmd_synth(&cfg, &data).unwrap();
    assert_eq!(summary.n_subjects, 3);

    assert!(data.join("region_map.toml").is_file());
    assert!(data.join("manifest.json").is_file());
    for sub in ["sub-01", "sub-02", "sub-03"] {
        for cond in ["0back", "3back"] {
            let dir = data.join(sub).join(cond);
            for name in ["eeg.csv", "eeg.json", "oxy.csv", "oxy.json", "deoxy.csv", "deoxy.json", "events.csv"] {
                assert!(dir.join(name).is_file(), "missing {sub}/{cond}/{name}");
            }
        }
    }

    let manifest = Manifest::load(&data).unwrap();
    assert_eq!(manifest.kind, "dataset");
    assert_eq!(manifest.seed, Some(7));
    assert_eq!(manifest.conditions, vec!["0back", "3back"]);
    // every file on disk except the manifest itself is inventoried
    assert_eq!(manifest.files.len(), tree_bytes(&data).len() - 1);
    manifest.verify(&data).unwrap();

    // a readable series comes back with the expected shape
    let eeg = io::read_series(&data.join("sub-01/0back/eeg")).unwrap();
    assert_eq!(eeg.n_channels(), 9);
    assert_eq!(eeg.fs, 100.0);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("unused"), &tmp.path().join("out"));

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    driver::cmd_synth(&cfg, &a).unwrap();
    driver::cmd_synth(&cfg, &b).unwrap();
    assert_eq!(tree_bytes(&a), tree_bytes(&b));

    let mut other = cfg.clone();
    other.synth.seed = 8;
    let c = tmp.path().join("c");
    driver::cmd_synth(&other, &c).unwrap();
    assert_ne!(
        tree_bytes(&a).get("sub-01/0back/eeg.csv"),
        tree_bytes(&c).get("sub-01/0back/eeg.csv")
    );
}

#[test]
fn run_builds_matrices_group_means_and_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();

    let summary = driver::cmd_run(&cfg, &data, &out).unwrap();
    assert_eq!(summary.n_subjects, 3);
    assert_eq!(summary.n_metrics, 5);
    assert!(summary.fs_effective > 0.0);

    let stems = ["pcc", "plv", "msc", "ddtf", "gpdc"];
    for sub in ["sub-01", "sub-02", "sub-03"] {
        for cond in ["0back", "3back"] {
            let dir = out.join("subjects").join(sub).join(cond);
            for stem in stems {
                assert!(dir.join(format!("{stem}.csv")).is_file());
                assert!(dir.join(format!("{stem}.json")).is_file());
            }
            assert!(dir.join("mvar.json").is_file());
            assert!(dir.join("fusion.json").is_file());
        }
    }
    for cond in ["0back", "3back"] {
        for stem in stems {
            assert!(out.join("group").join(cond).join(format!("{stem}.csv")).is_file());
        }
    }
    for stem in stems {
        assert!(out.join("stats").join(format!("{stem}_p.csv")).is_file());
        assert!(out.join("stats").join(format!("{stem}_p.json")).is_file());
        assert!(out.join("stats").join(format!("{stem}_mask.csv")).is_file());
    }

    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest.kind, "run");
    assert_eq!(manifest.metrics, stems);
    manifest.verify(&out).unwrap();

    let pcc = io::read_matrix(&out.join("subjects/sub-01/0back/pcc")).unwrap();
    assert_eq!(pcc.metric, Metric::Pcc);
    assert_eq!(pcc.labels.len(), 25);
    assert_eq!(pcc.labels[0], "R1");
    assert_eq!(pcc.labels[24], "R25");
    assert!(!pcc.directed);

    let text = fs::read_to_string(out.join("stats/gpdc_p.json")).unwrap();
    let pm: neuroflux::types::PValueMatrix = serde_json::from_str(&text).unwrap();
    assert_eq!(pm.metric, Metric::Gpdc);
    assert_eq!(pm.labels.len(), 25);
    for i in 0..25 {
        for j in 0..25 {
            let p = pm.p[[i, j]];
            assert!((0.0..=1.0).contains(&p), "p[{i},{j}] = {p}");
        }
    }
}

#[test]
fn rerunning_an_analysis_reproduces_every_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = tiny_config(&data, &tmp.path().join("unused"));
    driver::cmd_synth(&cfg, &data).unwrap();

    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");
    driver::cmd_run(&cfg, &data, &out1).unwrap();
    driver::cmd_run(&cfg, &data, &out2).unwrap();
    assert_eq!(tree_bytes(&out1), tree_bytes(&out2));
}

#[test]
fn report_renders_one_image_per_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();
    driver::cmd_run(&cfg, &data, &out).unwrap();

    let manifest = Manifest::load(&out).unwrap();
    let n_grids = manifest.files.keys().filter(|k| k.ends_with(".csv")).count();
    let summary = report::cmd_report(&out).unwrap();
    assert_eq!(summary.n_images, n_grids);
    assert!(out.join("subjects/sub-01/0back/pcc.svg").is_file());
    assert!(out.join("group/3back/gpdc.svg").is_file());
    assert!(out.join("stats/gpdc_p.svg").is_file());
    assert!(out.join("stats/gpdc_mask.svg").is_file());

    let svg = fs::read_to_string(out.join("group/3back/gpdc.svg")).unwrap();
    assert!(svg.starts_with("<svg "));
    assert!(svg.contains("R25"));
    assert!(svg.trim_end().ends_with("</svg>"));

    // rendering is idempotent
    let before = tree_bytes(&out);
    report::cmd_report(&out).unwrap();
    assert_eq!(before, tree_bytes(&out));
}

#[test]
fn report_refuses_a_tampered_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();
    driver::cmd_run(&cfg, &data, &out).unwrap();

    let victim = out.join("subjects/sub-02/3back/plv.csv");
    let mut text = fs::read_to_string(&victim).unwrap();
    text.push_str("tail\n");
    fs::write(&victim, text).unwrap();

    match report::cmd_report(&out) {
        Err(Error::IncompleteResults(msg)) => assert!(msg.contains("plv.csv"), "{msg}"),
        other => panic!("expected IncompleteResults, got {other:?}"),
    }
}

#[test]
fn report_rejects_a_dataset_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let cfg = tiny_config(&data, &tmp.path().join("out"));
    driver::cmd_synth(&cfg, &data).unwrap();
    match report::cmd_report(&data) {
        Err(Error::IncompleteResults(msg)) => assert!(msg.contains("dataset"), "{msg}"),
        other => panic!("expected IncompleteResults, got {other:?}"),
    }
}

#[test]
fn run_requires_region_map_and_subjects() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();

    fs::remove_file(data.join("region_map.toml")).unwrap();
    match driver::cmd_run(&cfg, &data, &out) {
        Err(Error::BadConfig(msg)) => assert!(msg.contains("region map"), "{msg}"),
        other => panic!("expected BadConfig, got {other:?}"),
    }
}

#[test]
fn run_rejects_subjects_with_mismatched_conditions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();

    fs::remove_dir_all(data.join("sub-02").join("3back")).unwrap();
    match driver::cmd_run(&cfg, &data, &out) {
        Err(Error::BadConfig(msg)) => assert!(msg.contains("sub-02"), "{msg}"),
        other => panic!("expected BadConfig, got {other:?}"),
    }
}

#[test]
fn subject_errors_carry_their_context() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let cfg = tiny_config(&data, &out);
    driver::cmd_synth(&cfg, &data).unwrap();

    fs::remove_file(data.join("sub-03/0back/events.csv")).unwrap();
    match driver::cmd_run(&cfg, &data, &out) {
        Err(Error::SubjectContext { subject, condition, .. }) => {
            assert_eq!(subject, "sub-03");
            assert_eq!(condition, "0back");
        }
        other => panic!("expected SubjectContext, got {other:?}"),
    }
}
