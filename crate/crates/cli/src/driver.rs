//! Batch driver behind the command line: cohort generation, whole-dataset
//! analysis, and the hashed trees both of them leave on disk.
//!
//! A dataset tree holds one directory per subject, one subdirectory per
//! condition with the three recordings plus trial markers, the region map,
//! and a manifest. A result tree mirrors that layout with connectivity
//! matrices, adds group means under `group/` and test results under
//! `stats/`, and carries its own manifest. Manifests list every file with
//! a SHA-256 digest so downstream steps can refuse tampered or truncated
//! trees; nothing in a tree depends on wall-clock time or thread count,
//! so regenerating one with the same inputs reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neuroflux::dsp::{design_butterworth, FilterKind};
use neuroflux::ec::{self, MvarModel};
use neuroflux::error::{Error, Result};
use neuroflux::fc::{self, CorrelationPooling, WelchParams};
use neuroflux::io::{self, Event};
use neuroflux::pipeline;
use neuroflux::stats;
use neuroflux::synth::{self, ConditionRun, NeuroVascSpec};
use neuroflux::types::{
    Condition, ConnectivityMatrix, FusionLog, Metric, MultichannelSeries, PValueMatrix, RegionMap,
};

use crate::config::RunConfig;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const REGION_MAP_NAME: &str = "region_map.toml";

/// Inventory at the root of every tree the tool writes. `files` maps
/// tree-relative paths (forward slashes) to SHA-256 digests of their
/// contents; the manifest itself is not listed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<NeuroVascSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(default)]
    pub n_subjects: usize,
    #[serde(default)]
    pub conditions: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_effective: Option<f64>,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(tree: &Path) -> Result<Manifest> {
        let path = tree.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|_| {
            Error::IncompleteResults(format!("no manifest at {}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })
    }

    /// Re-hashes every listed file and reports the first mismatch.
    pub fn verify(&self, tree: &Path) -> Result<()> {
        for (rel, want) in &self.files {
            let path = tree.join(rel);
            let got = hash_file(&path).map_err(|_| {
                Error::IncompleteResults(format!("{rel} is listed in the manifest but unreadable"))
            })?;
            if got != *want {
                return Err(Error::IncompleteResults(format!(
                    "{rel} does not match its manifest digest"
                )));
            }
        }
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

/// Walks `root` and hashes every regular file, keyed by its relative path
/// with forward slashes. The top-level manifest is skipped.
pub fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    let mut stack: Vec<String> = vec![String::new()];
    while let Some(rel) = stack.pop() {
        let dir = if rel.is_empty() { root.to_path_buf() } else { root.join(&rel) };
        let entries = fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if rel.is_empty() && name == MANIFEST_NAME {
                continue;
            }
            let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
            let ftype = entry.file_type().map_err(|e| io_err(&entry.path(), e))?;
            if ftype.is_dir() {
                stack.push(child);
            } else {
                files.insert(child, hash_file(&entry.path())?);
            }
        }
    }
    Ok(files)
}

fn subject_dir_name(id: usize) -> String {
    format!("sub-{:02}", id + 1)
}

#[derive(Debug)]
pub struct SynthSummary {
    pub out_dir: PathBuf,
    pub n_subjects: usize,
    pub n_files: usize,
}

/// Simulates the configured cohort and writes it out as a dataset tree.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary> {
    let subjects = synth::simulate_neurovascular(&cfg.synth)?;
    create_dir(out)?;
    let map = cfg.synth.region_map();
    write_text(&out.join(REGION_MAP_NAME), &map.to_toml_string())?;
    for subject in &subjects {
        for run in &subject.runs {
            let dir = out
                .join(subject_dir_name(subject.id))
                .join(run.condition.to_string());
            create_dir(&dir)?;
            io::write_series(&dir.join("eeg"), &run.eeg, cfg.io.format)?;
            io::write_series(&dir.join("oxy"), &run.oxy, cfg.io.format)?;
            io::write_series(&dir.join("deoxy"), &run.deoxy, cfg.io.format)?;
            io::write_events(&dir.join("events.csv"), &run.events)?;
        }
    }
    let files = hash_tree(out)?;
    let manifest = Manifest {
        kind: "dataset".into(),
        seed: Some(cfg.synth.seed),
        synth: Some(cfg.synth.clone()),
        config: None,
        n_subjects: subjects.len(),
        conditions: condition_names(&subjects),
        metrics: Vec::new(),
        fs_effective: None,
        files,
    };
    write_json(&out.join(MANIFEST_NAME), &manifest)?;
    Ok(SynthSummary {
        out_dir: out.to_path_buf(),
        n_subjects: subjects.len(),
        n_files: manifest_file_count(out)?,
    })
}

fn condition_names(subjects: &[synth::SyntheticSubject]) -> Vec<String> {
    let mut names: Vec<String> = subjects
        .first()
        .map(|s| s.runs.iter().map(|r| r.condition.to_string()).collect())
        .unwrap_or_default();
    names.sort();
    names
}

fn manifest_file_count(out: &Path) -> Result<usize> {
    Ok(Manifest::load(out)?.files.len() + 1)
}

/// One condition's recordings, borrowed from wherever they live.
pub struct RunInput<'a> {
    pub condition: Condition,
    pub eeg: &'a MultichannelSeries,
    pub oxy: &'a MultichannelSeries,
    pub deoxy: &'a MultichannelSeries,
    pub events: &'a [Event],
}

impl<'a> RunInput<'a> {
    pub fn from_run(run: &'a ConditionRun) -> Self {
        RunInput {
            condition: run.condition,
            eeg: &run.eeg,
            oxy: &run.oxy,
            deoxy: &run.deoxy,
            events: &run.events,
        }
    }
}

/// Everything the analysis keeps from one condition of one subject.
pub struct RunOutput {
    pub condition: Condition,
    pub fs_effective: f64,
    pub matrices: Vec<ConnectivityMatrix>,
    pub model: Option<MvarModel>,
    pub log: FusionLog,
}

pub struct SubjectOutput {
    pub id: String,
    pub runs: Vec<RunOutput>,
}

fn preprocess_eeg(x: &MultichannelSeries, cfg: &RunConfig) -> Result<MultichannelSeries> {
    let [lo, hi] = cfg.dsp.eeg_bandpass_hz;
    if lo <= 0.0 && hi <= 0.0 {
        return Ok(x.clone());
    }
    let f = design_butterworth(FilterKind::Bandpass, cfg.dsp.eeg_filter_order, &[lo, hi], x.fs)?;
    pipeline::filter_channels(x, &f)
}

fn preprocess_fnirs(x: &MultichannelSeries, cfg: &RunConfig) -> Result<MultichannelSeries> {
    if cfg.dsp.fnirs_lowpass_hz <= 0.0 {
        return Ok(x.clone());
    }
    let f = design_butterworth(
        FilterKind::Lowpass,
        cfg.dsp.fnirs_filter_order,
        &[cfg.dsp.fnirs_lowpass_hz],
        x.fs,
    )?;
    pipeline::filter_channels(x, &f)
}

/// Runs the full single-condition chain: filter, epoch, region-average,
/// band tracks, fusion, then every requested connectivity metric.
pub fn analyze_run(input: &RunInput, map: &RegionMap, cfg: &RunConfig) -> Result<RunOutput> {
    if input.events.is_empty() {
        return Err(Error::BadConfig("run has no stimulus events".into()));
    }
    let eeg = preprocess_eeg(input.eeg, cfg)?;
    let oxy = preprocess_fnirs(input.oxy, cfg)?;
    let deoxy = preprocess_fnirs(input.deoxy, cfg)?;

    let eeg_epochs = pipeline::epoch(&eeg, input.events, cfg.pipeline.eeg_window)?;
    let fnirs_events = pipeline::retime_events(input.events, eeg.fs, oxy.fs)?;
    let oxy_epochs = pipeline::epoch(&oxy, &fnirs_events, cfg.pipeline.fnirs_window)?;
    let deoxy_epochs = pipeline::epoch(&deoxy, &fnirs_events, cfg.pipeline.fnirs_window)?;

    let eeg_regions = pipeline::region_average(&eeg_epochs, map)?;
    let oxy_regions = pipeline::region_average(&oxy_epochs, map)?;
    let deoxy_regions = pipeline::region_average(&deoxy_epochs, map)?;

    let eeg_track = pipeline::eeg_lowfreq_track(
        &eeg_regions,
        cfg.pipeline.eeg_track_hz,
        cfg.pipeline.track_fs,
        cfg.pipeline.eeg_level,
    )?;
    let oxy_track =
        pipeline::fnirs_lowfreq_track(&oxy_regions, cfg.pipeline.fnirs_track_hz, cfg.pipeline.fnirs_level)?;
    let deoxy_track =
        pipeline::fnirs_lowfreq_track(&deoxy_regions, cfg.pipeline.fnirs_track_hz, cfg.pipeline.fnirs_level)?;

    let fused = pipeline::fuse(&eeg_track, &oxy_track, &deoxy_track, cfg.pipeline.fused_len)?;

    let metrics = cfg.metrics()?;
    let needs_mvar = metrics.iter().any(|m| m.directed());
    let (model, spectral) = if needs_mvar {
        let order = match cfg.ec.order {
            Some(p) => p,
            None => ec::select_order(&fused, cfg.ec.max_order, cfg.ec.criterion)?,
        };
        let model = ec::fit_mvar(&fused, order)?;
        let spectral = ec::spectra(&model, cfg.ec.n_freqs, (0.0, fused.fs_effective / 2.0))?;
        (Some(model), Some(spectral))
    } else {
        (None, None)
    };
    let ec_band = (cfg.ec.band_hz[0], cfg.ec.band_hz[1]);

    let mut matrices = Vec::with_capacity(metrics.len());
    for metric in &metrics {
        let m = match metric {
            Metric::Pcc => {
                if cfg.fc.fisher_z {
                    fc::pcc_pooled(&fused, CorrelationPooling::FisherZ)?
                } else {
                    fc::pcc(&fused)?
                }
            }
            Metric::Plv => fc::plv(&fused)?,
            Metric::Msc => {
                let defaults = WelchParams::default_for(fused.n_samples());
                let welch = WelchParams {
                    seg_len: if cfg.fc.seg_len > 0 { cfg.fc.seg_len } else { defaults.seg_len },
                    overlap: if cfg.fc.overlap > 0 { cfg.fc.overlap } else { defaults.overlap },
                };
                let band = if cfg.fc.band_hz == [0.0, 0.0] {
                    fc::default_band(fused.fs_effective)
                } else {
                    (cfg.fc.band_hz[0], cfg.fc.band_hz[1])
                };
                fc::msc(&fused, &welch, band)?
            }
            Metric::Ddtf => ec::ddtf(spectral.as_ref().expect("mvar stage ran"), ec_band)?,
            Metric::Gpdc => ec::gpdc(
                spectral.as_ref().expect("mvar stage ran"),
                model.as_ref().expect("mvar stage ran"),
                ec_band,
            )?,
        };
        matrices.push(m);
    }

    Ok(RunOutput {
        condition: input.condition,
        fs_effective: fused.fs_effective,
        matrices,
        model,
        log: fused.log.clone(),
    })
}

fn in_context(subject: &str, condition: &str, e: Error) -> Error {
    Error::SubjectContext {
        subject: subject.to_string(),
        condition: condition.to_string(),
        source: Box::new(e),
    }
}

/// Analyzes every condition of an in-memory subject, runs sorted by
/// condition name.
pub fn analyze_subject(id: &str, runs: &[ConditionRun], map: &RegionMap, cfg: &RunConfig) -> Result<SubjectOutput> {
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by_key(|&i| runs[i].condition.to_string());
    let mut outputs = Vec::with_capacity(runs.len());
    for i in order {
        let run = &runs[i];
        let out = analyze_run(&RunInput::from_run(run), map, cfg)
            .map_err(|e| in_context(id, &run.condition.to_string(), e))?;
        outputs.push(out);
    }
    Ok(SubjectOutput { id: id.to_string(), runs: outputs })
}

fn list_subject_dirs(data_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(data_dir).map_err(|e| io_err(data_dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(data_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_dir = entry.file_type().map_err(|e| io_err(&entry.path(), e))?.is_dir();
        if is_dir && name.starts_with("sub-") {
            dirs.push((name, entry.path()));
        }
    }
    if dirs.is_empty() {
        return Err(Error::BadConfig(format!(
            "no sub-* directories under {}",
            data_dir.display()
        )));
    }
    dirs.sort_by(|a, b| {
        let num = |s: &str| s[4..].parse::<u64>().ok();
        num(&a.0).cmp(&num(&b.0)).then_with(|| a.0.cmp(&b.0))
    });
    Ok(dirs)
}

fn analyze_subject_dir(id: &str, dir: &Path, map: &RegionMap, cfg: &RunConfig) -> Result<SubjectOutput> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        if entry.file_type().map_err(|e| io_err(&entry.path(), e))?.is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let mut runs = Vec::new();
    for name in names {
        let condition = Condition::parse(&name).map_err(|e| in_context(id, &name, e))?;
        let run_dir = dir.join(&name);
        let out = (|| -> Result<RunOutput> {
            let eeg = io::read_series(&run_dir.join("eeg"))?;
            let oxy = io::read_series(&run_dir.join("oxy"))?;
            let deoxy = io::read_series(&run_dir.join("deoxy"))?;
            let events = io::read_events(&run_dir.join("events.csv"))?;
            let input = RunInput { condition, eeg: &eeg, oxy: &oxy, deoxy: &deoxy, events: &events };
            analyze_run(&input, map, cfg)
        })()
        .map_err(|e| in_context(id, &name, e))?;
        runs.push(out);
    }
    if runs.is_empty() {
        return Err(Error::BadConfig(format!("{id} has no condition directories")));
    }
    Ok(SubjectOutput { id: id.to_string(), runs })
}

/// Group means per condition plus the paired 3-back versus 0-back test
/// for every metric.
pub struct GroupStage {
    pub conditions: Vec<Condition>,
    pub means: Vec<(Condition, Vec<ConnectivityMatrix>)>,
    pub tests: Vec<PValueMatrix>,
    pub masks: Vec<(Metric, Array2<bool>)>,
}

pub fn group_stage(outputs: &[SubjectOutput], cfg: &RunConfig) -> Result<GroupStage> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::BadConfig("no subjects to analyze".into()))?;
    let conditions: Vec<Condition> = first.runs.iter().map(|r| r.condition).collect();
    for s in outputs {
        let got: Vec<Condition> = s.runs.iter().map(|r| r.condition).collect();
        if got != conditions {
            return Err(Error::BadConfig(format!(
                "{} has conditions {:?}, expected {:?}",
                s.id,
                got.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                conditions.iter().map(|c| c.to_string()).collect::<Vec<_>>()
            )));
        }
    }
    let metrics = cfg.metrics()?;

    let mut means = Vec::with_capacity(conditions.len());
    for (ci, &cond) in conditions.iter().enumerate() {
        let mut per_metric = Vec::with_capacity(metrics.len());
        for mi in 0..metrics.len() {
            let stack: Vec<ConnectivityMatrix> = outputs
                .iter()
                .map(|s| s.runs[ci].matrices[mi].clone())
                .collect();
            per_metric.push(ec::group_mean(&stack)?);
        }
        means.push((cond, per_metric));
    }

    let mut tests = Vec::new();
    let mut masks = Vec::new();
    let high = conditions.iter().position(|&c| c == Condition::NBack3);
    let low = conditions.iter().position(|&c| c == Condition::NBack0);
    if let (Some(hi), Some(lo)) = (high, low) {
        for (mi, &metric) in metrics.iter().enumerate() {
            let a: Vec<ConnectivityMatrix> =
                outputs.iter().map(|s| s.runs[hi].matrices[mi].clone()).collect();
            let b: Vec<ConnectivityMatrix> =
                outputs.iter().map(|s| s.runs[lo].matrices[mi].clone()).collect();
            let mut pm = stats::pairwise_matrix_test_with(&a, &b, cfg.stats.mode, cfg.stats.zeros)?;
            if cfg.stats.holm {
                pm = stats::holm_adjust(&pm);
            }
            let mask = stats::significance_mask(&pm, cfg.stats.alpha)?;
            tests.push(pm);
            masks.push((metric, mask));
        }
    }

    Ok(GroupStage { conditions, means, tests, masks })
}

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub n_subjects: usize,
    pub n_metrics: usize,
    pub n_files: usize,
    pub fs_effective: f64,
}

/// Analyzes a dataset tree into a result tree.
pub fn cmd_run(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<RunSummary> {
    let map_path = cfg.io.region_map_path();
    let map_text = fs::read_to_string(&map_path)
        .map_err(|_| Error::BadConfig(format!("no region map at {}", map_path.display())))?;
    let map = RegionMap::from_toml_str(&map_text)?;

    let subject_dirs = list_subject_dirs(data_dir)?;
    let outputs: Vec<SubjectOutput> = subject_dirs
        .par_iter()
        .map(|(id, dir)| analyze_subject_dir(id, dir, &map, cfg))
        .collect::<Result<Vec<_>>>()?;
    let group = group_stage(&outputs, cfg)?;
    write_run_tree(cfg, &outputs, &group, out)
}

/// Serializes analysis output as a result tree with a hashed manifest.
pub fn write_run_tree(
    cfg: &RunConfig,
    outputs: &[SubjectOutput],
    group: &GroupStage,
    out: &Path,
) -> Result<RunSummary> {
    create_dir(out)?;
    for subject in outputs {
        for run in &subject.runs {
            let dir = out
                .join("subjects")
                .join(&subject.id)
                .join(run.condition.to_string());
            create_dir(&dir)?;
            for m in &run.matrices {
                io::write_matrix(&dir.join(m.metric.stem()), m)?;
            }
            if let Some(model) = &run.model {
                write_json(&dir.join("mvar.json"), model)?;
            }
            write_json(&dir.join("fusion.json"), &run.log)?;
        }
    }
    for (cond, per_metric) in &group.means {
        let dir = out.join("group").join(cond.to_string());
        create_dir(&dir)?;
        for m in per_metric {
            io::write_matrix(&dir.join(m.metric.stem()), m)?;
        }
    }
    if !group.tests.is_empty() {
        let dir = out.join("stats");
        create_dir(&dir)?;
        for pm in &group.tests {
            let stem = pm.metric.stem();
            let csv = grid_csv(&pm.labels, |i, j| io::fmt_f64(pm.p[[i, j]]));
            write_text(&dir.join(format!("{stem}_p.csv")), &csv)?;
            write_json(&dir.join(format!("{stem}_p.json")), pm)?;
        }
        for (metric, mask) in &group.masks {
            let labels = &group.tests[0].labels;
            let csv = grid_csv(labels, |i, j| if mask[[i, j]] { "1".into() } else { "0".into() });
            write_text(&dir.join(format!("{}_mask.csv", metric.stem())), &csv)?;
        }
    }

    let fs_effective = outputs[0].runs[0].fs_effective;
    let files = hash_tree(out)?;
    let n_files = files.len() + 1;
    let manifest = Manifest {
        kind: "run".into(),
        seed: None,
        synth: None,
        config: Some(cfg.clone()),
        n_subjects: outputs.len(),
        conditions: group.conditions.iter().map(|c| c.to_string()).collect(),
        metrics: cfg.metrics()?.iter().map(|m| m.stem().to_string()).collect(),
        fs_effective: Some(fs_effective),
        files,
    };
    write_json(&out.join(MANIFEST_NAME), &manifest)?;
    Ok(RunSummary {
        out_dir: out.to_path_buf(),
        n_subjects: outputs.len(),
        n_metrics: cfg.metrics()?.len(),
        n_files,
        fs_effective,
    })
}

/// Square CSV grid in the same shape the matrix writer uses: a header of
/// labels, then one labeled row per region.
pub fn grid_csv(labels: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let mut text = String::from("region");
    for l in labels {
        text.push(',');
        text.push_str(l);
    }
    text.push('\n');
    for i in 0..labels.len() {
        text.push_str(&labels[i]);
        for j in 0..labels.len() {
            text.push(',');
            text.push_str(&cell(i, j));
        }
        text.push('\n');
    }
    text
}
