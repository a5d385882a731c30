//! Run configuration, one TOML section per pipeline stage.
//!
//! Every field has a default, so an empty file (or no file at all) is a
//! complete configuration describing the standard synthetic cohort
//! analysis. Unknown keys are rejected to catch typos early.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neuroflux::ec::OrderCriterion;
use neuroflux::error::{Error, Result};
use neuroflux::io::DataFormat;
use neuroflux::stats::{TestMode, ZeroPolicy};
use neuroflux::synth::NeuroVascSpec;
use neuroflux::types::{EpochWindow, Metric};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub io: IoSection,
    pub dsp: DspSection,
    pub pipeline: PipelineSection,
    pub fc: FcSection,
    pub ec: EcSection,
    pub stats: StatsSection,
    pub synth: NeuroVascSpec,
    pub cli: CliSection,
}

/// Dataset and result locations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Storage format for synthetic series.
    pub format: DataFormat,
    /// Region definition file; defaults to `<data_dir>/region_map.toml`.
    pub region_map: Option<PathBuf>,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("results"),
            format: DataFormat::Csv,
            region_map: None,
        }
    }
}

impl IoSection {
    pub fn region_map_path(&self) -> PathBuf {
        self.region_map
            .clone()
            .unwrap_or_else(|| self.data_dir.join("region_map.toml"))
    }
}

/// Per-modality filtering ahead of epoching. A zero cutoff disables the
/// corresponding filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspSection {
    pub eeg_bandpass_hz: [f64; 2],
    pub eeg_filter_order: usize,
    /// Off by default: the hemodynamic band of interest sits above this
    /// cutoff once the wavelet track is taken, so the classic 0.2 Hz
    /// smoothing is opt-in.
    pub fnirs_lowpass_hz: f64,
    pub fnirs_filter_order: usize,
}

impl Default for DspSection {
    fn default() -> Self {
        DspSection {
            eeg_bandpass_hz: [1.0, 40.0],
            eeg_filter_order: 4,
            fnirs_lowpass_hz: 0.0,
            fnirs_filter_order: 4,
        }
    }
}

/// Epoching, wavelet tracks, and fusion geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub eeg_window: EpochWindow,
    pub fnirs_window: EpochWindow,
    /// Center frequency of the EEG wavelet band.
    pub eeg_track_hz: f64,
    /// Center frequency of the hemodynamic wavelet band.
    pub fnirs_track_hz: f64,
    /// Rate the EEG envelope is brought down to.
    pub track_fs: f64,
    /// Explicit wavelet level overrides; `None` derives the level from
    /// the center frequency.
    pub eeg_level: Option<usize>,
    pub fnirs_level: Option<usize>,
    /// Common per-epoch length after fusion.
    pub fused_len: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            eeg_window: EpochWindow::new(0.5, 10.0),
            fnirs_window: EpochWindow::new(5.0, 30.0),
            eeg_track_hz: 10.0,
            fnirs_track_hz: 1.0,
            track_fs: 10.0,
            eeg_level: None,
            fnirs_level: None,
            fused_len: 256,
        }
    }
}

/// Functional-connectivity knobs. Zeroed fields fall back to
/// length-derived defaults at run time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcSection {
    /// Welch segment length; 0 means a quarter of the fused epoch.
    pub seg_len: usize,
    /// Welch overlap; 0 means half a segment.
    pub overlap: usize,
    /// Coherence band in Hz; [0, 0] derives it from the effective rate.
    pub band_hz: [f64; 2],
    /// Average correlations through Fisher z instead of arithmetically.
    pub fisher_z: bool,
}

impl Default for FcSection {
    fn default() -> Self {
        FcSection {
            seg_len: 0,
            overlap: 0,
            band_hz: [0.0, 0.0],
            fisher_z: false,
        }
    }
}

/// MVAR model and spectral-factorization knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcSection {
    /// Fixed model order; `None` selects one by criterion.
    pub order: Option<usize>,
    pub max_order: usize,
    pub criterion: OrderCriterion,
    /// Frequency-grid resolution from 0 to Nyquist.
    pub n_freqs: usize,
    /// Band averaged into the scalar coupling values, in Hz.
    pub band_hz: [f64; 2],
}

impl Default for EcSection {
    fn default() -> Self {
        EcSection {
            order: None,
            max_order: 12,
            criterion: OrderCriterion::Sbc,
            n_freqs: 64,
            band_hz: [0.01, 1.0],
        }
    }
}

/// Condition-comparison statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub mode: TestMode,
    pub zeros: ZeroPolicy,
    pub alpha: f64,
    /// Apply the step-down Holm adjustment before masking.
    pub holm: bool,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            mode: TestMode::Auto,
            zeros: ZeroPolicy::Discard,
            alpha: 0.05,
            holm: false,
        }
    }
}

/// Driver-level selections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliSection {
    /// Metric stems to compute; order and duplicates are ignored.
    pub metrics: Vec<String>,
}

impl Default for CliSection {
    fn default() -> Self {
        CliSection {
            metrics: Metric::ALL.iter().map(|m| m.stem().to_string()).collect(),
        }
    }
}

impl RunConfig {
    /// Reads and validates a TOML config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
            Error::BadConfig(format!("{}: {}", path.display(), e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.fused_len < 2 {
            return Err(Error::BadConfig(format!(
                "pipeline.fused_len must be at least 2, got {}",
                self.pipeline.fused_len
            )));
        }
        for (name, v) in [
            ("pipeline.eeg_track_hz", self.pipeline.eeg_track_hz),
            ("pipeline.fnirs_track_hz", self.pipeline.fnirs_track_hz),
            ("pipeline.track_fs", self.pipeline.track_fs),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.ec.order == Some(0) || self.ec.max_order == 0 {
            return Err(Error::BadConfig("ec model order must be at least 1".into()));
        }
        if self.ec.n_freqs < 2 {
            return Err(Error::BadConfig(format!(
                "ec.n_freqs must be at least 2, got {}",
                self.ec.n_freqs
            )));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(Error::BadConfig(format!(
                "stats.alpha must lie strictly between 0 and 1, got {}",
                self.stats.alpha
            )));
        }
        self.metrics()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Selected metrics in canonical order.
    pub fn metrics(&self) -> Result<Vec<Metric>> {
        if self.cli.metrics.is_empty() {
            return Err(Error::BadConfig("cli.metrics selects nothing".into()));
        }
        let mut picked = Vec::new();
        for name in &self.cli.metrics {
            let m = Metric::ALL
                .iter()
                .find(|m| m.stem() == name.to_lowercase())
                .ok_or_else(|| Error::BadConfig(format!("unknown metric {name:?}")))?;
            if !picked.contains(m) {
                picked.push(*m);
            }
        }
        picked.sort_by_key(|m| Metric::ALL.iter().position(|a| a == m));
        Ok(picked)
    }
}
