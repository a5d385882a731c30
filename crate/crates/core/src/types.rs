//! Shared data model: time series containers, epoch collections, region
//! maps, and connectivity matrices.
//!
//! Connectivity matrices follow a source-in-columns convention:
//! `values[[i, j]]` is the influence of source region `j` on sink region
//! `i`. Undirected metrics are stored symmetrically in the same layout.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Recording modality of a channel or region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "OXY")]
    Oxy,
    #[serde(rename = "DEOXY")]
    Deoxy,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Eeg => "EEG",
            Modality::Oxy => "OXY",
            Modality::Deoxy => "DEOXY",
        })
    }
}

/// Workload condition of an n-back block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "0back")]
    NBack0,
    #[serde(rename = "2back")]
    NBack2,
    #[serde(rename = "3back")]
    NBack3,
}

impl Condition {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "0back" => Ok(Condition::NBack0),
            "2back" => Ok(Condition::NBack2),
            "3back" => Ok(Condition::NBack3),
            other => Err(Error::BadConfig(format!("unknown condition {other:?}"))),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::NBack0 => "0back",
            Condition::NBack2 => "2back",
            Condition::NBack3 => "3back",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StimulusClass {
    #[serde(rename = "target")]
    Target,
    #[serde(rename = "nontarget")]
    NonTarget,
}

impl StimulusClass {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(StimulusClass::Target),
            "nontarget" => Ok(StimulusClass::NonTarget),
            other => Err(Error::BadConfig(format!("unknown stimulus class {other:?}"))),
        }
    }
}

impl fmt::Display for StimulusClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StimulusClass::Target => "target",
            StimulusClass::NonTarget => "nontarget",
        })
    }
}

/// Connectivity metric identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "PCC")]
    Pcc,
    #[serde(rename = "PLV")]
    Plv,
    #[serde(rename = "MSC")]
    Msc,
    #[serde(rename = "DDTF")]
    Ddtf,
    #[serde(rename = "GPDC")]
    Gpdc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Pcc,
        Metric::Plv,
        Metric::Msc,
        Metric::Ddtf,
        Metric::Gpdc,
    ];

    pub fn directed(self) -> bool {
        matches!(self, Metric::Ddtf | Metric::Gpdc)
    }

    /// Admissible value range, used by constructors for validation.
    pub fn value_range(self) -> (f64, f64) {
        match self {
            Metric::Pcc => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// Lowercase stem used in file names.
    pub fn stem(self) -> &'static str {
        match self {
            Metric::Pcc => "pcc",
            Metric::Plv => "plv",
            Metric::Msc => "msc",
            Metric::Ddtf => "ddtf",
            Metric::Gpdc => "gpdc",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Pcc => "PCC",
            Metric::Plv => "PLV",
            Metric::Msc => "MSC",
            Metric::Ddtf => "DDTF",
            Metric::Gpdc => "GPDC",
        })
    }
}

/// Single uniformly sampled channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    /// Sampling rate in Hz, strictly positive.
    pub fs: f64,
    pub unit: String,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64, unit: impl Into<String>) -> Self {
        TimeSeries {
            samples,
            fs,
            unit: unit.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::NonPositiveRate(self.fs));
        }
        for (i, v) in self.samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    channel: 0,
                    index: i,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    pub modality: Modality,
}

impl ChannelMeta {
    pub fn new(name: impl Into<String>, modality: Modality) -> Self {
        ChannelMeta {
            name: name.into(),
            modality,
        }
    }
}

/// Multichannel recording, `data` laid out channel by sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelSeries {
    pub channels: Vec<ChannelMeta>,
    pub data: Array2<f64>,
    pub fs: f64,
    pub unit: String,
}

impl MultichannelSeries {
    pub fn new(
        channels: Vec<ChannelMeta>,
        data: Array2<f64>,
        fs: f64,
        unit: impl Into<String>,
    ) -> Self {
        MultichannelSeries {
            channels,
            data,
            fs,
            unit: unit.into(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::NonPositiveRate(self.fs));
        }
        if self.channels.len() != self.data.nrows() {
            return Err(Error::LengthMismatch {
                expected: self.channels.len(),
                got: self.data.nrows(),
                context: "channel metadata vs data rows".into(),
            });
        }
        for i in 0..self.channels.len() {
            for j in i + 1..self.channels.len() {
                if self.channels[i].name == self.channels[j].name {
                    return Err(Error::DuplicateChannel(self.channels[i].name.clone()));
                }
            }
        }
        for (ch, row) in self.data.rows().into_iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        channel: ch,
                        index: i,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Stimulus-locked extraction window in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub pre_s: f64,
    pub post_s: f64,
}

impl EpochWindow {
    pub fn new(pre_s: f64, post_s: f64) -> Self {
        EpochWindow { pre_s, post_s }
    }

    /// Sample counts at rate `fs`: pre-stimulus, post-stimulus, and total.
    /// The total includes the stimulus sample itself.
    pub fn samples_at(&self, fs: f64) -> (usize, usize, usize) {
        let pre = (self.pre_s * fs).floor() as usize;
        let post = (self.post_s * fs).floor() as usize;
        (pre, post, pre + post + 1)
    }

    pub fn span_s(&self) -> f64 {
        self.pre_s + self.post_s
    }
}

/// Collection of stimulus-locked epochs, `data` laid out
/// epoch by channel by sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSet {
    pub data: Array3<f64>,
    pub channels: Vec<ChannelMeta>,
    pub fs: f64,
    pub condition: Condition,
    /// `None` when epochs pool target and non-target stimuli.
    pub stimulus_class: Option<StimulusClass>,
    pub window: EpochWindow,
}

impl EpochSet {
    pub fn n_epochs(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::NonPositiveRate(self.fs));
        }
        if self.channels.len() != self.n_channels() {
            return Err(Error::LengthMismatch {
                expected: self.channels.len(),
                got: self.n_channels(),
                context: "channel metadata vs epoch data".into(),
            });
        }
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                let per_epoch = self.n_channels() * self.n_samples();
                return Err(Error::NonFinite {
                    channel: (i % per_epoch) / self.n_samples(),
                    index: i % self.n_samples(),
                });
            }
        }
        Ok(())
    }
}

/// One named region: an ordered set of raw channels of a single modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub modality: Modality,
    pub channels: Vec<String>,
}

/// Fixed 25-region layout: R1..R9 EEG, R10..R17 OXY, R18..R25 DEOXY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub regions: Vec<Region>,
}

pub const N_REGIONS: usize = 25;
pub const N_EEG_REGIONS: usize = 9;
pub const N_OXY_REGIONS: usize = 8;
pub const N_DEOXY_REGIONS: usize = 8;

impl RegionMap {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let map = RegionMap { regions };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != N_REGIONS {
            return Err(Error::BadRegionMap(format!(
                "expected {N_REGIONS} regions, got {}",
                self.regions.len()
            )));
        }
        for (i, r) in self.regions.iter().enumerate() {
            let want = format!("R{}", i + 1);
            if r.id != want {
                return Err(Error::BadRegionMap(format!(
                    "region {i} must be named {want}, got {}",
                    r.id
                )));
            }
            let want_mod = if i < N_EEG_REGIONS {
                Modality::Eeg
            } else if i < N_EEG_REGIONS + N_OXY_REGIONS {
                Modality::Oxy
            } else {
                Modality::Deoxy
            };
            if r.modality != want_mod {
                return Err(Error::BadRegionMap(format!(
                    "region {} must be {want_mod}, got {}",
                    r.id, r.modality
                )));
            }
            if r.channels.is_empty() {
                return Err(Error::BadRegionMap(format!("region {} is empty", r.id)));
            }
        }
        for m in [Modality::Eeg, Modality::Oxy, Modality::Deoxy] {
            let mut seen = Vec::new();
            for r in self.regions.iter().filter(|r| r.modality == m) {
                for ch in &r.channels {
                    if seen.contains(&ch) {
                        return Err(Error::BadRegionMap(format!(
                            "channel {ch} assigned to more than one {m} region"
                        )));
                    }
                    seen.push(ch);
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.id.clone()).collect()
    }

    pub fn of_modality(&self, m: Modality) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.modality == m)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            region: Vec<Region>,
        }
        let f: File =
            toml::from_str(s).map_err(|e| Error::BadConfig(format!("region map: {e}")))?;
        RegionMap::new(f.region)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for r in &self.regions {
            out.push_str("[[region]]\n");
            out.push_str(&format!("id = {:?}\n", r.id));
            out.push_str(&format!("modality = \"{}\"\n", r.modality));
            let chs: Vec<String> = r.channels.iter().map(|c| format!("{c:?}")).collect();
            out.push_str(&format!("channels = [{}]\n\n", chs.join(", ")));
        }
        out
    }

    /// Built-in map for the bundled 30-channel EEG montage and a 36-channel
    /// optode layout shared by both haemoglobin series.
    pub fn default_map() -> Self {
        RegionMap::from_toml_str(include_str!("../data/region_map_default.toml"))
            .expect("bundled region map is valid")
    }
}

/// Square connectivity matrix over named regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    pub metric: Metric,
    pub labels: Vec<String>,
    /// `values[[i, j]]`: influence of source region `j` on sink region `i`.
    pub values: Array2<f64>,
    pub directed: bool,
}

impl ConnectivityMatrix {
    pub fn new(metric: Metric, labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: values.nrows(),
                context: format!("{metric} matrix shape"),
            });
        }
        let (lo, hi) = metric.value_range();
        let tol = 1e-9;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    channel: i / values.ncols(),
                    index: i % values.ncols(),
                });
            }
            if *v < lo - tol || *v > hi + tol {
                return Err(Error::BadConfig(format!(
                    "{metric} value {v} outside [{lo}, {hi}]"
                )));
            }
        }
        if !metric.directed() {
            for i in 0..values.nrows() {
                for j in 0..i {
                    if (values[[i, j]] - values[[j, i]]).abs() > tol {
                        return Err(Error::BadConfig(format!(
                            "{metric} matrix must be symmetric, differs at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(ConnectivityMatrix {
            directed: metric.directed(),
            metric,
            labels,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Paired-test results over every region pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueMatrix {
    pub metric: Metric,
    pub labels: Vec<String>,
    pub p: Array2<f64>,
    /// Signed-rank statistic (sum of positive ranks) per cell.
    pub statistic: Array2<f64>,
    /// Number of non-zero paired differences per cell.
    pub n_effective: Array2<u32>,
    /// Cells whose paired differences were all zero; their p is 1.
    pub degenerate: Array2<bool>,
}

impl PValueMatrix {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }
}

/// Per-run record of epochs dropped before fusion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionLog {
    pub n_epochs_in: usize,
    pub excluded_epochs: Vec<usize>,
    pub degenerate_eeg: usize,
    pub degenerate_oxy: usize,
    pub degenerate_deoxy: usize,
}

/// Fused low-frequency envelope set: epoch by region (25) by sample (L),
/// each channel z-scored within its epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEpochSet {
    pub data: Array3<f64>,
    pub labels: Vec<String>,
    pub fs_effective: f64,
    pub condition: Condition,
    pub log: FusionLog,
}

impl FusedEpochSet {
    pub fn n_epochs(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_regions(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.data.shape()[2]
    }
}
