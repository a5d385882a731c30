//! Ground-truth signal generators.
//!
//! `simulate_var` drives the estimator tests with processes whose
//! directed structure is known exactly. `simulate_neurovascular` builds a
//! toy multimodal dataset in which band-limited oscillations drive
//! delayed haemodynamic responses, so the true coupling direction is
//! fixed by construction.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use rayon::prelude::*;

use crate::dsp::{design_butterworth, FilterKind};
use crate::ec::companion_radius;
use crate::error::{Error, Result};
use crate::io::Event;
use crate::pipeline::{epoch, retime_events};
use crate::types::{
    ChannelMeta, Condition, EpochSet, EpochWindow, Modality, MultichannelSeries, Region, RegionMap,
    StimulusClass, N_DEOXY_REGIONS, N_EEG_REGIONS, N_OXY_REGIONS,
};

/// Samples discarded before the recorded stretch of a VAR simulation.
pub const VAR_BURN_IN: usize = 1000;

/// Shape exponents of the two gamma lobes of the haemodynamic kernel.
const HRF_SHAPE_MAIN: f64 = 6.0;
const HRF_SHAPE_UNDERSHOOT: f64 = 12.0;

/// Vector autoregression with known coefficients.
#[derive(Debug, Clone)]
pub struct VarSpec {
    /// `a[k]` multiplies `x(t-k-1)`.
    pub a: Vec<Array2<f64>>,
    pub sigma: Array2<f64>,
    pub fs: f64,
    pub seed: u64,
}

impl VarSpec {
    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::BadConfig("need at least one coefficient matrix".into()));
        }
        let n = self.n();
        if self.sigma.ncols() != n {
            return Err(Error::BadConfig("sigma must be square".into()));
        }
        for ak in &self.a {
            if ak.nrows() != n || ak.ncols() != n {
                return Err(Error::BadConfig(format!(
                    "coefficient matrices must be {n}x{n}"
                )));
            }
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::NonPositiveRate(self.fs));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.sigma[[i, j]] - self.sigma[[j, i]]).abs() > 1e-10 {
                    return Err(Error::BadConfig("sigma must be symmetric".into()));
                }
            }
        }
        if sigma_cholesky(&self.sigma).is_none() {
            return Err(Error::BadConfig("sigma must be positive definite".into()));
        }
        let radius = companion_radius(&self.a);
        if radius >= 1.0 {
            return Err(Error::UnstableSpec(radius));
        }
        Ok(())
    }
}

fn sigma_cholesky(sigma: &Array2<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = sigma.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| sigma[[i, j]]);
    m.cholesky()
}

/// Simulates `x(t) = sum_k A_k x(t-k) + w(t)` with Gaussian innovations.
///
/// The first [`VAR_BURN_IN`] samples are discarded so the recorded
/// stretch starts in the stationary regime. Output is bit-identical for
/// a fixed seed.
pub fn simulate_var(spec: &VarSpec, n_samples: usize) -> Result<MultichannelSeries> {
    spec.validate()?;
    let n = spec.n();
    let p = spec.p();
    if n_samples < 10 * p {
        return Err(Error::TooShort {
            got: n_samples,
            min: 10 * p,
        });
    }
    let l = sigma_cholesky(&spec.sigma).expect("validated above").unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = n_samples + VAR_BURN_IN;
    let mut x = Array2::<f64>::zeros((n, total));
    let mut z = nalgebra::DVector::<f64>::zeros(n);
    for t in 0..total {
        for i in 0..n {
            z[i] = rng.sample(StandardNormal);
        }
        let w = &l * &z;
        for i in 0..n {
            let mut v = w[i];
            for (lag, ak) in spec.a.iter().enumerate() {
                if t > lag {
                    for j in 0..n {
                        v += ak[[i, j]] * x[[j, t - lag - 1]];
                    }
                }
            }
            x[[i, t]] = v;
        }
    }
    let channels = (1..=n)
        .map(|i| ChannelMeta::new(format!("x{i}"), Modality::Eeg))
        .collect();
    let data = x.slice(ndarray::s![.., VAR_BURN_IN..]).to_owned();
    Ok(MultichannelSeries::new(channels, data, spec.fs, "au"))
}

/// Haemodynamic impulse response: a gamma-shaped main lobe peaking at
/// `peak_s` minus a scaled, slower lobe peaking at `undershoot_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrfParams {
    pub peak_s: f64,
    pub undershoot_s: f64,
    pub ratio: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        HrfParams {
            peak_s: 6.0,
            undershoot_s: 16.0,
            ratio: 1.0 / 6.0,
        }
    }
}

/// Sampled kernel, normalized to unit peak. Covers two undershoot
/// periods, after which both lobes have decayed to well under 1%.
pub fn hrf_kernel(h: &HrfParams, fs: f64) -> Vec<f64> {
    let len = (2.0 * h.undershoot_s * fs).ceil() as usize + 1;
    let lobe = |t: f64, peak: f64, shape: f64| -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (t / peak).powf(shape) * (shape * (1.0 - t / peak)).exp()
        }
    };
    let mut k: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            lobe(t, h.peak_s, HRF_SHAPE_MAIN) - h.ratio * lobe(t, h.undershoot_s, HRF_SHAPE_UNDERSHOOT)
        })
        .collect();
    let max = k.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut k {
            *v /= max;
        }
    }
    k
}

/// Configuration of the toy neurovascular dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuroVascSpec {
    pub n_subjects: usize,
    /// Raw channels generated per analysis region.
    pub channels_per_region: usize,
    pub fs_eeg: f64,
    pub fs_fnirs: f64,
    /// Oscillation frequency amplitude-modulated by the neural drive.
    pub carrier_hz: f64,
    /// Bandwidth of the stochastic modulator.
    pub modulator_cut_hz: f64,
    /// Strength of the modulator-to-haemodynamic coupling.
    pub coupling_gain: f64,
    /// Relative gain difference between the 3-back and 0-back runs.
    pub gain_contrast: f64,
    pub hrf: HrfParams,
    pub noise_eeg: f64,
    pub noise_oxy: f64,
    pub noise_deoxy: f64,
    /// DEOXY = deoxy_scale * OXY + independent noise.
    pub deoxy_scale: f64,
    /// Trials per condition run.
    pub n_trials: usize,
    pub iti_s: f64,
    /// Quiet stretch before the first trial; must cover the widest
    /// pre-stimulus analysis window.
    pub lead_in_s: f64,
    /// Quiet stretch after the last trial; must cover the widest
    /// post-stimulus analysis window.
    pub tail_s: f64,
    /// Relative spread of per-subject trait jitter (noise levels,
    /// modulator bandwidth, haemodynamic timing).
    pub subject_jitter: f64,
    pub seed: u64,
}

impl Default for NeuroVascSpec {
    fn default() -> Self {
        NeuroVascSpec {
            n_subjects: 26,
            channels_per_region: 1,
            fs_eeg: 200.0,
            fs_fnirs: 10.0,
            carrier_hz: 10.0,
            modulator_cut_hz: 0.4,
            coupling_gain: 1.0,
            gain_contrast: 0.3,
            hrf: HrfParams::default(),
            noise_eeg: 0.5,
            noise_oxy: 0.4,
            noise_deoxy: 0.4,
            deoxy_scale: -0.4,
            n_trials: 18,
            iti_s: 4.0,
            lead_in_s: 8.0,
            tail_s: 32.0,
            subject_jitter: 0.15,
            seed: 0,
        }
    }
}

impl NeuroVascSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_subjects == 0 {
            problems.push("n_subjects must be at least 1");
        }
        if self.channels_per_region == 0 {
            problems.push("channels_per_region must be at least 1");
        }
        if !(self.fs_eeg > 0.0 && self.fs_fnirs > 0.0) {
            problems.push("sampling rates must be positive");
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz < self.fs_eeg / 2.0) {
            problems.push("carrier must sit below the EEG Nyquist rate");
        }
        if !(self.modulator_cut_hz > 0.0 && self.modulator_cut_hz < self.fs_fnirs / 2.0) {
            problems.push("modulator cutoff must sit below the fNIRS Nyquist rate");
        }
        if !(self.coupling_gain >= 0.0) {
            problems.push("coupling_gain must be nonnegative");
        }
        if !(0.0..2.0).contains(&self.gain_contrast) {
            problems.push("gain_contrast must lie in [0, 2)");
        }
        if !(self.hrf.peak_s > 0.0 && self.hrf.undershoot_s > 0.0 && self.hrf.ratio >= 0.0) {
            problems.push("haemodynamic time constants must be positive");
        }
        if !(self.noise_eeg >= 0.0 && self.noise_oxy >= 0.0 && self.noise_deoxy >= 0.0) {
            problems.push("noise levels must be nonnegative");
        }
        if !self.deoxy_scale.is_finite() {
            problems.push("deoxy_scale must be finite");
        }
        if self.n_trials == 0 {
            problems.push("n_trials must be at least 1");
        }
        if !(self.iti_s > 0.0 && self.lead_in_s >= 0.0 && self.tail_s >= 0.0) {
            problems.push("trial timing must be positive");
        }
        if !(0.0..=0.5).contains(&self.subject_jitter) {
            problems.push("subject_jitter must lie in [0, 0.5]");
        }
        if let Some(p) = problems.first() {
            return Err(Error::BadConfig((*p).into()));
        }
        Ok(())
    }

    /// Coupling gain applied during one condition run.
    pub fn gain_for(&self, condition: Condition) -> f64 {
        let half = self.gain_contrast / 2.0;
        match condition {
            Condition::NBack0 => self.coupling_gain * (1.0 - half),
            Condition::NBack2 => self.coupling_gain,
            Condition::NBack3 => self.coupling_gain * (1.0 + half),
        }
    }

    pub fn recording_seconds(&self) -> f64 {
        self.lead_in_s + (self.n_trials - 1) as f64 * self.iti_s + self.tail_s
    }

    /// Region map matching the generated channel names.
    pub fn region_map(&self) -> RegionMap {
        let names = |prefix: &str, region: usize| -> Vec<String> {
            if self.channels_per_region == 1 {
                vec![format!("{prefix}{region}")]
            } else {
                (1..=self.channels_per_region)
                    .map(|c| format!("{prefix}{region}_{c}"))
                    .collect()
            }
        };
        let mut regions = Vec::new();
        for r in 0..N_EEG_REGIONS {
            regions.push(Region {
                id: format!("R{}", r + 1),
                modality: Modality::Eeg,
                channels: names("E", r + 1),
            });
        }
        for r in 0..N_OXY_REGIONS {
            regions.push(Region {
                id: format!("R{}", N_EEG_REGIONS + r + 1),
                modality: Modality::Oxy,
                channels: names("O", r + 1),
            });
        }
        for r in 0..N_DEOXY_REGIONS {
            regions.push(Region {
                id: format!("R{}", N_EEG_REGIONS + N_OXY_REGIONS + r + 1),
                modality: Modality::Deoxy,
                channels: names("D", r + 1),
            });
        }
        RegionMap::new(regions).expect("generated map satisfies the layout")
    }
}

/// One condition's continuous recordings plus its trial markers.
#[derive(Debug, Clone)]
pub struct ConditionRun {
    pub condition: Condition,
    /// Coupling gain actually applied.
    pub gain: f64,
    pub eeg: MultichannelSeries,
    pub oxy: MultichannelSeries,
    pub deoxy: MultichannelSeries,
    /// Sample indices refer to the EEG rate.
    pub events: Vec<Event>,
}

impl ConditionRun {
    pub fn fnirs_events(&self) -> Result<Vec<Event>> {
        retime_events(&self.events, self.eeg.fs, self.oxy.fs)
    }

    /// Cuts matched epoch sets around every trial.
    pub fn epoch_sets(
        &self,
        eeg_window: EpochWindow,
        fnirs_window: EpochWindow,
    ) -> Result<(EpochSet, EpochSet, EpochSet)> {
        let fe = self.fnirs_events()?;
        Ok((
            epoch(&self.eeg, &self.events, eeg_window)?,
            epoch(&self.oxy, &fe, fnirs_window)?,
            epoch(&self.deoxy, &fe, fnirs_window)?,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub id: usize,
    pub runs: Vec<ConditionRun>,
}

/// Per-subject trait jitter drawn once and shared by both runs.
struct SubjectTraits {
    noise_eeg: f64,
    noise_oxy: f64,
    noise_deoxy: f64,
    modulator_cut_hz: f64,
    hrf: HrfParams,
}

fn rng_for(seed: u64, subject: usize, stream: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(subject as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&stream.to_le_bytes());
    bytes[24..32].copy_from_slice(&0xA5A5_5A5A_0F0F_F0F0u64.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

fn subject_traits(spec: &NeuroVascSpec, subject: usize) -> SubjectTraits {
    let mut rng = rng_for(spec.seed, subject, 0);
    let mut jitter = |scale: f64| -> f64 {
        let u: f64 = rng.random_range(-1.0..1.0);
        (scale * u).exp()
    };
    let j = spec.subject_jitter;
    let timing = jitter(j);
    SubjectTraits {
        noise_eeg: spec.noise_eeg * jitter(j),
        noise_oxy: spec.noise_oxy * jitter(j),
        noise_deoxy: spec.noise_deoxy * jitter(j),
        modulator_cut_hz: (spec.modulator_cut_hz * jitter(j))
            .min(0.49 * spec.fs_fnirs),
        hrf: HrfParams {
            peak_s: spec.hrf.peak_s * timing,
            undershoot_s: spec.hrf.undershoot_s * timing,
            ratio: spec.hrf.ratio,
        },
    }
}

fn standardized(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// Positive low-frequency modulator at the fNIRS rate: lowpassed white
/// noise, standardized, clipped to three standard deviations, and mapped
/// through an exponential.
fn modulator(rng: &mut ChaCha8Rng, len: usize, cut_hz: f64, fs: f64) -> Result<Vec<f64>> {
    let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let lp = design_butterworth(FilterKind::Lowpass, 2, &[cut_hz], fs)?;
    let smooth = lp.apply(&white);
    Ok(standardized(&smooth)
        .iter()
        .map(|z| (0.5 * z.clamp(-3.0, 3.0)).exp())
        .collect())
}

/// Linear interpolation of a slow signal onto a faster, longer grid.
fn upsample_linear(x: &[f64], fs_from: f64, fs_to: f64, len_out: usize) -> Vec<f64> {
    let step = fs_from / fs_to;
    (0..len_out)
        .map(|t| {
            let pos = t as f64 * step;
            let i0 = (pos.floor() as usize).min(x.len() - 1);
            let i1 = (i0 + 1).min(x.len() - 1);
            let frac = pos - i0 as f64;
            x[i0] + (x[i1] - x[i0]) * frac
        })
        .collect()
}

/// Pink-like drift: three one-pole lowpass stages with staggered decay
/// rates, summed and standardized.
fn drift_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut s = [0.0f64; 3];
    let poles = [0.9, 0.99, 0.999];
    let weights = [1.0, 0.6, 0.35];
    let raw: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            let mut acc = 0.0;
            for k in 0..3 {
                s[k] = poles[k] * s[k] + w;
                acc += weights[k] * s[k];
            }
            acc
        })
        .collect();
    standardized(&raw)
}

fn convolve_causal(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            let k_max = kernel.len().min(t + 1);
            (0..k_max).map(|k| kernel[k] * x[t - k]).sum()
        })
        .collect()
}

/// Generates one subject's pair of condition runs.
pub fn simulate_subject(spec: &NeuroVascSpec, subject: usize) -> Result<SyntheticSubject> {
    spec.validate()?;
    let traits = subject_traits(spec, subject);
    let mut runs = Vec::new();
    for (idx, condition) in [Condition::NBack0, Condition::NBack3].into_iter().enumerate() {
        runs.push(simulate_run(spec, &traits, subject, condition, 16 + idx as u64)?);
    }
    Ok(SyntheticSubject { id: subject, runs })
}

fn simulate_run(
    spec: &NeuroVascSpec,
    traits: &SubjectTraits,
    subject: usize,
    condition: Condition,
    stream: u64,
) -> Result<ConditionRun> {
    let mut rng = rng_for(spec.seed, subject, stream);
    let gain = spec.gain_for(condition);
    let seconds = spec.recording_seconds();
    let len_f = (seconds * spec.fs_fnirs).round() as usize;
    let len_e = (seconds * spec.fs_eeg).round() as usize;
    let cpr = spec.channels_per_region;

    let mut modulators = Vec::with_capacity(N_EEG_REGIONS);
    for _ in 0..N_EEG_REGIONS {
        modulators.push(modulator(
            &mut rng,
            len_f,
            traits.modulator_cut_hz,
            spec.fs_fnirs,
        )?);
    }

    let mut eeg = Array2::<f64>::zeros((N_EEG_REGIONS * cpr, len_e));
    let mut eeg_meta = Vec::new();
    for r in 0..N_EEG_REGIONS {
        let m_e = upsample_linear(&modulators[r], spec.fs_fnirs, spec.fs_eeg, len_e);
        for c in 0..cpr {
            let name = if cpr == 1 {
                format!("E{}", r + 1)
            } else {
                format!("E{}_{}", r + 1, c + 1)
            };
            eeg_meta.push(ChannelMeta::new(name, Modality::Eeg));
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let w = std::f64::consts::TAU * spec.carrier_hz / spec.fs_eeg;
            let row = r * cpr + c;
            for t in 0..len_e {
                let noise: f64 = rng.sample(StandardNormal);
                eeg[[row, t]] = m_e[t] * (w * t as f64 + phase).sin() + traits.noise_eeg * noise;
            }
        }
    }

    let kernel = hrf_kernel(&traits.hrf, spec.fs_fnirs);
    let mut oxy = Array2::<f64>::zeros((N_OXY_REGIONS * cpr, len_f));
    let mut oxy_meta = Vec::new();
    for r in 0..N_OXY_REGIONS {
        let drive = standardized(&convolve_causal(&modulators[r], &kernel));
        for c in 0..cpr {
            let name = if cpr == 1 {
                format!("O{}", r + 1)
            } else {
                format!("O{}_{}", r + 1, c + 1)
            };
            oxy_meta.push(ChannelMeta::new(name, Modality::Oxy));
            let drift = drift_noise(&mut rng, len_f);
            let row = r * cpr + c;
            for t in 0..len_f {
                oxy[[row, t]] = gain * drive[t] + traits.noise_oxy * drift[t];
            }
        }
    }

    let mut deoxy = Array2::<f64>::zeros((N_DEOXY_REGIONS * cpr, len_f));
    let mut deoxy_meta = Vec::new();
    for r in 0..N_DEOXY_REGIONS {
        for c in 0..cpr {
            let name = if cpr == 1 {
                format!("D{}", r + 1)
            } else {
                format!("D{}_{}", r + 1, c + 1)
            };
            deoxy_meta.push(ChannelMeta::new(name, Modality::Deoxy));
            let row = r * cpr + c;
            for t in 0..len_f {
                let noise: f64 = rng.sample(StandardNormal);
                deoxy[[row, t]] = spec.deoxy_scale * oxy[[row, t]] + traits.noise_deoxy * noise;
            }
        }
    }

    let events: Vec<Event> = (0..spec.n_trials)
        .map(|i| {
            let t = spec.lead_in_s + i as f64 * spec.iti_s;
            Event {
                sample_index: (t * spec.fs_eeg).round() as usize,
                condition,
                stimulus_class: if i % 10 % 3 == 2 {
                    StimulusClass::Target
                } else {
                    StimulusClass::NonTarget
                },
            }
        })
        .collect();

    Ok(ConditionRun {
        condition,
        gain,
        eeg: MultichannelSeries::new(eeg_meta, eeg, spec.fs_eeg, "uV"),
        oxy: MultichannelSeries::new(oxy_meta, oxy, spec.fs_fnirs, "mM"),
        deoxy: MultichannelSeries::new(deoxy_meta, deoxy, spec.fs_fnirs, "mM"),
        events,
    })
}

/// Generates the whole cohort. Subjects derive independent seed streams,
/// so the result does not depend on scheduling.
pub fn simulate_neurovascular(spec: &NeuroVascSpec) -> Result<Vec<SyntheticSubject>> {
    spec.validate()?;
    (0..spec.n_subjects)
        .into_par_iter()
        .map(|s| simulate_subject(spec, s))
        .collect()
}
