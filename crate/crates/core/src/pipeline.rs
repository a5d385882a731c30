//! Stage orchestration: stimulus-locked epoching, region averaging, the
//! low-frequency envelope tracks per modality, and fusion onto a common
//! per-epoch length.
//!
//! Epoch windows differ between modalities (EEG defaults to 0.5 s before
//! and 10 s after a stimulus, hemodynamic channels to 5 s and 30 s), so
//! fusion maps each region's time course over its own window onto `L`
//! samples. The fused axis is therefore a normalized position within the
//! window, not wall-clock time; `fs_effective` reports the rate implied
//! by the longest window.

use ndarray::{Array2, Array3};

use crate::dsp::{
    self, analytic, resample, resample_len, savitzky_golay, wavelet, FilterCascade,
};
use crate::error::{Error, Result};
use crate::io::Event;
use crate::types::{
    ChannelMeta, Condition, EpochSet, EpochWindow, FusedEpochSet, FusionLog, Modality,
    MultichannelSeries, RegionMap, StimulusClass, N_DEOXY_REGIONS, N_EEG_REGIONS, N_OXY_REGIONS,
    N_REGIONS,
};

/// Relative spread below which an envelope track counts as flat.
const DEGENERATE_REL_SPREAD: f64 = 0.1;
/// Absolute floor relative to the input scale for near-zero tracks.
const DEGENERATE_ABS_FLOOR: f64 = 1e-9;
/// Moving-average width used to suppress subband beating (> 2 Hz at the
/// 10 Hz track rate) before judging flatness.
const DEGENERATE_SMOOTH: usize = 5;
/// Largest numerator/denominator used when approximating a length ratio.
const MAX_RATIO_TERM: u64 = 32;

/// Applies one filter cascade to every channel in place of the raw data.
pub fn filter_channels(x: &MultichannelSeries, f: &FilterCascade) -> Result<MultichannelSeries> {
    let mut out = x.clone();
    for mut row in out.data.rows_mut() {
        let filtered = f.apply_checked(row.as_slice().expect("row contiguous"), x.fs)?;
        row.as_slice_mut().expect("row contiguous").copy_from_slice(&filtered);
    }
    Ok(out)
}

/// Resamples every channel by `up/down`, updating the stored rate.
pub fn resample_channels(
    x: &MultichannelSeries,
    up: usize,
    down: usize,
) -> Result<MultichannelSeries> {
    let n_out = resample_len(x.data.ncols(), up, down);
    let mut data = Array2::zeros((x.data.nrows(), n_out));
    for (i, row) in x.data.rows().into_iter().enumerate() {
        let y = resample(row.as_slice().expect("row contiguous"), up, down)?;
        data.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&y);
    }
    Ok(MultichannelSeries::new(
        x.channels.clone(),
        data,
        x.fs * up as f64 / down as f64,
        x.unit.clone(),
    ))
}

/// Smooths every channel with a Savitzky-Golay filter.
pub fn smooth_channels(
    x: &MultichannelSeries,
    window: usize,
    polyorder: usize,
) -> Result<MultichannelSeries> {
    let mut out = x.clone();
    for mut row in out.data.rows_mut() {
        let smoothed = savitzky_golay(row.as_slice().expect("row contiguous"), window, polyorder)?;
        row.as_slice_mut().unwrap().copy_from_slice(&smoothed);
    }
    Ok(out)
}

/// Cuts stimulus-locked windows around `events`, ordered by event time.
///
/// Every event must carry the same condition; the stimulus class is kept
/// only when it is uniform across events.
pub fn epoch(x: &MultichannelSeries, events: &[Event], window: EpochWindow) -> Result<EpochSet> {
    x.validate()?;
    if events.is_empty() {
        return Err(Error::BadConfig("no events to epoch".into()));
    }
    let condition = events[0].condition;
    if events.iter().any(|e| e.condition != condition) {
        return Err(Error::BadConfig(
            "events passed to epoch() span multiple conditions".into(),
        ));
    }
    let stimulus_class = uniform_class(events);

    let (pre, post, total) = window.samples_at(x.fs);
    let n = x.data.ncols();
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| events[i].sample_index);

    let mut data = Array3::zeros((events.len(), x.data.nrows(), total));
    for (k, &ei) in order.iter().enumerate() {
        let s = events[ei].sample_index;
        if s < pre || s + post >= n {
            return Err(Error::WindowOutOfBounds {
                event_index: ei,
                sample: s,
            });
        }
        let start = s - pre;
        for (c, row) in x.data.rows().into_iter().enumerate() {
            data.slice_mut(ndarray::s![k, c, ..])
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&row.as_slice().unwrap()[start..start + total]);
        }
    }
    Ok(EpochSet {
        data,
        channels: x.channels.clone(),
        fs: x.fs,
        condition,
        stimulus_class,
        window,
    })
}

/// Re-expresses event sample indices at another sampling rate.
pub fn retime_events(events: &[Event], fs_from: f64, fs_to: f64) -> Result<Vec<Event>> {
    for fs in [fs_from, fs_to] {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::NonPositiveRate(fs));
        }
    }
    Ok(events
        .iter()
        .map(|e| Event {
            sample_index: (e.sample_index as f64 * fs_to / fs_from).round() as usize,
            ..*e
        })
        .collect())
}

fn uniform_class(events: &[Event]) -> Option<StimulusClass> {
    let first = events[0].stimulus_class;
    if events.iter().all(|e| e.stimulus_class == first) {
        Some(first)
    } else {
        None
    }
}

/// Averages member channels into one trace per region, keeping only the
/// regions whose modality is present in `e`.
pub fn region_average(e: &EpochSet, map: &RegionMap) -> Result<EpochSet> {
    map.validate()?;
    let present: Vec<Modality> = {
        let mut m = Vec::new();
        for ch in &e.channels {
            if !m.contains(&ch.modality) {
                m.push(ch.modality);
            }
        }
        m
    };
    let regions: Vec<_> = map
        .regions
        .iter()
        .filter(|r| present.contains(&r.modality))
        .collect();
    if regions.is_empty() {
        return Err(Error::BadRegionMap(
            "no region matches the modalities present in the data".into(),
        ));
    }

    let n_epochs = e.n_epochs();
    let n_samples = e.n_samples();
    let mut data = Array3::zeros((n_epochs, regions.len(), n_samples));
    let mut channels = Vec::with_capacity(regions.len());
    for (ri, region) in regions.iter().enumerate() {
        let mut member_rows = Vec::with_capacity(region.channels.len());
        for name in &region.channels {
            let idx = e
                .channels
                .iter()
                .position(|c| c.name == *name && c.modality == region.modality)
                .ok_or_else(|| Error::MissingChannel {
                    region: region.id.clone(),
                    channel: name.clone(),
                })?;
            member_rows.push(idx);
        }
        let scale = 1.0 / member_rows.len() as f64;
        for k in 0..n_epochs {
            for t in 0..n_samples {
                let sum: f64 = member_rows.iter().map(|&c| e.data[[k, c, t]]).sum();
                data[[k, ri, t]] = sum * scale;
            }
        }
        channels.push(ChannelMeta {
            name: region.id.clone(),
            modality: region.modality,
        });
    }
    Ok(EpochSet {
        data,
        channels,
        fs: e.fs,
        condition: e.condition,
        stimulus_class: e.stimulus_class,
        window: e.window,
    })
}

/// Flat or vanishing tracks carry no usable envelope structure.
///
/// The verdict is taken on the inner 80% of the track (edge transients
/// must not disguise a flat envelope as structure) after a short moving
/// average. Decimated-subband reconstruction puts a deterministic beat
/// on even a pure tone's envelope; the average removes that wobble while
/// leaving genuine sub-hertz modulation intact.
fn is_degenerate(track: &[f64], input_scale: f64) -> bool {
    if track.len() < 4 {
        return true;
    }
    let trim = track.len() / 10;
    let core = &track[trim..track.len() - trim];
    if sample_sd(core) <= DEGENERATE_ABS_FLOOR * input_scale.max(f64::MIN_POSITIVE) {
        return true;
    }
    let smooth = if core.len() > DEGENERATE_SMOOTH + 2 {
        moving_average(core, DEGENERATE_SMOOTH)
    } else {
        core.to_vec()
    };
    let level = smooth.iter().map(|v| v.abs()).sum::<f64>() / smooth.len() as f64;
    sample_sd(&smooth) < DEGENERATE_REL_SPREAD * level
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1 - width);
    let mut acc: f64 = x[..width].iter().sum();
    out.push(acc / width as f64);
    for i in width..x.len() {
        acc += x[i] - x[i - width];
        out.push(acc / width as f64);
    }
    out
}

fn input_scale(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Extracts the band component around `center_hz` for one row.
fn band_component(x: &[f64], fs: f64, center_hz: f64, level: Option<usize>) -> Result<Vec<f64>> {
    let level = match level {
        Some(l) => l,
        None => wavelet::level_for_frequency(fs, center_hz)?,
    };
    let dec = wavelet::dwt_decompose(x, level)?;
    wavelet::dwt_component(&dec, level)
}

/// Low-frequency EEG track: the envelope of the wavelet band around
/// `center_hz` (10 Hz by default), brought down to `out_fs` and z-scored
/// per epoch. Degenerate epochs keep their shape but are zero-filled.
pub fn eeg_lowfreq_track(
    e: &EpochSet,
    center_hz: f64,
    out_fs: f64,
    level: Option<usize>,
) -> Result<EpochSet> {
    let (up, down) = rational_ratio(out_fs / e.fs, MAX_RATIO_TERM)?;
    if (e.fs * up as f64 / down as f64 - out_fs).abs() > 1e-9 * out_fs {
        return Err(Error::BadConfig(format!(
            "cannot reach {out_fs} Hz from {} Hz with a small rational ratio",
            e.fs
        )));
    }
    let n_out = resample_len(e.n_samples(), up as usize, down as usize);
    let mut data = Array3::zeros((e.n_epochs(), e.n_channels(), n_out));
    for k in 0..e.n_epochs() {
        for c in 0..e.n_channels() {
            let row = e.data.slice(ndarray::s![k, c, ..]);
            let x = row.as_slice().expect("row contiguous");
            let comp = band_component(x, e.fs, center_hz, level)?;
            let env = analytic::envelope(&comp)?;
            let track = if up == down {
                env
            } else {
                resample(&env, up as usize, down as usize)?
            };
            if !is_degenerate(&track, input_scale(x)) {
                let z = dsp::zscore(&track, &e.channels[c].name, k)?;
                data.slice_mut(ndarray::s![k, c, ..])
                    .as_slice_mut()
                    .unwrap()
                    .copy_from_slice(&z);
            }
        }
    }
    Ok(EpochSet {
        data,
        channels: e.channels.clone(),
        fs: out_fs,
        condition: e.condition,
        stimulus_class: e.stimulus_class,
        window: e.window,
    })
}

/// Low-frequency hemodynamic track: the wavelet band around `center_hz`
/// (1 Hz by default), z-scored per epoch at the input rate.
pub fn fnirs_lowfreq_track(
    e: &EpochSet,
    center_hz: f64,
    level: Option<usize>,
) -> Result<EpochSet> {
    let mut data = Array3::zeros((e.n_epochs(), e.n_channels(), e.n_samples()));
    for k in 0..e.n_epochs() {
        for c in 0..e.n_channels() {
            let row = e.data.slice(ndarray::s![k, c, ..]);
            let x = row.as_slice().expect("row contiguous");
            let track = band_component(x, e.fs, center_hz, level)?;
            if !is_degenerate(&track, input_scale(x)) {
                let z = dsp::zscore(&track, &e.channels[c].name, k)?;
                data.slice_mut(ndarray::s![k, c, ..])
                    .as_slice_mut()
                    .unwrap()
                    .copy_from_slice(&z);
            }
        }
    }
    Ok(EpochSet {
        data,
        channels: e.channels.clone(),
        fs: e.fs,
        condition: e.condition,
        stimulus_class: e.stimulus_class,
        window: e.window,
    })
}

/// Best rational approximation of `x` with numerator and denominator
/// bounded by `max_term`, via the continued-fraction convergents.
pub fn rational_ratio(x: f64, max_term: u64) -> Result<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::BadConfig(format!("ratio {x} is not a positive number")));
    }
    let (mut h0, mut k0, mut h1, mut k1) = (0u64, 1u64, 1u64, 0u64);
    let mut frac = x;
    for _ in 0..64 {
        let a = frac.floor() as u64;
        let h2 = match a.checked_mul(h1).and_then(|v| v.checked_add(h0)) {
            Some(v) => v,
            None => break,
        };
        let k2 = match a.checked_mul(k1).and_then(|v| v.checked_add(k0)) {
            Some(v) => v,
            None => break,
        };
        if h2 > max_term || k2 > max_term {
            break;
        }
        h0 = h1;
        k0 = k1;
        h1 = h2;
        k1 = k2;
        let rem = frac - a as f64;
        if rem < 1e-12 {
            break;
        }
        frac = 1.0 / rem;
    }
    // after at least one accepted convergent, (h1, k1) holds it; the
    // fallbacks cover ratios outside [1/max_term, max_term]
    if k1 == 0 {
        return Ok((max_term, 1));
    }
    if h1 == 0 {
        return Ok((1, max_term));
    }
    Ok((h1, k1))
}

/// Maps `x` onto exactly `target` samples spanning the same interval.
fn resize_row(x: &[f64], target: usize) -> Result<Vec<f64>> {
    if x.len() == target {
        return Ok(x.to_vec());
    }
    if x.len() < 2 || target < 2 {
        return Err(Error::TooShort {
            got: x.len().min(target),
            min: 2,
        });
    }
    let ratio = target as f64 / x.len() as f64;
    let (up, down) = rational_ratio(ratio, MAX_RATIO_TERM)?;
    let coarse = if up == down {
        x.to_vec()
    } else {
        resample(x, up as usize, down as usize)?
    };
    if coarse.len() == target {
        return Ok(coarse);
    }
    let m = coarse.len();
    let step = (m - 1) as f64 / (target - 1) as f64;
    let mut out = Vec::with_capacity(target);
    for i in 0..target {
        let t = i as f64 * step;
        let lo = (t.floor() as usize).min(m - 2);
        let frac = t - lo as f64;
        out.push(coarse[lo] * (1.0 - frac) + coarse[lo + 1] * frac);
    }
    Ok(out)
}

/// Joins the three modality tracks into the canonical 25-region set at a
/// common per-epoch length `target_len`. Epochs with any flat or vanishing
/// region are dropped from every modality and listed in the log.
pub fn fuse(
    eeg: &EpochSet,
    oxy: &EpochSet,
    deoxy: &EpochSet,
    target_len: usize,
) -> Result<FusedEpochSet> {
    let counts = [eeg.n_epochs(), oxy.n_epochs(), deoxy.n_epochs()];
    if counts[0] != counts[1] || counts[0] != counts[2] {
        return Err(Error::EpochCountMismatch(counts.to_vec()));
    }
    let n_epochs = counts[0];
    check_block(eeg, Modality::Eeg, N_EEG_REGIONS)?;
    check_block(oxy, Modality::Oxy, N_OXY_REGIONS)?;
    check_block(deoxy, Modality::Deoxy, N_DEOXY_REGIONS)?;
    if target_len < 2 {
        return Err(Error::BadConfig(format!(
            "fused length must be at least 2, got {target_len}"
        )));
    }
    if eeg.condition != oxy.condition || eeg.condition != deoxy.condition {
        return Err(Error::BadConfig(
            "modality epoch sets come from different conditions".into(),
        ));
    }

    let mut labels = Vec::with_capacity(N_REGIONS);
    for set in [eeg, oxy, deoxy] {
        labels.extend(set.channels.iter().map(|c| c.name.clone()));
    }

    // resize and re-normalize everything first, then drop bad epochs
    let mut all = Array3::zeros((n_epochs, N_REGIONS, target_len));
    let mut flat = vec![[false; 3]; n_epochs];
    for (mi, set) in [eeg, oxy, deoxy].into_iter().enumerate() {
        let ch0 = match mi {
            0 => 0,
            1 => N_EEG_REGIONS,
            _ => N_EEG_REGIONS + N_OXY_REGIONS,
        };
        for k in 0..n_epochs {
            for c in 0..set.n_channels() {
                let row = set.data.slice(ndarray::s![k, c, ..]);
                let x = row.as_slice().expect("row contiguous");
                let resized = resize_row(x, target_len)?;
                match dsp::zscore(&resized, &set.channels[c].name, k) {
                    Ok(z) => all
                        .slice_mut(ndarray::s![k, ch0 + c, ..])
                        .as_slice_mut()
                        .unwrap()
                        .copy_from_slice(&z),
                    Err(Error::ZeroVariance { .. }) => flat[k][mi] = true,
                    Err(other) => return Err(other),
                }
            }
        }
    }

    let excluded: Vec<usize> = (0..n_epochs).filter(|&k| flat[k].iter().any(|&b| b)).collect();
    let kept: Vec<usize> = (0..n_epochs).filter(|k| !excluded.contains(k)).collect();
    let mut data = Array3::zeros((kept.len(), N_REGIONS, target_len));
    for (j, &k) in kept.iter().enumerate() {
        data.slice_mut(ndarray::s![j, .., ..])
            .assign(&all.slice(ndarray::s![k, .., ..]));
    }

    let span = eeg
        .window
        .span_s()
        .max(oxy.window.span_s())
        .max(deoxy.window.span_s());
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::BadConfig("epoch windows have zero span".into()));
    }

    let log = FusionLog {
        n_epochs_in: n_epochs,
        excluded_epochs: excluded,
        degenerate_eeg: flat.iter().filter(|f| f[0]).count(),
        degenerate_oxy: flat.iter().filter(|f| f[1]).count(),
        degenerate_deoxy: flat.iter().filter(|f| f[2]).count(),
    };
    Ok(FusedEpochSet {
        data,
        labels,
        fs_effective: target_len as f64 / span,
        condition: eeg.condition,
        log,
    })
}

fn check_block(e: &EpochSet, modality: Modality, want: usize) -> Result<()> {
    if e.n_channels() != want || e.channels.iter().any(|c| c.modality != modality) {
        return Err(Error::BadRegionMap(format!(
            "expected {want} {modality} region channels, got {}",
            e.n_channels()
        )));
    }
    Ok(())
}

/// Convenience constructor for test and synthetic data paths.
pub fn epoch_set_from_array(
    data: Array3<f64>,
    channels: Vec<ChannelMeta>,
    fs: f64,
    condition: Condition,
    window: EpochWindow,
) -> EpochSet {
    EpochSet {
        data,
        channels,
        fs,
        condition,
        stimulus_class: None,
        window,
    }
}
