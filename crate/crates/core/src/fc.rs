//! Functional connectivity: Pearson correlation, phase-locking value,
//! and magnitude-squared coherence over the fused epoch set.
//!
//! Every metric is computed per epoch (or per Welch segment) and averaged,
//! yielding one symmetric matrix per subject and condition.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::analytic_signal;
use crate::error::{Error, Result};
use crate::types::{ConnectivityMatrix, FusedEpochSet, Metric};

/// How per-epoch correlation coefficients are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationPooling {
    Arithmetic,
    /// Fisher z-transform before averaging, inverse-transformed after.
    FisherZ,
}

/// Welch cross-spectrum segmentation. The window is a periodic Hann.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WelchParams {
    pub seg_len: usize,
    pub overlap: usize,
}

impl WelchParams {
    /// Quarter-length segments with half overlap.
    pub fn default_for(epoch_len: usize) -> Self {
        let seg_len = (epoch_len / 4).max(8);
        WelchParams {
            seg_len,
            overlap: seg_len / 2,
        }
    }
}

/// Default coherence band: up to a tenth of the effective rate, skipping DC.
pub fn default_band(fs_effective: f64) -> (f64, f64) {
    (0.01, 0.1 * fs_effective)
}

/// Pearson correlation averaged over epochs.
pub fn pcc(f: &FusedEpochSet) -> Result<ConnectivityMatrix> {
    pcc_pooled(f, CorrelationPooling::Arithmetic)
}

pub fn pcc_pooled(f: &FusedEpochSet, pooling: CorrelationPooling) -> Result<ConnectivityMatrix> {
    let (n_epochs, n_ch, len) = dims(f)?;
    if len < 2 {
        return Err(Error::TooShort { got: len, min: 2 });
    }
    let mut acc = Array2::<f64>::zeros((n_ch, n_ch));
    for k in 0..n_epochs {
        let mut centered = Vec::with_capacity(n_ch);
        let mut norms = Vec::with_capacity(n_ch);
        for c in 0..n_ch {
            let row = f.data.slice(ndarray::s![k, c, ..]);
            let x = row.as_slice().expect("row contiguous");
            let mean = x.iter().sum::<f64>() / len as f64;
            let cen: Vec<f64> = x.iter().map(|v| v - mean).collect();
            let norm = cen.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroVariance {
                    channel: f.labels[c].clone(),
                    epoch: k,
                });
            }
            centered.push(cen);
            norms.push(norm);
        }
        for i in 0..n_ch {
            for j in 0..i {
                let dot: f64 = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                acc[[i, j]] += match pooling {
                    CorrelationPooling::Arithmetic => r,
                    CorrelationPooling::FisherZ => r.clamp(-(1.0 - 1e-12), 1.0 - 1e-12).atanh(),
                };
            }
        }
    }
    let mut values = Array2::<f64>::zeros((n_ch, n_ch));
    for i in 0..n_ch {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let mean = acc[[i, j]] / n_epochs as f64;
            let r = match pooling {
                CorrelationPooling::Arithmetic => mean,
                CorrelationPooling::FisherZ => mean.tanh(),
            };
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    ConnectivityMatrix::new(Metric::Pcc, f.labels.clone(), values)
}

/// Phase-locking value averaged over epochs.
pub fn plv(f: &FusedEpochSet) -> Result<ConnectivityMatrix> {
    let (n_epochs, n_ch, len) = dims(f)?;
    let mut acc = Array2::<f64>::zeros((n_ch, n_ch));
    for k in 0..n_epochs {
        // unit phasors per channel
        let mut phasors: Vec<Vec<Complex64>> = Vec::with_capacity(n_ch);
        for c in 0..n_ch {
            let row = f.data.slice(ndarray::s![k, c, ..]);
            let z = analytic_signal(row.as_slice().expect("row contiguous"))?;
            phasors.push(
                z.into_iter()
                    .map(|v| {
                        let m = v.norm();
                        if m > 0.0 {
                            v / m
                        } else {
                            Complex64::new(1.0, 0.0)
                        }
                    })
                    .collect(),
            );
        }
        for i in 0..n_ch {
            for j in 0..i {
                let sum: Complex64 = phasors[i]
                    .iter()
                    .zip(&phasors[j])
                    .map(|(a, b)| a * b.conj())
                    .sum();
                acc[[i, j]] += (sum / len as f64).norm();
            }
        }
    }
    let mut values = Array2::<f64>::zeros((n_ch, n_ch));
    for i in 0..n_ch {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let v = (acc[[i, j]] / n_epochs as f64).clamp(0.0, 1.0);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    ConnectivityMatrix::new(Metric::Plv, f.labels.clone(), values)
}

/// Magnitude-squared coherence, Welch-averaged across segments and epochs,
/// scalarized as the mean over `band` (Hz, inclusive).
pub fn msc(f: &FusedEpochSet, welch: &WelchParams, band: (f64, f64)) -> Result<ConnectivityMatrix> {
    let (n_epochs, n_ch, len) = dims(f)?;
    let seg = welch.seg_len;
    if seg < 2 || welch.overlap >= seg {
        return Err(Error::BadWindow(format!(
            "welch segment {seg} with overlap {}",
            welch.overlap
        )));
    }
    let nyquist = f.fs_effective / 2.0;
    if !(band.0.is_finite() && band.1.is_finite()) || band.0 < 0.0 || band.0 >= band.1
        || band.1 > nyquist + 1e-12
    {
        return Err(Error::BadBand(band.0, band.1));
    }
    let step = seg - welch.overlap;
    let segs_per_epoch = if len >= seg { (len - seg) / step + 1 } else { 0 };
    let total = segs_per_epoch * n_epochs;
    if total < 2 {
        return Err(Error::TooFewSegments { got: total, min: 2 });
    }

    let n_bins = seg / 2 + 1;
    let window: Vec<f64> = (0..seg)
        .map(|t| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t as f64 / seg as f64).cos()))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(seg);

    let mut auto = vec![vec![0.0_f64; n_bins]; n_ch];
    let mut cross = vec![vec![Complex64::new(0.0, 0.0); n_bins]; n_ch * (n_ch - 1) / 2];
    let mut spectra: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); seg]; n_ch];

    for k in 0..n_epochs {
        for s in 0..segs_per_epoch {
            let s0 = s * step;
            for c in 0..n_ch {
                let row = f.data.slice(ndarray::s![k, c, ..]);
                let x = row.as_slice().expect("row contiguous");
                for t in 0..seg {
                    spectra[c][t] = Complex64::new(x[s0 + t] * window[t], 0.0);
                }
                fft.process(&mut spectra[c]);
            }
            for c in 0..n_ch {
                for (b, acc) in auto[c].iter_mut().enumerate() {
                    *acc += spectra[c][b].norm_sqr();
                }
            }
            let mut pair = 0;
            for i in 0..n_ch {
                for j in 0..i {
                    for (b, acc) in cross[pair].iter_mut().enumerate() {
                        *acc += spectra[i][b] * spectra[j][b].conj();
                    }
                    pair += 1;
                }
            }
        }
    }

    let band_bins: Vec<usize> = (0..n_bins)
        .filter(|&b| {
            let freq = b as f64 * f.fs_effective / seg as f64;
            freq >= band.0 && freq <= band.1
        })
        .collect();
    if band_bins.is_empty() {
        return Err(Error::BadBand(band.0, band.1));
    }

    let mut values = Array2::<f64>::zeros((n_ch, n_ch));
    let mut pair = 0;
    for i in 0..n_ch {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let mut sum = 0.0;
            for &b in &band_bins {
                let denom = auto[i][b] * auto[j][b];
                if denom <= 0.0 {
                    return Err(Error::ZeroVariance {
                        channel: f.labels[if auto[i][b] <= 0.0 { i } else { j }].clone(),
                        epoch: 0,
                    });
                }
                sum += cross[pair][b].norm_sqr() / denom;
            }
            let v = (sum / band_bins.len() as f64).clamp(0.0, 1.0);
            values[[i, j]] = v;
            values[[j, i]] = v;
            pair += 1;
        }
    }
    ConnectivityMatrix::new(Metric::Msc, f.labels.clone(), values)
}

fn dims(f: &FusedEpochSet) -> Result<(usize, usize, usize)> {
    let n_epochs = f.n_epochs();
    let n_ch = f.n_regions();
    if n_epochs == 0 {
        return Err(Error::TooShort { got: 0, min: 1 });
    }
    if f.labels.len() != n_ch {
        return Err(Error::LengthMismatch {
            expected: f.labels.len(),
            got: n_ch,
            context: "fused labels vs data".into(),
        });
    }
    Ok((n_epochs, n_ch, f.n_samples()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Condition, FusionLog};
    use ndarray::Array3;
    use std::f64::consts::PI;

    fn fused(data: Array3<f64>, fs: f64) -> FusedEpochSet {
        let n_ch = data.shape()[1];
        FusedEpochSet {
            data,
            labels: (1..=n_ch).map(|i| format!("R{i}")).collect(),
            fs_effective: fs,
            condition: Condition::NBack2,
            log: FusionLog {
                n_epochs_in: 0,
                excluded_epochs: vec![],
                degenerate_eeg: 0,
                degenerate_oxy: 0,
                degenerate_deoxy: 0,
            },
        }
    }

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    #[test]
    fn pcc_identical_and_negated_channels() {
        let mut rng = Lcg(99);
        let mut data = Array3::zeros((3, 3, 64));
        for k in 0..3 {
            for t in 0..64 {
                let v = rng.next();
                data[[k, 0, t]] = v;
                data[[k, 1, t]] = v;
                data[[k, 2, t]] = -v;
            }
        }
        let m = pcc(&fused(data, 7.3)).unwrap();
        assert!((m.values[[0, 1]] - 1.0).abs() < 1e-12);
        assert!((m.values[[0, 2]] + 1.0).abs() < 1e-12);
        assert_eq!(m.values[[1, 1]], 1.0);
        assert_eq!(m.values[[2, 0]], m.values[[0, 2]]);
    }

    #[test]
    fn pcc_flags_flat_channel() {
        let mut data = Array3::zeros((2, 2, 32));
        for t in 0..32 {
            data[[0, 0, t]] = t as f64;
            data[[0, 1, t]] = 1.5;
            data[[1, 0, t]] = t as f64;
            data[[1, 1, t]] = (t as f64).sin();
        }
        match pcc(&fused(data, 7.3)) {
            Err(Error::ZeroVariance { channel, epoch }) => {
                assert_eq!(channel, "R2");
                assert_eq!(epoch, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pcc_of_independent_noise_averages_out() {
        let mut rng = Lcg(2024);
        let mut data = Array3::zeros((180, 4, 256));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let m = pcc(&fused(data, 7.3)).unwrap();
        for i in 0..4 {
            for j in 0..i {
                assert!(m.values[[i, j]].abs() < 0.02, "({i},{j}): {}", m.values[[i, j]]);
            }
        }
    }

    #[test]
    fn pcc_invariant_to_positive_affine_maps() {
        let mut rng = Lcg(5);
        let mut data = Array3::zeros((4, 3, 100));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let base = pcc(&fused(data.clone(), 7.3)).unwrap();
        let mut scaled = data.clone();
        for k in 0..4 {
            for t in 0..100 {
                scaled[[k, 0, t]] = 3.0 * data[[k, 0, t]] + 7.0;
                scaled[[k, 2, t]] = 0.2 * data[[k, 2, t]] - 1.0;
            }
        }
        let mapped = pcc(&fused(scaled, 7.3)).unwrap();
        for (a, b) in base.values.iter().zip(mapped.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fisher_pooling_agrees_in_sign_and_extremes() {
        let mut rng = Lcg(77);
        let mut data = Array3::zeros((6, 2, 128));
        for k in 0..6 {
            for t in 0..128 {
                let shared = rng.next();
                data[[k, 0, t]] = shared + 0.3 * rng.next();
                data[[k, 1, t]] = shared + 0.3 * rng.next();
            }
        }
        let plain = pcc_pooled(&fused(data.clone(), 7.3), CorrelationPooling::Arithmetic).unwrap();
        let fisher = pcc_pooled(&fused(data, 7.3), CorrelationPooling::FisherZ).unwrap();
        let (a, b) = (plain.values[[0, 1]], fisher.values[[0, 1]]);
        assert!(a > 0.5 && b > 0.5);
        // Fisher averaging weights strong correlations more
        assert!(b >= a - 1e-12);
    }

    #[test]
    fn plv_constant_phase_offset_locks() {
        let fs = 8.0;
        let mut data = Array3::zeros((2, 2, 256));
        for k in 0..2 {
            for t in 0..256 {
                let arg = 2.0 * PI * 0.5 * t as f64 / fs;
                data[[k, 0, t]] = arg.cos();
                data[[k, 1, t]] = (arg + 1.1).cos();
            }
        }
        let m = plv(&fused(data, fs)).unwrap();
        assert!(m.values[[0, 1]] > 1.0 - 1e-3, "plv {}", m.values[[0, 1]]);
        assert_eq!(m.values[[0, 0]], 1.0);
    }

    #[test]
    fn plv_of_independent_noise_is_low() {
        let mut rng = Lcg(42);
        let mut data = Array3::zeros((10, 3, 256));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let m = plv(&fused(data, 7.3)).unwrap();
        for i in 0..3 {
            for j in 0..i {
                assert!(m.values[[i, j]] < 0.15, "({i},{j}): {}", m.values[[i, j]]);
            }
        }
    }

    #[test]
    fn plv_ignores_positive_rescaling() {
        let mut rng = Lcg(4242);
        let mut data = Array3::zeros((3, 2, 200));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let base = plv(&fused(data.clone(), 7.3)).unwrap();
        let mut scaled = data.clone();
        scaled.mapv_inplace(|v| v);
        for k in 0..3 {
            for t in 0..200 {
                scaled[[k, 1, t]] = 250.0 * data[[k, 1, t]];
            }
        }
        let s = plv(&fused(scaled, 7.3)).unwrap();
        assert!((base.values[[1, 0]] - s.values[[1, 0]]).abs() < 1e-9);
    }

    #[test]
    fn msc_of_delayed_copy_is_high() {
        let mut rng = Lcg(31);
        let mut data = Array3::zeros((60, 2, 256));
        for k in 0..60 {
            let src: Vec<f64> = (0..257).map(|_| rng.next()).collect();
            for t in 0..256 {
                data[[k, 0, t]] = src[t + 1];
                data[[k, 1, t]] = src[t];
            }
        }
        let fs = 7.314;
        let w = WelchParams {
            seg_len: 64,
            overlap: 32,
        };
        let m = msc(&fused(data, fs), &w, (0.01, fs / 2.0)).unwrap();
        assert!(m.values[[0, 1]] > 0.99, "msc {}", m.values[[0, 1]]);
    }

    #[test]
    fn msc_at_unit_snr_is_half() {
        let mut rng = Lcg(8);
        let mut data = Array3::zeros((60, 2, 256));
        for k in 0..60 {
            for t in 0..256 {
                let x = rng.next();
                data[[k, 0, t]] = x;
                data[[k, 1, t]] = x + rng.next();
            }
        }
        let fs = 7.314;
        let w = WelchParams {
            seg_len: 64,
            overlap: 32,
        };
        let m = msc(&fused(data, fs), &w, (0.01, fs / 2.0)).unwrap();
        assert!((m.values[[0, 1]] - 0.5).abs() < 0.05, "msc {}", m.values[[0, 1]]);
    }

    #[test]
    fn msc_needs_at_least_two_averages() {
        let mut rng = Lcg(3);
        let mut data = Array3::zeros((1, 2, 64));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let w = WelchParams {
            seg_len: 64,
            overlap: 32,
        };
        match msc(&fused(data, 7.3), &w, (0.01, 0.7)) {
            Err(Error::TooFewSegments { got: 1, min: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn msc_rejects_bad_bands() {
        let mut rng = Lcg(3);
        let mut data = Array3::zeros((4, 2, 256));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        let f = fused(data, 7.3);
        let w = WelchParams::default_for(256);
        assert!(matches!(
            msc(&f, &w, (0.5, 0.1)),
            Err(Error::BadBand(0.5, 0.1))
        ));
        assert!(matches!(msc(&f, &w, (0.01, 5.0)), Err(Error::BadBand(..))));
        // band too narrow to contain a bin
        assert!(matches!(
            msc(&f, &w, (0.0001, 0.0002)),
            Err(Error::BadBand(..))
        ));
    }

    #[test]
    fn metrics_commute_with_channel_permutation() {
        let mut rng = Lcg(12);
        let mut data = Array3::zeros((8, 3, 128));
        for v in data.iter_mut() {
            *v = rng.next();
        }
        // swap channels 0 and 2
        let mut swapped = data.clone();
        for k in 0..8 {
            for t in 0..128 {
                swapped[[k, 0, t]] = data[[k, 2, t]];
                swapped[[k, 2, t]] = data[[k, 0, t]];
            }
        }
        let perm = [2usize, 1, 0];
        let fs = 7.3;
        let w = WelchParams::default_for(128);
        let band = (0.01, fs / 2.0);
        let base_m = [
            pcc(&fused(data.clone(), fs)).unwrap(),
            plv(&fused(data.clone(), fs)).unwrap(),
            msc(&fused(data, fs), &w, band).unwrap(),
        ];
        let perm_m = [
            pcc(&fused(swapped.clone(), fs)).unwrap(),
            plv(&fused(swapped.clone(), fs)).unwrap(),
            msc(&fused(swapped, fs), &w, band).unwrap(),
        ];
        for (b, p) in base_m.iter().zip(&perm_m) {
            for i in 0..3 {
                for j in 0..3 {
                    let want = b.values[[perm[i], perm[j]]];
                    assert!((p.values[[i, j]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn default_welch_and_band_follow_epoch_geometry() {
        let w = WelchParams::default_for(256);
        assert_eq!(w.seg_len, 64);
        assert_eq!(w.overlap, 32);
        let (lo, hi) = default_band(7.314);
        assert!((lo - 0.01).abs() < 1e-12);
        assert!((hi - 0.7314).abs() < 1e-12);
    }
}
