//! Daubechies-2 discrete wavelet transform.
//!
//! The cascade halves the band at every level, so detail level `k` of a
//! signal sampled at `fs` nominally covers `(fs / 2^(k+1), fs / 2^k]`.
//! Boundaries use half-sample symmetric extension; each analysis step
//! keeps `(n + 3) / 2` coefficients, one more than `n / 2` for even `n`,
//! which is the price of exact reconstruction with this extension.

use crate::error::{Error, Result};

const FILTER_LEN: usize = 4;

/// db2 scaling filter, unit energy.
fn dec_lo() -> [f64; 4] {
    let s3 = 3.0_f64.sqrt();
    let norm = 4.0 * 2.0_f64.sqrt();
    [
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ]
}

/// Quadrature mirror of the scaling filter.
fn dec_hi() -> [f64; 4] {
    let h = dec_lo();
    [h[3], -h[2], h[1], -h[0]]
}

/// Multi-level decomposition: approximation plus one detail per level.
/// `details[0]` is level 1 (the finest band).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    /// Input length at each analysis step, needed to undo the transform.
    pub lengths: Vec<usize>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }
}

/// Deepest decomposition level for a signal of `n` samples.
pub fn max_levels(n: usize) -> usize {
    let mut levels = 0;
    let mut len = n;
    while len >= 2 * (FILTER_LEN - 1) {
        len = (len + FILTER_LEN - 1) / 2;
        levels += 1;
    }
    levels
}

fn extend_symmetric(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (0..pad).rev() {
        out.push(x[i]);
    }
    out.extend_from_slice(x);
    for i in 0..pad {
        out.push(x[n - 1 - i]);
    }
    out
}

fn analysis_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = dec_lo();
    let hi = dec_hi();
    let ext = extend_symmetric(x, FILTER_LEN - 1);
    let out_len = (x.len() + FILTER_LEN - 1) / 2;
    let mut a = Vec::with_capacity(out_len);
    let mut d = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let base = 2 * k + 1;
        let mut sa = 0.0;
        let mut sd = 0.0;
        for t in 0..FILTER_LEN {
            let v = ext[base + t];
            sa += v * lo[t];
            sd += v * hi[t];
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], orig_len: usize) -> Vec<f64> {
    let lo = dec_lo();
    let hi = dec_hi();
    let m = a.len();
    let up_len = 2 * m;
    let full_len = up_len + FILTER_LEN - 1;
    let mut rec = vec![0.0; full_len];
    for k in 0..m {
        let pos = 2 * k;
        for t in 0..FILTER_LEN {
            rec[pos + t] += a[k] * lo[t] + d[k] * hi[t];
        }
    }
    rec[2..2 + orig_len].to_vec()
}

/// Decomposes `x` into `levels` detail bands plus a final approximation.
pub fn dwt_decompose(x: &[f64], levels: usize) -> Result<WaveletDecomposition> {
    if x.len() < FILTER_LEN {
        return Err(Error::TooShort {
            got: x.len(),
            min: FILTER_LEN,
        });
    }
    if levels == 0 || levels > max_levels(x.len()) {
        return Err(Error::BadLevels {
            levels,
            len: x.len(),
        });
    }
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        lengths.push(approx.len());
        let (a, d) = analysis_step(&approx);
        approx = a;
        details.push(d);
    }
    Ok(WaveletDecomposition {
        approx,
        details,
        lengths,
    })
}

/// Inverts a decomposition back to the original signal.
pub fn dwt_reconstruct(dec: &WaveletDecomposition) -> Vec<f64> {
    let mut a = dec.approx.clone();
    for (d, &n) in dec.details.iter().zip(&dec.lengths).rev() {
        a = synthesis_step(&a, d, n);
    }
    a
}

/// Reconstructs the signal content of a single detail `level` (1-based).
pub fn dwt_component(dec: &WaveletDecomposition, level: usize) -> Result<Vec<f64>> {
    if level == 0 || level > dec.levels() {
        return Err(Error::BadLevel {
            level,
            depth: dec.levels(),
        });
    }
    let mut a = vec![0.0; dec.approx.len()];
    for (i, (d, &n)) in dec.details.iter().zip(&dec.lengths).enumerate().rev() {
        if i + 1 == level {
            a = synthesis_step(&a, d, n);
        } else {
            let zeros = vec![0.0; d.len()];
            a = synthesis_step(&a, &zeros, n);
        }
    }
    Ok(a)
}

/// Reconstructs only the final approximation band.
pub fn dwt_approx_component(dec: &WaveletDecomposition) -> Vec<f64> {
    let mut a = dec.approx.clone();
    for (d, &n) in dec.details.iter().zip(&dec.lengths).rev() {
        let zeros = vec![0.0; d.len()];
        a = synthesis_step(&a, &zeros, n);
    }
    a
}

/// Detail level whose nominal band `(fs / 2^(k+1), fs / 2^k]` contains
/// `freq` at sampling rate `fs`.
pub fn level_for_frequency(fs: f64, freq: f64) -> Result<usize> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::NonPositiveRate(fs));
    }
    if !(freq.is_finite() && freq > 0.0 && freq <= fs / 2.0) {
        return Err(Error::BadBand(freq, fs / 2.0));
    }
    let mut level = 1;
    while fs / 2f64.powi(level as i32 + 1) >= freq {
        level += 1;
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn reconstruction_is_exact() {
        let mut seed = 42;
        for n in [32usize, 64, 101, 351, 777, 2101, 4096] {
            let x: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
            let levels = max_levels(n).min(5);
            let dec = dwt_decompose(&x, levels).unwrap();
            let xr = dwt_reconstruct(&dec);
            assert_eq!(xr.len(), n);
            let worst = x.iter().zip(&xr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "n={n}: {worst}");
        }
    }

    #[test]
    fn coefficient_counts_per_level() {
        let x = vec![0.0; 100];
        let dec = dwt_decompose(&x, 3).unwrap();
        // each step keeps (n + 3) / 2 coefficients
        assert_eq!(dec.details[0].len(), 51);
        assert_eq!(dec.details[1].len(), 27);
        assert_eq!(dec.details[2].len(), 15);
        assert_eq!(dec.approx.len(), 15);
    }

    #[test]
    fn components_sum_to_original() {
        let mut seed = 7;
        let x: Vec<f64> = (0..777).map(|_| lcg(&mut seed)).collect();
        let dec = dwt_decompose(&x, 5).unwrap();
        let mut acc = dwt_approx_component(&dec);
        for level in 1..=5 {
            let c = dwt_component(&dec, level).unwrap();
            for (a, ci) in acc.iter_mut().zip(&c) {
                *a += ci;
            }
        }
        let amp = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let worst = x.iter().zip(&acc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10 * amp, "{worst}");
    }

    #[test]
    fn bad_level_is_rejected() {
        let x = vec![0.0; 64];
        let dec = dwt_decompose(&x, 3).unwrap();
        assert!(matches!(
            dwt_component(&dec, 4),
            Err(Error::BadLevel { level: 4, depth: 3 })
        ));
        assert!(matches!(dwt_component(&dec, 0), Err(Error::BadLevel { .. })));
    }

    #[test]
    fn bad_depth_and_short_input_are_rejected() {
        assert!(matches!(
            dwt_decompose(&[1.0, 2.0, 3.0], 1),
            Err(Error::TooShort { .. })
        ));
        let x = vec![0.0; 32];
        assert!(matches!(
            dwt_decompose(&x, 0),
            Err(Error::BadLevels { .. })
        ));
        assert!(matches!(
            dwt_decompose(&x, 9),
            Err(Error::BadLevels { .. })
        ));
    }

    #[test]
    fn level_selection_follows_nominal_bands() {
        assert_eq!(level_for_frequency(200.0, 10.0).unwrap(), 4);
        assert_eq!(level_for_frequency(10.0, 1.0).unwrap(), 3);
        // band edges are inclusive on the upper side
        assert_eq!(level_for_frequency(200.0, 12.5).unwrap(), 4);
        assert_eq!(level_for_frequency(200.0, 12.6).unwrap(), 3);
        assert_eq!(level_for_frequency(200.0, 100.0).unwrap(), 1);
        assert!(level_for_frequency(200.0, 120.0).is_err());
        assert!(level_for_frequency(200.0, 0.0).is_err());
    }

    #[test]
    fn ten_hz_energy_concentrates_in_level_four() {
        // reference fraction 0.6967 computed by direct filter-bank
        // enumeration of this exact signal
        let n = 2101;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0).sin()).collect();
        let dec = dwt_decompose(&x, 5).unwrap();
        let energies: Vec<f64> = dec
            .details
            .iter()
            .map(|d| d.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let total: f64 = energies.iter().sum();
        let frac = energies[3] / total;
        assert!((frac - 0.6967).abs() < 0.012, "level-4 fraction {frac}");
        let argmax = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 3);
    }

    #[test]
    fn ten_hz_component_tracks_the_original() {
        let n = 2101;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / 200.0).sin()).collect();
        let dec = dwt_decompose(&x, 5).unwrap();
        let c4 = dwt_component(&dec, 4).unwrap();
        let mx = x.iter().sum::<f64>() / n as f64;
        let mc = c4.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dc = 0.0;
        for (a, b) in x.iter().zip(&c4) {
            num += (a - mx) * (b - mc);
            dx += (a - mx) * (a - mx);
            dc += (b - mc) * (b - mc);
        }
        let corr = num / (dx * dc).sqrt();
        assert!(corr > 0.8, "correlation {corr}");
    }
}
