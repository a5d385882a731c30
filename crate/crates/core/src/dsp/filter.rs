//! IIR Butterworth design and causal application.
//!
//! Filters are designed from the analog prototype (poles at
//! `exp(i*pi*(2k + n + 1) / (2n))`), frequency-warped, mapped through the
//! bilinear transform, and stored as a cascade of second-order sections.
//! Application is causal Direct Form II Transposed; no forward-backward
//! pass, so relative phase across identically filtered channels is
//! preserved.

use crate::error::{Error, Result};
use num_complex::Complex64;

const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    Bandpass,
}

/// One second-order section with `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b0 + z_inv * (self.b1 + z_inv * self.b2);
        let den = 1.0 + z_inv * (self.a1 + z_inv * self.a2);
        num / den
    }

    /// Poles inside the unit circle (stability triangle test).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

/// Cascade of second-order sections designed for a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCascade {
    pub sections: Vec<Biquad>,
    pub fs: f64,
}

impl FilterCascade {
    /// Complex gain at `freq` Hz.
    pub fn frequency_response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq / self.fs;
        let z_inv = Complex64::new(0.0, -w).exp();
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .product()
    }

    /// Magnitude gain in dB at `freq` Hz.
    pub fn gain_db(&self, freq: f64) -> f64 {
        20.0 * self.frequency_response(freq).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// Causal filtering of `x`, Direct Form II Transposed per section.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.to_vec();
        for s in &self.sections {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b0 * xin + s1;
                s1 = s.b1 * xin - s.a1 * out + s2;
                s2 = s.b2 * xin - s.a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Like [`apply`](Self::apply) but checks the signal's sampling rate.
    pub fn apply_checked(&self, x: &[f64], fs: f64) -> Result<Vec<f64>> {
        if (fs - self.fs).abs() > 1e-9 * self.fs.max(1.0) {
            return Err(Error::RateMismatch {
                designed: self.fs,
                got: fs,
            });
        }
        Ok(self.apply(x))
    }
}

/// Designs a Butterworth filter as second-order sections.
///
/// `order` is the analog prototype order: a bandpass of order `n` has
/// `2n` poles. Band edges sit at exactly -3.01 dB.
pub fn design_butterworth(
    kind: FilterKind,
    order: usize,
    cutoffs: &[f64],
    fs: f64,
) -> Result<FilterCascade> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::NonPositiveRate(fs));
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let nyquist = fs / 2.0;
    let expected_cutoffs = match kind {
        FilterKind::Lowpass => 1,
        FilterKind::Bandpass => 2,
    };
    if cutoffs.len() != expected_cutoffs {
        return Err(Error::BadConfig(format!(
            "{:?} needs {} cutoff(s), got {}",
            kind,
            expected_cutoffs,
            cutoffs.len()
        )));
    }
    for &c in cutoffs {
        if !(c.is_finite() && c > 0.0 && c < nyquist) {
            return Err(Error::CutoffOutOfRange { cutoff: c, fs });
        }
    }
    if kind == FilterKind::Bandpass && cutoffs[0] >= cutoffs[1] {
        return Err(Error::CutoffOutOfRange {
            cutoff: cutoffs[0],
            fs,
        });
    }

    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / fs).tan();
    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::new(0.0, theta).exp()
        })
        .collect();

    let (analog_poles, zeros_at_one, reference_freq): (Vec<Complex64>, usize, f64) = match kind {
        FilterKind::Lowpass => {
            let wc = warp(cutoffs[0]);
            (proto.iter().map(|p| wc * p).collect(), 0, 0.0)
        }
        FilterKind::Bandpass => {
            let w1 = warp(cutoffs[0]);
            let w2 = warp(cutoffs[1]);
            let w0 = (w1 * w2).sqrt();
            let bw = w2 - w1;
            let mut poles = Vec::with_capacity(2 * order);
            for p in &proto {
                let b = bw * p;
                let disc = (b * b / 4.0 - w0 * w0).sqrt();
                poles.push(b / 2.0 + disc);
                poles.push(b / 2.0 - disc);
            }
            // center of the band, unwarped back to the digital axis
            let f0 = fs / std::f64::consts::PI * (w0 / fs2).atan();
            (poles, order, f0)
        }
    };

    // bilinear transform of poles; zeros land at z = +1 (from s = 0) and
    // z = -1 (from s = infinity)
    let z_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|s| (fs2 + s) / (fs2 - s))
        .collect();
    let n_poles = z_poles.len();
    let zeros_at_minus_one = n_poles - zeros_at_one;

    let mut sections = pair_into_sections(&z_poles, zeros_at_one, zeros_at_minus_one)?;

    let mut cascade = FilterCascade { sections: sections.clone(), fs };
    let gain = cascade.frequency_response(reference_freq).norm();
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::CutoffOutOfRange {
            cutoff: cutoffs[0],
            fs,
        });
    }
    let scale = 1.0 / gain;
    sections[0].b0 *= scale;
    sections[0].b1 *= scale;
    sections[0].b2 *= scale;
    cascade.sections = sections;

    debug_assert!(cascade.is_stable());
    Ok(cascade)
}

/// Groups conjugate pole pairs into biquads and distributes the zeros,
/// one `+1` and one `-1` per section while both kinds remain.
fn pair_into_sections(
    z_poles: &[Complex64],
    mut zeros_at_one: usize,
    mut zeros_at_minus_one: usize,
) -> Result<Vec<Biquad>> {
    let mut used = vec![false; z_poles.len()];
    let mut sections = Vec::new();
    for i in 0..z_poles.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p1 = z_poles[i];
        let partner = if p1.im.abs() < 1e-10 {
            (i + 1..z_poles.len()).find(|&j| !used[j] && z_poles[j].im.abs() < 1e-10)
        } else {
            (i + 1..z_poles.len())
                .find(|&j| !used[j] && (z_poles[j] - p1.conj()).norm() < 1e-6 * p1.norm().max(1.0))
        };
        let (a1, a2) = match partner {
            Some(j) => {
                used[j] = true;
                let p2 = z_poles[j];
                (-(p1 + p2).re, (p1 * p2).re)
            }
            None => {
                if p1.im.abs() > 1e-10 {
                    return Err(Error::UnsupportedOrder(z_poles.len()));
                }
                (-p1.re, 0.0)
            }
        };
        let second_order = partner.is_some();
        let (b0, b1, b2) = if second_order {
            match (zeros_at_one > 0, zeros_at_minus_one > 0) {
                (true, true) => {
                    zeros_at_one -= 1;
                    zeros_at_minus_one -= 1;
                    (1.0, 0.0, -1.0) // (z - 1)(z + 1)
                }
                (false, true) if zeros_at_minus_one >= 2 => {
                    zeros_at_minus_one -= 2;
                    (1.0, 2.0, 1.0) // (z + 1)^2
                }
                (true, false) if zeros_at_one >= 2 => {
                    zeros_at_one -= 2;
                    (1.0, -2.0, 1.0)
                }
                _ => (1.0, 0.0, 0.0),
            }
        } else if zeros_at_minus_one > 0 {
            zeros_at_minus_one -= 1;
            (1.0, 1.0, 0.0) // (z + 1)
        } else if zeros_at_one > 0 {
            zeros_at_one -= 1;
            (1.0, -1.0, 0.0)
        } else {
            (1.0, 0.0, 0.0)
        };
        sections.push(Biquad { b0, b1, b2, a1, a2 });
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bandpass_edges_sit_at_minus_3db() {
        let f = design_butterworth(FilterKind::Bandpass, 6, &[1.0, 40.0], 200.0).unwrap();
        assert!(close(f.gain_db(1.0), -3.0103, 0.1), "{}", f.gain_db(1.0));
        assert!(close(f.gain_db(40.0), -3.0103, 0.1), "{}", f.gain_db(40.0));
        assert!(f.is_stable());
        assert_eq!(f.sections.len(), 6);
    }

    #[test]
    fn lowpass_edge_sits_at_minus_3db() {
        let f = design_butterworth(FilterKind::Lowpass, 6, &[0.2], 10.0).unwrap();
        assert!(close(f.gain_db(0.2), -3.0103, 0.1), "{}", f.gain_db(0.2));
        assert!(close(f.gain_db(1e-4), 0.0, 1e-3));
        assert!(f.is_stable());
    }

    #[test]
    fn odd_order_lowpass_works() {
        let f = design_butterworth(FilterKind::Lowpass, 5, &[1.0], 10.0).unwrap();
        assert!(close(f.gain_db(1.0), -3.0103, 0.1));
        // 5th order rolls off at ~100 dB/decade
        assert!(f.gain_db(4.0) < -50.0);
    }

    #[test]
    fn stopband_attenuation_scales_with_order() {
        let f2 = design_butterworth(FilterKind::Lowpass, 2, &[1.0], 100.0).unwrap();
        let f6 = design_butterworth(FilterKind::Lowpass, 6, &[1.0], 100.0).unwrap();
        assert!(f6.gain_db(10.0) < f2.gain_db(10.0) - 40.0);
    }

    #[test]
    fn rejects_bad_cutoffs() {
        for cutoffs in [&[0.0][..], &[5.0], &[6.0]] {
            let r = design_butterworth(FilterKind::Lowpass, 4, cutoffs, 10.0);
            assert!(matches!(r, Err(Error::CutoffOutOfRange { .. })), "{cutoffs:?}");
        }
        let r = design_butterworth(FilterKind::Bandpass, 4, &[4.0, 2.0], 20.0);
        assert!(matches!(r, Err(Error::CutoffOutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_order() {
        assert!(matches!(
            design_butterworth(FilterKind::Lowpass, 0, &[1.0], 10.0),
            Err(Error::UnsupportedOrder(0))
        ));
        assert!(matches!(
            design_butterworth(FilterKind::Lowpass, 99, &[1.0], 10.0),
            Err(Error::UnsupportedOrder(99))
        ));
    }

    #[test]
    fn apply_is_linear() {
        let f = design_butterworth(FilterKind::Bandpass, 6, &[1.0, 40.0], 200.0).unwrap();
        let n = 512;
        let x: Vec<f64> = (0..n).map(|i| ((i * i) % 97) as f64 / 97.0 - 0.5).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 31) % 83) as f64 / 83.0 - 0.5).collect();
        let (a, b) = (2.5, -1.25);
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        let fx = f.apply(&x);
        let fy = f.apply(&y);
        let fm = f.apply(&mixed);
        for i in 0..n {
            assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let f = design_butterworth(FilterKind::Lowpass, 4, &[1.0], 10.0).unwrap();
        assert!(matches!(
            f.apply_checked(&[0.0; 16], 12.0),
            Err(Error::RateMismatch { .. })
        ));
        assert!(f.apply_checked(&[0.0; 16], 10.0).is_ok());
    }

    #[test]
    fn passband_tone_passes_stopband_tone_dies() {
        let f = design_butterworth(FilterKind::Bandpass, 6, &[1.0, 40.0], 200.0).unwrap();
        let n = 4000;
        let tone = |freq: f64| -> f64 {
            let x: Vec<f64> = (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 200.0).sin())
                .collect();
            let y = f.apply(&x);
            // steady-state RMS over the back half
            let tail = &y[n / 2..];
            (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
        };
        let rms_in = tone(10.0);
        let rms_out = tone(80.0);
        assert!(rms_in > 0.5, "{rms_in}");
        assert!(rms_out < 1e-3, "{rms_out}");
    }
}
