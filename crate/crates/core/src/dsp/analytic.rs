//! Analytic signal and amplitude envelope via the frequency domain.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Analytic signal of `x`: positive frequencies doubled, negative zeroed,
/// DC and (for even lengths) Nyquist kept as is.
pub fn analytic_signal(x: &[f64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::TooShort { got: n, min: 4 });
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);

    let half = n / 2;
    if n % 2 == 0 {
        for v in buf.iter_mut().take(half).skip(1) {
            *v *= 2.0;
        }
        for v in buf.iter_mut().skip(half + 1) {
            *v = Complex64::ZERO;
        }
    } else {
        for v in buf.iter_mut().take(half + 1).skip(1) {
            *v *= 2.0;
        }
        for v in buf.iter_mut().skip(half + 1) {
            *v = Complex64::ZERO;
        }
    }

    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(buf)
}

/// Instantaneous amplitude of `x`.
pub fn envelope(x: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(x)?.into_iter().map(|c| c.norm()).collect())
}

/// Instantaneous phase of `x` in radians.
pub fn instantaneous_phase(x: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(x)?.into_iter().map(|c| c.arg()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn too_short_is_rejected() {
        assert!(matches!(
            analytic_signal(&[1.0, 2.0, 3.0]),
            Err(Error::TooShort { got: 3, min: 4 })
        ));
    }

    #[test]
    fn real_part_reproduces_input() {
        let x: Vec<f64> = (0..257)
            .map(|i| (0.11 * i as f64).sin() + 0.3 * (0.041 * i as f64).cos())
            .collect();
        let a = analytic_signal(&x).unwrap();
        for (xi, ai) in x.iter().zip(&a) {
            assert!((xi - ai.re).abs() < 1e-10);
        }
    }

    #[test]
    fn cosine_envelope_is_unit() {
        // integer number of cycles keeps the spectrum on-bin
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * 20.0 * i as f64 / n as f64).cos()).collect();
        let e = envelope(&x).unwrap();
        for v in &e {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn am_envelope_recovers_modulator() {
        let n = 2000;
        let fs = 200.0;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let m = 1.0 + 0.5 * (2.0 * PI * 1.0 * t).sin();
                m * (2.0 * PI * 10.0 * t).cos()
            })
            .collect();
        let e = envelope(&x).unwrap();
        for i in 100..n - 100 {
            let t = i as f64 / fs;
            let m = 1.0 + 0.5 * (2.0 * PI * 1.0 * t).sin();
            assert!((e[i] - m).abs() < 0.02, "sample {i}: {} vs {m}", e[i]);
        }
    }

    #[test]
    fn phase_advances_at_carrier_rate() {
        let n = 512;
        let cycles = 32.0;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * cycles * i as f64 / n as f64).cos()).collect();
        let ph = instantaneous_phase(&x).unwrap();
        let step = 2.0 * PI * cycles / n as f64;
        for i in 10..n - 10 {
            let mut d = ph[i + 1] - ph[i];
            if d < -PI {
                d += 2.0 * PI;
            }
            assert!((d - step).abs() < 1e-6);
        }
    }
}
