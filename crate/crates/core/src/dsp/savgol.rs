//! Savitzky-Golay least-squares polynomial smoothing.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Smooths `x` with a moving least-squares polynomial fit.
///
/// `window` must be odd and no longer than the signal; `polyorder` must be
/// smaller than `window`. Interior samples use the central fit; the first
/// and last half-windows are filled by evaluating the polynomial fitted to
/// the first and last full window, so a polynomial of degree `polyorder`
/// or less passes through unchanged everywhere.
pub fn savitzky_golay(x: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::BadWindow(format!("window {window} must be odd")));
    }
    if window > x.len() {
        return Err(Error::BadWindow(format!(
            "window {window} exceeds signal length {}",
            x.len()
        )));
    }
    if polyorder >= window {
        return Err(Error::BadWindow(format!(
            "polyorder {polyorder} must be below window {window}"
        )));
    }
    let half = window / 2;
    let ncoef = polyorder + 1;

    // design matrix over sample offsets -half..=half, increasing powers
    let a = DMatrix::from_fn(window, ncoef, |r, c| {
        let t = r as f64 - half as f64;
        t.powi(c as i32)
    });
    let at = a.transpose();
    let gram = (&at * &a)
        .try_inverse()
        .ok_or_else(|| Error::BadWindow("degenerate design matrix".into()))?;
    let proj = gram * at; // ncoef x window; row 0 evaluates the fit at t = 0

    let n = x.len();
    let mut y = vec![0.0; n];
    for i in half..n - half {
        let mut acc = 0.0;
        for (j, p) in proj.row(0).iter().enumerate() {
            acc += p * x[i - half + j];
        }
        y[i] = acc;
    }

    // fit the first and last full window, extrapolate the edges
    let eval = |coef: &[f64], t: f64| -> f64 {
        let mut acc = 0.0;
        for &c in coef.iter().rev() {
            acc = acc * t + c;
        }
        acc
    };
    let fit = |seg: &[f64]| -> Vec<f64> {
        let mut coef = vec![0.0; ncoef];
        for (c, v) in coef.iter_mut().enumerate() {
            *v = (0..window).map(|j| proj[(c, j)] * seg[j]).sum();
        }
        coef
    };
    let head = fit(&x[..window]);
    let tail = fit(&x[n - window..]);
    for i in 0..half {
        y[i] = eval(&head, i as f64 - half as f64);
        y[n - half + i] = eval(&tail, (i + 1) as f64);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_cubic_exactly() {
        let x: Vec<f64> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1 - 2.0;
                0.5 * t * t * t - 2.0 * t * t + t - 3.0
            })
            .collect();
        let y = savitzky_golay(&x, 11, 3).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn smooths_noise() {
        // deterministic pseudo-noise around a slow sine
        let x: Vec<f64> = (0..200)
            .map(|i| {
                let t = i as f64 / 10.0;
                (0.2 * t).sin() + 0.3 * ((((i as u64) * 2654435761) % 1000) as f64 / 1000.0 - 0.5)
            })
            .collect();
        let y = savitzky_golay(&x, 11, 3).unwrap();
        let clean: Vec<f64> = (0..200).map(|i| (0.2 * i as f64 / 10.0).sin()).collect();
        let err = |v: &[f64]| -> f64 {
            v.iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        assert!(err(&y) < 0.5 * err(&x));
    }

    #[test]
    fn rejects_bad_windows() {
        let x = vec![0.0; 20];
        assert!(matches!(
            savitzky_golay(&x, 10, 3),
            Err(Error::BadWindow(_))
        ));
        assert!(matches!(
            savitzky_golay(&x, 21, 3),
            Err(Error::BadWindow(_))
        ));
        assert!(matches!(
            savitzky_golay(&x, 11, 11),
            Err(Error::BadWindow(_))
        ));
    }

    #[test]
    fn window_equal_to_signal_is_allowed() {
        let x: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let y = savitzky_golay(&x, 11, 3).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
