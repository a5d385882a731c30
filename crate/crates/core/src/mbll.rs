//! Modified Beer-Lambert conversion from optical density to hemoglobin
//! concentration changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TimeSeries;

const MIN_DET: f64 = 1e-6;

/// Optical constants of one source-detector pair.
///
/// `extinction[i][0]` and `extinction[i][1]` are the HbO and HbR molar
/// extinction coefficients at `wavelengths[i]`, in 1/(mM·cm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    /// Wavelengths in nm, shorter one first by convention.
    pub wavelengths: [f64; 2],
    pub extinction: [[f64; 2]; 2],
    /// Differential pathlength factor at each wavelength.
    pub dpf: [f64; 2],
    /// Source-detector distance in cm.
    pub separation: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        toml::from_str(include_str!("../data/optical_default.toml"))
            .expect("bundled optical defaults parse")
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .wavelengths
            .iter()
            .chain(self.dpf.iter())
            .chain(self.extinction.iter().flatten())
            .chain(std::iter::once(&self.separation));
        for v in all {
            if !v.is_finite() {
                return Err(Error::BadConfig("non-finite optical constant".into()));
            }
        }
        if self.separation <= 0.0 {
            return Err(Error::BadConfig(format!(
                "separation must be positive, got {}",
                self.separation
            )));
        }
        if self.dpf.iter().any(|&d| d <= 0.0) {
            return Err(Error::BadConfig(format!(
                "dpf must be positive, got {:?}",
                self.dpf
            )));
        }
        let det = self.det();
        if det.abs() <= MIN_DET {
            return Err(Error::SingularExtinction(det.abs()));
        }
        Ok(())
    }

    fn det(&self) -> f64 {
        let e = &self.extinction;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }
}

/// Solves the two-wavelength system for each sample, returning
/// (ΔHbO, ΔHbR) in mM.
pub fn od_to_hemoglobin(
    od1: &TimeSeries,
    od2: &TimeSeries,
    cfg: &OpticalConfig,
) -> Result<(TimeSeries, TimeSeries)> {
    cfg.validate()?;
    if od1.samples.len() != od2.samples.len() {
        return Err(Error::LengthMismatch {
            expected: od1.samples.len(),
            got: od2.samples.len(),
            context: "optical density pair".into(),
        });
    }
    if od1.fs != od2.fs {
        return Err(Error::RateMismatch {
            designed: od1.fs,
            got: od2.fs,
        });
    }
    od1.validate()?;
    od2.validate()?;

    let e = &cfg.extinction;
    let det = cfg.det();
    let l1 = cfg.separation * cfg.dpf[0];
    let l2 = cfg.separation * cfg.dpf[1];
    let n = od1.samples.len();
    let mut hbo = Vec::with_capacity(n);
    let mut hbr = Vec::with_capacity(n);
    for (a, b) in od1.samples.iter().zip(&od2.samples) {
        let y1 = a / l1;
        let y2 = b / l2;
        hbo.push((y1 * e[1][1] - y2 * e[0][1]) / det);
        hbr.push((y2 * e[0][0] - y1 * e[1][0]) / det);
    }
    Ok((
        TimeSeries::new(hbo, od1.fs, "mM"),
        TimeSeries::new(hbr, od1.fs, "mM"),
    ))
}

/// Optical density change relative to the mean intensity of the series.
/// Input samples must be strictly positive.
pub fn intensity_to_od(intensity: &TimeSeries) -> Result<TimeSeries> {
    intensity.validate()?;
    if intensity.samples.is_empty() {
        return Err(Error::TooShort { got: 0, min: 1 });
    }
    if let Some(i) = intensity.samples.iter().position(|&v| v <= 0.0) {
        return Err(Error::NonFinite { channel: 0, index: i });
    }
    let mean = intensity.samples.iter().sum::<f64>() / intensity.samples.len() as f64;
    let od = intensity.samples.iter().map(|v| -(v / mean).log10()).collect();
    Ok(TimeSeries::new(od, intensity.fs, "OD"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 10.4, "OD")
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = OpticalConfig::default();
        let z = series(vec![0.0; 50]);
        let (hbo, hbr) = od_to_hemoglobin(&z, &z, &cfg).unwrap();
        assert!(hbo.samples.iter().all(|&v| v == 0.0));
        assert!(hbr.samples.iter().all(|&v| v == 0.0));
        assert_eq!(hbo.unit, "mM");
    }

    #[test]
    fn identity_system_passes_od_through() {
        let cfg = OpticalConfig {
            wavelengths: [760.0, 850.0],
            extinction: [[1.0, 0.0], [0.0, 1.0]],
            dpf: [1.0, 2.0],
            separation: 0.5,
        };
        // d * dpf = [0.5, 1.0]
        let od1 = series(vec![0.2, -0.4, 0.1]);
        let od2 = series(vec![0.3, 0.0, -0.7]);
        let (hbo, hbr) = od_to_hemoglobin(&od1, &od2, &cfg).unwrap();
        for (h, o) in hbo.samples.iter().zip(&od1.samples) {
            assert!((h - o / 0.5).abs() < 1e-15);
        }
        for (h, o) in hbr.samples.iter().zip(&od2.samples) {
            assert!((h - o / 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn random_round_trips_recover_concentrations() {
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            // diagonally dominant keeps the system well conditioned
            let e = [
                [1.0 + next(), 0.5 * next()],
                [0.5 * next(), 1.0 + next()],
            ];
            let cfg = OpticalConfig {
                wavelengths: [760.0, 850.0],
                extinction: e,
                dpf: [4.0 + 4.0 * next(), 4.0 + 4.0 * next()],
                separation: 1.0 + 4.0 * next(),
            };
            let hbo: Vec<f64> = (0..16).map(|_| 2.0 * next() - 1.0).collect();
            let hbr: Vec<f64> = (0..16).map(|_| 2.0 * next() - 1.0).collect();
            let l1 = cfg.separation * cfg.dpf[0];
            let l2 = cfg.separation * cfg.dpf[1];
            let od1: Vec<f64> = hbo
                .iter()
                .zip(&hbr)
                .map(|(o, r)| (e[0][0] * o + e[0][1] * r) * l1)
                .collect();
            let od2: Vec<f64> = hbo
                .iter()
                .zip(&hbr)
                .map(|(o, r)| (e[1][0] * o + e[1][1] * r) * l2)
                .collect();
            let (ho, hr) = od_to_hemoglobin(&series(od1), &series(od2), &cfg).unwrap();
            for (got, want) in ho.samples.iter().zip(&hbo).chain(hr.samples.iter().zip(&hbr)) {
                worst = worst.max((got - want).abs());
            }
        }
        assert!(worst < 1e-12, "worst round-trip error {worst}");
    }

    #[test]
    fn conversion_is_linear() {
        let cfg = OpticalConfig::default();
        let od1 = series(vec![0.11, -0.2, 0.05, 0.4]);
        let od2 = series(vec![-0.3, 0.07, 0.2, -0.1]);
        let scaled1 = series(od1.samples.iter().map(|v| 3.5 * v).collect());
        let scaled2 = series(od2.samples.iter().map(|v| 3.5 * v).collect());
        let (a, b) = od_to_hemoglobin(&od1, &od2, &cfg).unwrap();
        let (sa, sb) = od_to_hemoglobin(&scaled1, &scaled2, &cfg).unwrap();
        for (x, y) in a.samples.iter().zip(&sa.samples).chain(b.samples.iter().zip(&sb.samples)) {
            assert!((3.5 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_extinction_is_rejected() {
        let cfg = OpticalConfig {
            wavelengths: [760.0, 850.0],
            extinction: [[1.0, 2.0], [0.5, 1.0]],
            dpf: [6.0, 6.0],
            separation: 3.0,
        };
        let z = series(vec![0.0; 4]);
        assert!(matches!(
            od_to_hemoglobin(&z, &z, &cfg),
            Err(Error::SingularExtinction(_))
        ));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let cfg = OpticalConfig::default();
        let a = series(vec![0.0; 5]);
        let b = series(vec![0.0; 6]);
        assert!(matches!(
            od_to_hemoglobin(&a, &b, &cfg),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn intensity_conversion_references_the_mean() {
        let i = TimeSeries::new(vec![100.0, 100.0, 100.0], 10.4, "a.u.");
        let od = intensity_to_od(&i).unwrap();
        assert!(od.samples.iter().all(|&v| v.abs() < 1e-15));

        let i = TimeSeries::new(vec![90.0, 100.0, 110.0], 10.4, "a.u.");
        let od = intensity_to_od(&i).unwrap();
        assert!((od.samples[0] - -(0.9_f64).log10()).abs() < 1e-15);
        assert!(od.samples[2] < 0.0);

        let bad = TimeSeries::new(vec![1.0, 0.0, 2.0], 10.4, "a.u.");
        assert!(matches!(
            intensity_to_od(&bad),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }
}
