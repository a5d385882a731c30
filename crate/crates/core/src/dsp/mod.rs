//! Signal-processing primitives shared by the pipeline stages.

pub mod analytic;
pub mod filter;
pub mod resample;
pub mod savgol;
pub mod wavelet;

pub use analytic::{analytic_signal, envelope, instantaneous_phase};
pub use filter::{design_butterworth, FilterCascade, FilterKind};
pub use resample::{resample, resample_len};
pub use savgol::savitzky_golay;
pub use wavelet::{
    dwt_approx_component, dwt_component, dwt_decompose, dwt_reconstruct, level_for_frequency,
    max_levels, WaveletDecomposition,
};

use crate::error::{Error, Result};

/// Centers `x` and scales it to unit sample standard deviation.
///
/// `channel` and `epoch` only label the error when the input is constant.
pub fn zscore(x: &[f64], channel: &str, epoch: usize) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            got: x.len(),
            min: 2,
        });
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance {
            channel: channel.to_string(),
            epoch,
        });
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}
