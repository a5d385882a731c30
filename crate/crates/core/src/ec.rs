//! MVAR model fitting and the directed spectral metrics built on it.
//!
//! A fused epoch set is modelled as a vector autoregression
//! `x(t) = A_1 x(t-1) + ... + A_p x(t-p) + w(t)` fitted by pooled
//! multi-trial least squares. From the fitted coefficients the transfer
//! function and spectral matrix yield gPDC (outflow) and dDTF (inflow).

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ConnectivityMatrix, FusedEpochSet, Metric};

/// Minimum regression rows per parameter before a fit is attempted.
pub const MIN_ROWS_PER_PARAM: usize = 10;

/// Relative pivot floor below which an LU factorization is treated as
/// singular.
const PIVOT_RTOL: f64 = 1e-13;

/// Fitted vector autoregression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MvarModel {
    pub p: usize,
    /// Coefficient matrices; `a[k]` multiplies `x(t-k-1)`.
    pub a: Vec<Array2<f64>>,
    /// Innovation covariance, symmetric.
    pub sigma: Array2<f64>,
    pub fs: f64,
    pub labels: Vec<String>,
    /// Pooled regression rows that entered the fit.
    pub n_samples_used: usize,
    /// Companion-matrix spectral radius of the fitted coefficients.
    pub spectral_radius: f64,
    /// False when the fitted process is not stationary (radius >= 1).
    /// The model is still returned so callers can inspect it.
    pub stable: bool,
}

impl MvarModel {
    pub fn n_channels(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Order-selection criterion for [`select_order`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderCriterion {
    Sbc,
    Aic,
}

/// Transfer function and spectral matrix of a fitted model on a
/// frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralSet {
    pub freqs: Vec<f64>,
    /// `I - sum_k A_k exp(-i 2 pi f k / fs)` per frequency.
    pub abar: Vec<DMatrix<Complex64>>,
    /// Inverse of `abar` per frequency.
    pub h: Vec<DMatrix<Complex64>>,
    /// Spectral matrix `H sigma H*` per frequency, Hermitian.
    pub s: Vec<DMatrix<Complex64>>,
    pub fs: f64,
    pub labels: Vec<String>,
}

/// Fitting strategy. The shipped estimator is pooled least squares;
/// alternates can plug in behind this trait.
pub trait MvarEstimator {
    fn fit(&self, f: &FusedEpochSet, p: usize) -> Result<MvarModel>;
}

/// Pooled multi-trial least squares (covariance method).
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquaresEstimator;

impl MvarEstimator for LeastSquaresEstimator {
    fn fit(&self, f: &FusedEpochSet, p: usize) -> Result<MvarModel> {
        fit_mvar(f, p)
    }
}

struct FitCore {
    /// `[A_1 .. A_p]` stacked horizontally, n x (n*p).
    b: DMatrix<f64>,
    /// Residual sum of squares, n x n.
    sse: DMatrix<f64>,
    rows: usize,
}

/// Accumulates the pooled normal equations and solves them.
///
/// The first `p` samples of every epoch serve only as regressors, never
/// as targets, so epoch boundaries introduce no spurious transitions.
fn fit_core(f: &FusedEpochSet, p: usize) -> Result<FitCore> {
    if p == 0 {
        return Err(Error::BadConfig("model order must be at least 1".into()));
    }
    let n = f.n_regions();
    let t_len = f.n_samples();
    let usable = if t_len > p {
        f.n_epochs() * (t_len - p)
    } else {
        0
    };
    let params = n * p;
    if usable < MIN_ROWS_PER_PARAM * params {
        return Err(Error::InsufficientData {
            rows: usable,
            params,
        });
    }

    let d = n * p;
    let mut g = DMatrix::<f64>::zeros(d, d);
    let mut c = DMatrix::<f64>::zeros(n, d);
    let mut z = DVector::<f64>::zeros(d);
    let mut y = DVector::<f64>::zeros(n);
    for k in 0..f.n_epochs() {
        for t in p..t_len {
            for lag in 1..=p {
                for i in 0..n {
                    z[(lag - 1) * n + i] = f.data[[k, i, t - lag]];
                }
            }
            for i in 0..n {
                y[i] = f.data[[k, i, t]];
            }
            g.ger(1.0, &z, &z, 1.0);
            c.ger(1.0, &y, &z, 1.0);
        }
    }

    let chol = g.clone().cholesky().ok_or(Error::InsufficientData {
        rows: usable,
        params,
    })?;
    let b = chol.solve(&c.transpose()).transpose();

    let mut sse = DMatrix::<f64>::zeros(n, n);
    let mut e = DVector::<f64>::zeros(n);
    for k in 0..f.n_epochs() {
        for t in p..t_len {
            for lag in 1..=p {
                for i in 0..n {
                    z[(lag - 1) * n + i] = f.data[[k, i, t - lag]];
                }
            }
            for i in 0..n {
                y[i] = f.data[[k, i, t]];
            }
            e.gemv(-1.0, &b, &z, 0.0);
            e += &y;
            sse.ger(1.0, &e, &e, 1.0);
        }
    }

    Ok(FitCore {
        b,
        sse,
        rows: usable,
    })
}

/// Fits an order-`p` model to every epoch jointly.
pub fn fit_mvar(f: &FusedEpochSet, p: usize) -> Result<MvarModel> {
    let n = f.n_regions();
    let core = fit_core(f, p)?;
    let dof = core.rows - n * p;
    let mut sigma = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = (core.sse[(i, j)] + core.sse[(j, i)]) / 2.0 / dof as f64;
            sigma[[i, j]] = v;
        }
    }

    let mut a = Vec::with_capacity(p);
    for lag in 0..p {
        let mut ak = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                ak[[i, j]] = core.b[(i, lag * n + j)];
            }
        }
        a.push(ak);
    }

    let radius = companion_radius(&a);
    Ok(MvarModel {
        p,
        a,
        sigma,
        fs: f.fs_effective,
        labels: f.labels.clone(),
        n_samples_used: core.rows,
        spectral_radius: radius,
        stable: radius < 1.0,
    })
}

/// Spectral radius of the companion matrix of a coefficient set.
pub fn companion_radius(a: &[Array2<f64>]) -> f64 {
    let p = a.len();
    let n = a[0].nrows();
    let d = n * p;
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for (lag, ak) in a.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                comp[(i, lag * n + j)] = ak[[i, j]];
            }
        }
    }
    for i in n..d {
        comp[(i, i - n)] = 1.0;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

/// Returns the order in `1..=p_max` minimizing the criterion; ties go to
/// the smallest order.
pub fn select_order(f: &FusedEpochSet, p_max: usize, criterion: OrderCriterion) -> Result<usize> {
    if p_max == 0 {
        return Err(Error::BadConfig("p_max must be at least 1".into()));
    }
    let n = f.n_regions();
    let mut best: Option<(f64, usize)> = None;
    for p in 1..=p_max {
        let core = fit_core(f, p)?;
        let rows = core.rows as f64;
        let scaled = core.sse.map(|v| v / rows);
        let chol = scaled.cholesky().ok_or(Error::InsufficientData {
            rows: core.rows,
            params: n * p,
        })?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let k = (p * n * n) as f64;
        let crit = match criterion {
            OrderCriterion::Sbc => log_det + rows.ln() / rows * k,
            OrderCriterion::Aic => log_det + 2.0 / rows * k,
        };
        if best.map_or(true, |(b, _)| crit < b) {
            best = Some((crit, p));
        }
    }
    Ok(best.expect("p_max >= 1 guarantees a candidate").1)
}

/// Evaluates the transfer function and spectral matrix on `n_freqs`
/// evenly spaced frequencies spanning `band` (endpoints included).
pub fn spectra(m: &MvarModel, n_freqs: usize, band: (f64, f64)) -> Result<SpectralSet> {
    if n_freqs < 2 {
        return Err(Error::BadConfig(format!(
            "need at least 2 frequencies, got {n_freqs}"
        )));
    }
    let nyquist = m.fs / 2.0;
    let (lo, hi) = band;
    if !(lo >= 0.0 && lo < hi && hi <= nyquist * (1.0 + 1e-12)) {
        return Err(Error::BadBand(lo, hi));
    }
    let n = m.n_channels();
    let sigma_c = DMatrix::from_fn(n, n, |i, j| Complex64::new(m.sigma[[i, j]], 0.0));

    let mut freqs = Vec::with_capacity(n_freqs);
    let mut abar_all = Vec::with_capacity(n_freqs);
    let mut h_all = Vec::with_capacity(n_freqs);
    let mut s_all = Vec::with_capacity(n_freqs);
    for idx in 0..n_freqs {
        let f = lo + (hi - lo) * idx as f64 / (n_freqs - 1) as f64;
        freqs.push(f);
        let z = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f / m.fs);
        let mut abar = DMatrix::<Complex64>::identity(n, n);
        let mut zk = Complex64::new(1.0, 0.0);
        for ak in &m.a {
            zk *= z;
            for i in 0..n {
                for j in 0..n {
                    abar[(i, j)] -= zk * ak[[i, j]];
                }
            }
        }
        let h = invert_monitored(&abar).ok_or(Error::SingularAbar { freq: f })?;
        let mut s = &h * &sigma_c * h.adjoint();
        let sh = s.adjoint();
        s = (s + sh) * Complex64::new(0.5, 0.0);
        abar_all.push(abar);
        h_all.push(h);
        s_all.push(s);
    }
    Ok(SpectralSet {
        freqs,
        abar: abar_all,
        h: h_all,
        s: s_all,
        fs: m.fs,
        labels: m.labels.clone(),
    })
}

/// LU inverse that rejects matrices whose pivot spread indicates
/// numerical singularity.
fn invert_monitored(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let lu = m.clone().lu();
    let diag = lu.u().diagonal();
    let max_p = diag.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let min_p = diag.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if !(max_p > 0.0 && min_p > max_p * PIVOT_RTOL) {
        return None;
    }
    lu.try_inverse()
}

fn band_indices(freqs: &[f64], band: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::BadBand(lo, hi));
    }
    let tol = 1e-9;
    let idx: Vec<usize> = freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| **f >= lo - tol && **f <= hi + tol)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::BadBand(lo, hi));
    }
    Ok(idx)
}

/// Generalized partial directed coherence, band-averaged.
///
/// Entry `(i, j)` is the outflow from region `j` to region `i`. At every
/// frequency each column has unit sum of squares; the innovation-variance
/// weighting makes the measure invariant to per-channel rescaling.
pub fn gpdc(s: &SpectralSet, m: &MvarModel, band: (f64, f64)) -> Result<ConnectivityMatrix> {
    let n = m.n_channels();
    let mut inv_sd = Vec::with_capacity(n);
    for i in 0..n {
        let v = m.sigma[[i, i]];
        if !(v > 0.0) {
            return Err(Error::ZeroNoiseVariance(i));
        }
        inv_sd.push(1.0 / v.sqrt());
    }
    let idx = band_indices(&s.freqs, band)?;
    let mut acc = Array2::<f64>::zeros((n, n));
    for &k in &idx {
        let abar = &s.abar[k];
        for j in 0..n {
            let mut denom = 0.0;
            for i in 0..n {
                let w = abar[(i, j)].norm() * inv_sd[i];
                denom += w * w;
            }
            let denom = denom.sqrt();
            for i in 0..n {
                acc[[i, j]] += abar[(i, j)].norm() * inv_sd[i] / denom;
            }
        }
    }
    let count = idx.len() as f64;
    let values = acc.map(|v| (v / count).clamp(0.0, 1.0));
    ConnectivityMatrix::new(Metric::Gpdc, s.labels.clone(), values)
}

/// Full-frequency DTF power fractions `|H_ij(f)|^2` normalized per sink
/// row over the whole grid and all sources, so each row sums to one
/// across frequencies and columns.
pub fn ffdtf_squared(s: &SpectralSet) -> Vec<Array2<f64>> {
    let n = s.labels.len();
    let mut row_norm = vec![0.0; n];
    for h in &s.h {
        for i in 0..n {
            for j in 0..n {
                row_norm[i] += h[(i, j)].norm_sqr();
            }
        }
    }
    s.h.iter()
        .map(|h| Array2::from_shape_fn((n, n), |(i, j)| h[(i, j)].norm_sqr() / row_norm[i]))
        .collect()
}

/// Direct directed transfer function, band-averaged.
///
/// The full-frequency DTF is weighted by the partial coherence derived
/// from the inverse spectral matrix, which suppresses indirect (relayed)
/// inflow. Entry `(i, j)` is the direct inflow to region `i` from `j`.
pub fn ddtf(s: &SpectralSet, band: (f64, f64)) -> Result<ConnectivityMatrix> {
    let n = s.labels.len();
    let idx = band_indices(&s.freqs, band)?;
    let eta2 = ffdtf_squared(s);
    let mut acc = Array2::<f64>::zeros((n, n));
    for &k in &idx {
        let freq = s.freqs[k];
        let m = invert_monitored(&s.s[k]).ok_or(Error::SingularSpectrum { freq })?;
        let mh = m.adjoint();
        let m = (m + mh) * Complex64::new(0.5, 0.0);
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let v = m[(i, i)].re;
            if !(v > 0.0) {
                return Err(Error::SingularSpectrum { freq });
            }
            diag.push(v);
        }
        for i in 0..n {
            for j in 0..n {
                let chi = m[(i, j)].norm() / (diag[i] * diag[j]).sqrt();
                acc[[i, j]] += eta2[k][[i, j]].sqrt() * chi;
            }
        }
    }
    let count = idx.len() as f64;
    let values = acc.map(|v| (v / count).clamp(0.0, 1.0));
    ConnectivityMatrix::new(Metric::Ddtf, s.labels.clone(), values)
}

/// Elementwise mean of same-shaped matrices of one metric.
pub fn group_mean(matrices: &[ConnectivityMatrix]) -> Result<ConnectivityMatrix> {
    let first = matrices.first().ok_or(Error::TooShort { got: 0, min: 1 })?;
    for m in &matrices[1..] {
        if m.metric != first.metric {
            return Err(Error::MetricMismatch(
                first.metric.to_string(),
                m.metric.to_string(),
            ));
        }
        if m.labels != first.labels {
            return Err(Error::LengthMismatch {
                expected: first.labels.len(),
                got: m.labels.len(),
                context: "group mean labels".into(),
            });
        }
    }
    let mut acc = Array2::<f64>::zeros(first.values.raw_dim());
    for m in matrices {
        acc += &m.values;
    }
    acc /= matrices.len() as f64;
    ConnectivityMatrix::new(first.metric, first.labels.clone(), acc)
}
