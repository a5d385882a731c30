//! Multimodal EEG/fNIRS connectivity toolkit.
//!
//! Processing stages, in pipeline order:
//!
//! ```text
//! raw series ──► preprocess (resample, filter, smooth)
//!            ──► epoch ──► region average
//!            ──► wavelet band + envelope ──► fuse (25 regions)
//!            ──► functional metrics (PCC, PLV, MSC)
//!            ──► multivariate model ──► directed metrics (dDTF, gPDC)
//!            ──► paired group statistics ──► reports
//! ```
//!
//! A synthetic-data module generates matching datasets so the whole
//! chain can run end to end without recorded data.

pub mod dsp;
pub mod ec;
pub mod error;
pub mod fc;
pub mod io;
pub mod mbll;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
