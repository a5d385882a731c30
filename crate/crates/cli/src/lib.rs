//! Batch front end for the connectivity pipeline.
//!
//! Three stages, each a subcommand of the `neuroflux` binary: `synth`
//! writes a seeded synthetic cohort to disk, `run` turns a dataset into
//! per-subject and group connectivity matrices plus condition statistics,
//! and `report` renders every emitted matrix as an SVG heatmap after
//! verifying the manifest hashes.

pub mod config;
pub mod driver;
pub mod report;
