//! Benchmark of tabular deep-learning models for hospital risk prediction on
//! synthetic electronic health records.
//!
//! The pipeline runs in stages, each reading the previous stage's artifacts
//! from a run directory:
//!
//! 1. [`synthgen`] writes a seeded synthetic corpus with planted CPE signal.
//! 2. [`records`] parses it and builds task cohorts.
//! 3. [`network`] derives ward transfer and patient contact graphs.
//! 4. [`features`] fits per-fold encoders and emits feature matrices.
//! 5. [`train`] cross-validates the [`model`] backbones built on [`autodiff`].
//! 6. [`explain`] computes integrated gradients, rank aggregation and t-SNE.
//! 7. [`report`] renders tables and SVG charts.
//!
//! [`pipeline::Run`] ties the stages together.

pub mod autodiff;
pub mod error;
pub mod explain;
pub mod features;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod records;
pub mod report;
pub mod synthgen;
pub mod train;

pub use error::{Error, Result};
