//! Multi-scale woven fabric appearance toolkit.
//!
//! The crate builds procedural weave geometry, evaluates a microflake fabric
//! shading model, aggregates it over pixel footprints with a Monte-Carlo
//! oracle, trains a small encoder/decoder network to replace the oracle with
//! a single query, and renders scenes on the CPU with either path.

pub mod bsdf;
pub mod dataset;
pub mod error;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod pattern;
pub mod render;

pub use error::{Error, Result};
