//! Numerical laboratory for Higgs bundles over model Hermitian manifolds.

pub mod analysis;
pub mod bundle;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod poisson;
pub mod presets;
mod small;

pub use error::{Error, Result};
