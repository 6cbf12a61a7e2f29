//! Conditional simulation of max-stable random fields.

pub mod condsim;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod gibbs;
pub mod intensity;
pub mod margins;
pub mod partition;
pub mod rectprob;
pub mod rng;
pub mod special;
mod spectral;
pub mod summary;

pub use error::{Error, Result};
