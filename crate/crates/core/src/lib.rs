//! Stochastic kinetic models, SIS dynamics on a moving population, and
//! particle-based inference from partial volunteer observations.

pub mod epidemic;
pub mod error;
pub mod eval;
pub mod infer;
pub mod mobility;
pub mod observe;
pub mod rng;
pub mod skm;
pub mod world;

pub use error::{Error, Result};
