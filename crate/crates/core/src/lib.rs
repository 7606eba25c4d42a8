//! Local samplers with seed inverters for Ising models, and the low-degree
//! learning pipeline built on top of them.
//!
//! Everything is sized for exhaustive verification: exact tables over
//! `{±1}^n`, exact sampler output laws and exact preimages are available at
//! small `n` and serve as oracles for the randomized code paths.

pub mod analytics;
pub mod concepts;
pub mod error;
pub mod exec;
pub mod inference;
pub mod inverter;
pub mod learner;
pub mod model;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use model::{
    DependencyGraph, IsingModel, ModelDiagnostics, ModelFile, ModelKind, PartialConfiguration, Spin,
};
pub use rng::RngStream;
