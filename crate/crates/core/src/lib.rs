//! Evolvable central pattern generators for a simulated quadruped, with
//! rhythmic-input filters and gait/entrainment analysis.

pub mod analysis;
pub mod body;
pub mod error;
pub mod evolve;
pub mod genome;
pub mod neuro;
pub mod stimulus;

pub use error::{Error, Result};
