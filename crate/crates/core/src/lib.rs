//! Exact analysis of the trickle-down and landslide sandpile Markov chains
//! on arborescences.

pub mod arborescence;
pub mod chain;
pub mod configuration;
pub mod convergence;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod monoid;
pub mod operators;
pub mod polyalg;
pub mod rational;

pub use arborescence::{Arborescence, VertexSet, VertexSpec};
pub use configuration::{Configuration, StateSpace};
pub use error::{Result, SandpileError};
pub use rational::Q;
