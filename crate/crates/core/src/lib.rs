//! Material-conditioned graph network simulator for granular flows, with
//! an MPM data oracle, FiLM adaptation and a Bayesian inverse solver.

pub mod analysis;
pub mod dataio;
pub mod error;
pub mod film;
pub mod gns;
pub mod graph;
pub mod inverse;
pub mod metrics;
pub mod mpm;
pub mod nn;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
