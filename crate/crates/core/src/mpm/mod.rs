//! Explicit 2D material point method with Mohr-Coulomb plasticity.
//!
//! This is the ground-truth generator for the learned simulator: an
//! update-stress-last (USL) scheme on a regular background grid with linear
//! shape functions, plane-strain Hooke elasticity and an invariant-space
//! Mohr-Coulomb return map.

mod constitutive;
mod material;
mod solver;

pub use constitutive::{
    compute_invariants, lode_factor, mc_yield, return_map, Stress, StressInvariants,
};
pub use material::MaterialParams;
pub use solver::{
    check_cfl, generate_trajectory, step, MpmConfig, MpmSolver, MpmState, StepReport,
};
