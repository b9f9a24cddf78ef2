//! Minimal differentiable building blocks for the fixed simulator graph:
//! a named parameter store, dense kernels, MLPs with a per-layer FiLM slot,
//! Adam and a finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod linalg;
mod mlp;
mod params;
mod scalar;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, Probe};
pub use mlp::{modulate, Hook, HookGrads, HookTape, LayerNormTape, Mlp, MlpTape};
pub use params::{GroupId, GroupKind, Grads, ParamGroup, ParamStore};
pub use scalar::Real;
