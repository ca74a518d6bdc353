//! A desk-scale laboratory for the convergence/divergence phase transition of
//! vanilla Adam.
//!
//! The crate is organised around the objects an experiment touches:
//!
//! - [`problems`]: closed-form finite-sum problem families and tools to probe
//!   their smoothness and affine-variance constants.
//! - [`optimizer`]: Adam under with-replacement sampling, random shuffling
//!   and cyclic ordering, with a deterministic SplitMix64 index sampler.
//! - [`analysis`]: diagnostic constants, the concentration check for the
//!   second moment, the potential sequence, and per-step invariant checks.
//! - [`region`]: analytic divergence-region masks over the `(beta1, beta2)`
//!   plane.
//! - [`sweep`]: deterministic, parallel grid experiments persisted as CSV.
//! - [`cli`]: the `adam-lab` command line and the PGM heatmap writer.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory (`cargo run --example divergence_trajectory`, ...).

// Parameter checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod problems;
pub mod region;
pub mod rng;
pub mod sweep;

pub use error::{LabError, Result};
pub use optimizer::{
    run, AdamConfig, Budget, LogPolicy, OptimizerState, RunOptions, SamplingKind, SamplingScheme,
    Schedule, TrajectoryLog,
};
pub use problems::{make_problem, Family, FamilyParams, Problem};
