//! Diagnostics along Adam trajectories.
//!
//! - [`diagnostics`]: the step-size constant `Δ_k`, the thresholds `R_k` and
//!   `Q_k`, the conditional mean `E_k(v)` and the concentration report.
//! - [`metrics`]: the potential sequence `z_k`, the progress metric
//!   `min{‖∇f‖²/√D0, ‖∇f‖/(2√(d D1))}` and outcome classification.
//! - [`invariants`]: per-step checks on instrumented logs and the randomized
//!   invariant suite.

pub mod diagnostics;
pub mod invariants;
pub mod metrics;

pub use diagnostics::{
    c_lower, c_upper, concentration_precondition, concentration_report, cond_mean_v, delta_k,
    failure_probability, thresholds, ConcentrationReport, DiagnosticsConstants,
};
pub use invariants::{
    draw_trial, invariant_suite, step_bound_factor, verify_invariants, verify_sign_steps,
    SuiteReport, TrialSpec, TrialViolation, Violation,
};
pub use metrics::{
    classify_outcome, classify_summary, potential_z, potential_z_epoch, theorem_metric,
    theorem_metric_unchecked, Outcome,
};
