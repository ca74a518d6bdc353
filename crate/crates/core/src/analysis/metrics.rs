use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::optimizer::{RunStatus, RunSummary, TrajectoryLog};

/// `z_k = (x_k − β1ⁿ x_{k−n}) / (1 − β1ⁿ)` from a history whose last entry is
/// `x_k` (at least `n + 1` iterates).
pub fn potential_z(history: &[Vec<f64>], beta1: f64, n: usize) -> Result<Vec<f64>> {
    if history.len() < n + 1 {
        return Err(LabError::InsufficientHistory {
            need: n + 1,
            have: history.len(),
        });
    }
    let last = history.len() - 1;
    affine_z(&history[last], &history[last - n], beta1, n)
}

/// Epoch form for the shuffled/cyclic recursion:
/// `z_k = (x_{k,0} − β1ⁿ x_{k−1,0}) / (1 − β1ⁿ)` from the epoch-start iterates
/// (last entry is `x_{k,0}`).
pub fn potential_z_epoch(epoch_starts: &[Vec<f64>], beta1: f64, n: usize) -> Result<Vec<f64>> {
    if epoch_starts.len() < 2 {
        return Err(LabError::InsufficientHistory {
            need: 2,
            have: epoch_starts.len(),
        });
    }
    let last = epoch_starts.len() - 1;
    affine_z(&epoch_starts[last], &epoch_starts[last - 1], beta1, n)
}

fn affine_z(current: &[f64], lagged: &[f64], beta1: f64, n: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(LabError::param(format!(
            "beta1 must lie in [0, 1), got {beta1}"
        )));
    }
    if current.len() != lagged.len() {
        return Err(LabError::Dimension {
            expected: current.len(),
            got: lagged.len(),
        });
    }
    let bn = beta1.powi(n as i32);
    Ok(current
        .iter()
        .zip(lagged)
        .map(|(x, y)| (x - bn * y) / (1.0 - bn))
        .collect())
}

/// `min{‖g‖²/√D0, ‖g‖/(2√(d·D1))}`.
///
/// An arm whose constant is zero counts as `+∞`, except that a zero gradient
/// always gives 0.
pub fn theorem_metric(grad: &[f64], d0: f64, d1: f64, d: usize) -> Result<f64> {
    if d0 == 0.0 && d1 == 0.0 {
        return Err(LabError::contract("D0 and D1 must not both be zero"));
    }
    if !(d0 >= 0.0 && d1 >= 0.0) {
        return Err(LabError::param("D0 and D1 must be nonnegative"));
    }
    let g = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(theorem_metric_unchecked(g, d0, d1, d))
}

/// [`theorem_metric`] from a precomputed gradient norm, without validation.
pub fn theorem_metric_unchecked(grad_norm: f64, d0: f64, d1: f64, d: usize) -> f64 {
    if grad_norm == 0.0 {
        return 0.0;
    }
    let first = if d0 > 0.0 {
        grad_norm * grad_norm / d0.sqrt()
    } else {
        f64::INFINITY
    };
    let second = if d1 > 0.0 {
        grad_norm / (2.0 * (d as f64 * d1).sqrt())
    } else {
        f64::INFINITY
    };
    first.min(second)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Converged,
    Plateau,
    Diverged,
    /// The cell's configuration was invalid and nothing ran (sweeps only).
    Skipped,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Converged => "converged",
            Outcome::Plateau => "plateau",
            Outcome::Diverged => "diverged",
            Outcome::Skipped => "skipped",
        })
    }
}

impl FromStr for Outcome {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Outcome::Converged),
            "plateau" => Ok(Outcome::Plateau),
            "diverged" => Ok(Outcome::Diverged),
            "skipped" => Ok(Outcome::Skipped),
            other => Err(LabError::param(format!("unknown outcome `{other}`"))),
        }
    }
}

/// Classifies a finished run:
///
/// - `Diverged` if the run stopped on the cutoff, produced non-finite
///   values, or ends with some `|x_l| > cutoff`;
/// - `Converged` if the mean optimality gap `‖x − x*‖` over the last 10% of
///   steps (or the mean full-gradient norm when `x*` is unknown) is at most
///   `tol_converge`;
/// - `Plateau` otherwise.
///
/// The tail mean, rather than the whole-run minimum, keeps the starting point
/// and transient crossings of `x*` from counting as convergence.
pub fn classify_outcome(log: &TrajectoryLog, tol_converge: f64, cutoff_diverge: f64) -> Outcome {
    classify_summary(&log.summary, tol_converge, cutoff_diverge)
}

/// [`classify_outcome`] on a summary alone.
pub fn classify_summary(summary: &RunSummary, tol_converge: f64, cutoff_diverge: f64) -> Outcome {
    let blown = matches!(summary.status, RunStatus::Diverged { .. })
        || !summary.final_grad_norm.is_finite()
        || summary
            .final_x
            .iter()
            .any(|x| !x.is_finite() || x.abs() > cutoff_diverge);
    if blown {
        return Outcome::Diverged;
    }
    let measure = summary.tail_mean_gap.unwrap_or(summary.tail_mean_grad_norm);
    if measure <= tol_converge {
        Outcome::Converged
    } else {
        Outcome::Plateau
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{
        run, AdamConfig, Budget, LogPolicy, RunOptions, SamplingScheme, Schedule,
    };
    use crate::problems::{make_problem, Family, FamilyParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn potential_examples() {
        let h = vec![vec![1.0], vec![3.0]];
        assert_eq!(potential_z(&h, 0.5, 1).unwrap(), vec![5.0]);
        let h = vec![vec![9.0], vec![4.0], vec![7.0]];
        assert_eq!(potential_z(&h, 0.0, 2).unwrap(), vec![7.0]);
        let c = vec![vec![2.5]; 4];
        assert_relative_eq!(
            potential_z(&c, 0.7, 3).unwrap()[0],
            2.5,
            max_relative = 1e-14
        );
        assert!(matches!(
            potential_z(&c, 0.7, 4),
            Err(LabError::InsufficientHistory { need: 5, have: 4 })
        ));
        let starts = vec![vec![1.0], vec![3.0]];
        assert_relative_eq!(
            potential_z_epoch(&starts, 0.5, 2).unwrap()[0],
            (3.0 - 0.25) / 0.75
        );
    }

    #[test]
    fn metric_examples() {
        assert_relative_eq!(theorem_metric(&[1.0], 4.0, 1.0, 1).unwrap(), 0.5);
        assert_eq!(theorem_metric(&[0.0], 4.0, 1.0, 1).unwrap(), 0.0);
        assert_eq!(theorem_metric(&[0.0], 0.0, 1.0, 1).unwrap(), 0.0);
        assert_relative_eq!(
            theorem_metric(&[2.0, 0.0, 0.0, 0.0], 0.0, 1.0, 4).unwrap(),
            0.5
        );
        assert!(matches!(
            theorem_metric(&[1.0], 0.0, 0.0, 1),
            Err(LabError::Contract(_))
        ));
    }

    #[test]
    fn outcome_round_trips() {
        for o in [
            Outcome::Converged,
            Outcome::Plateau,
            Outcome::Diverged,
            Outcome::Skipped,
        ] {
            assert_eq!(o.to_string().parse::<Outcome>().unwrap(), o);
        }
    }

    fn divpw_run(beta1: f64, beta2: f64, epochs: u64, x0: f64) -> TrajectoryLog {
        let p = make_problem(Family::DivergencePiecewise, 20, &FamilyParams::scale(1.0)).unwrap();
        let cfg = AdamConfig::new(beta1, beta2, 0.1).with_eps(1e-8);
        let opts =
            RunOptions::new(Budget::Epochs(epochs), vec![x0]).with_log(LogPolicy::summary_only());
        run(&p, &cfg, SamplingScheme::cyclic(), &opts).unwrap()
    }

    #[test]
    fn classification_examples() {
        let mut log = divpw_run(0.5, 0.999, 2500, 1.0);
        assert_eq!(classify_outcome(&log, 0.5, 1e6), Outcome::Converged);
        log.summary.final_x = vec![f64::NAN];
        assert_eq!(classify_outcome(&log, 0.5, 1e6), Outcome::Diverged);

        // Starting at the optimum: gradient identically zero.
        let at_opt = divpw_run(0.5, 0.999, 10, -2.0);
        assert_eq!(at_opt.summary.min_grad_norm, 0.0);
        assert_eq!(classify_outcome(&at_opt, 1e-3, 1e6), Outcome::Converged);
    }

    #[test]
    fn nonrealizable_run_plateaus() {
        let p = make_problem(
            Family::NonRealizableQuadratic,
            10,
            &FamilyParams::scale(10.0),
        )
        .unwrap();
        let cfg = AdamConfig::new(0.0, 0.99, 0.1)
            .with_eps(1e-8)
            .with_bias_correction(true)
            .with_schedule(Schedule::InverseSqrt);
        let opts =
            RunOptions::new(Budget::Epochs(2000), vec![0.0]).with_log(LogPolicy::summary_only());
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts).unwrap();
        assert_eq!(classify_outcome(&log, 1e-3, 1e6), Outcome::Plateau);
    }

    proptest! {
        #[test]
        fn metric_monotone_in_gradient(a in 0.0f64..50.0, b in 0.0f64..50.0,
                                       d0 in 0.0f64..10.0, d1 in 0.01f64..10.0, d in 1usize..6) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(theorem_metric_unchecked(lo, d0, d1, d) <= theorem_metric_unchecked(hi, d0, d1, d));
        }

        #[test]
        fn potential_shifts_with_constant(xs in proptest::collection::vec(-10.0f64..10.0, 4),
                                          c in -5.0f64..5.0, beta1 in 0.0f64..0.95) {
            let hist: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
            let shifted: Vec<Vec<f64>> = xs.iter().map(|x| vec![x + c]).collect();
            let z = potential_z(&hist, beta1, 3).unwrap()[0];
            let zs = potential_z(&shifted, beta1, 3).unwrap()[0];
            prop_assert!((zs - (z + c)).abs() <= 1e-9 * (1.0 + z.abs() + c.abs()) / (1.0 - beta1.powi(3)));
        }
    }
}
