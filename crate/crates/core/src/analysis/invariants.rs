use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::optimizer::{
    run, AdamConfig, Budget, LogPolicy, RunOptions, SamplingKind, SamplingScheme, Schedule,
    TrajectoryLog,
};
use crate::problems::{make_problem, Family, FamilyParams, Problem};
use crate::rng::SplitMix64;

/// Relative slack for floating-point comparisons in the per-step checks.
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 0-based update index.
    pub step: u64,
    /// Offending coordinate, when the check is per coordinate.
    pub coord: Option<usize>,
    /// Name of the violated quantity.
    pub quantity: String,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.coord {
            Some(l) => write!(
                f,
                "step {} coord {}: {} ({})",
                self.step, l, self.quantity, self.detail
            ),
            None => write!(f, "step {}: {} ({})", self.step, self.quantity, self.detail),
        }
    }
}

fn leq(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * b.abs().max(a.abs())
}

/// `(1−β1) / (√(1−β2) · (1 − β1/√β2))`: the largest possible `|m_l|/√v_l`
/// when `m` starts at zero.
pub fn step_bound_factor(beta1: f64, beta2: f64) -> Result<f64> {
    if !(beta1 < beta2.sqrt()) {
        return Err(LabError::contract(format!(
            "step bound undefined: beta1 = {beta1} ≥ sqrt(beta2) = {}",
            beta2.sqrt()
        )));
    }
    Ok((1.0 - beta1) / ((1.0 - beta2).sqrt() * (1.0 - beta1 / beta2.sqrt())))
}

/// Checks every snapshot in the log against
///
/// - `v ≥ 0` (checked first; a negative entry suppresses the other checks for
///   that coordinate),
/// - the coordinate step bound `|Δx_l| ≤ η · (1−β1)/(√(1−β2)(1−β1/√β2))`
///   (requires `m_init = 0`),
/// - the envelope `min(v_prev, g²) ≤ v ≤ max(v_prev, g²)`,
/// - geometric memory `v_l ≥ (1−β2) β2^j g_{t−j,l}²` over the run of
///   consecutive snapshots ending at each step,
/// - the bias-correction envelope `√(1−β2)·η_k ≤ η̂_k ≤ η_k/(1−β1)` (or
///   `η̂_k = η_k` when correction is off).
///
/// Each violation names the step, coordinate and quantity; at most one is
/// reported per (step, coordinate).
pub fn verify_invariants(log: &TrajectoryLog, config: &AdamConfig) -> Result<Vec<Violation>> {
    let factor = step_bound_factor(config.beta1, config.beta2)?;
    if !config.m_init.is_zero() {
        return Err(LabError::contract("the step bound assumes m_init = 0"));
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let mut out = Vec::new();
    // memory[l] = max_j β2^j g_{t−j,l}² over the current consecutive run.
    let mut memory: Vec<f64> = Vec::new();
    let mut last_t: Option<u64> = None;

    for rec in &log.records {
        let Some(snap) = rec.snapshot.as_ref() else {
            continue;
        };
        let t = snap.t;
        if memory.len() != snap.v.len() || last_t.is_none_or(|lt| lt + 1 != t) {
            memory = vec![0.0; snap.v.len()];
        }
        last_t = Some(t);

        let base = config.base_stepsize(rec.k);
        let (lo, hi) = if config.bias_correction {
            ((1.0 - b2).sqrt() * base, base / (1.0 - b1))
        } else {
            (base, base)
        };
        if !(leq(lo, rec.eta) && leq(rec.eta, hi)) {
            out.push(Violation {
                step: t,
                coord: None,
                quantity: "bias-correction envelope".into(),
                detail: format!("eta = {} outside [{lo}, {hi}]", rec.eta),
            });
        }

        // Several per-coordinate arrays are read in lockstep.
        #[allow(clippy::needless_range_loop)]
        for l in 0..snap.v.len() {
            let (v, v_prev, g) = (snap.v[l], snap.v_prev[l], snap.g[l]);
            let g2 = g * g;
            memory[l] = (b2 * memory[l]).max(g2);
            if !(v >= 0.0) {
                out.push(Violation {
                    step: t,
                    coord: Some(l),
                    quantity: "v".into(),
                    detail: format!("v = {v} is negative"),
                });
                continue;
            }
            let dx = (snap.x_after[l] - snap.x_before[l]).abs();
            let bound = rec.eta * factor;
            if !leq(dx, bound) {
                out.push(Violation {
                    step: t,
                    coord: Some(l),
                    quantity: "step bound".into(),
                    detail: format!("|dx| = {dx} > {bound}"),
                });
                continue;
            }
            if !(leq(v_prev.min(g2), v) && leq(v, v_prev.max(g2))) {
                out.push(Violation {
                    step: t,
                    coord: Some(l),
                    quantity: "v envelope".into(),
                    detail: format!("v = {v} outside [min, max] of v_prev = {v_prev}, g^2 = {g2}"),
                });
                continue;
            }
            let floor = (1.0 - b2) * memory[l];
            if !leq(floor, v) {
                out.push(Violation {
                    step: t,
                    coord: Some(l),
                    quantity: "geometric memory".into(),
                    detail: format!("v = {v} < (1-beta2) max_j beta2^j g^2 = {floor}"),
                });
            }
        }
    }
    Ok(out)
}

/// Exact sign, with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Checks that every snapshot of a `β1 = β2 = 0, ε = 0` run is an exact
/// sign step, `x' = Π(x − η·sign(g))`, bit for bit.
pub fn verify_sign_steps(p: &Problem, log: &TrajectoryLog) -> Vec<Violation> {
    let mut out = Vec::new();
    for rec in &log.records {
        let Some(snap) = rec.snapshot.as_ref() else {
            continue;
        };
        let expected: Vec<f64> = snap
            .x_before
            .iter()
            .zip(&snap.g)
            .map(|(x, g)| x - rec.eta * sign(*g))
            .collect();
        let expected = p.project(&expected);
        for (l, (got, want)) in snap.x_after.iter().zip(&expected).enumerate() {
            if got.to_bits() != want.to_bits() {
                out.push(Violation {
                    step: snap.t,
                    coord: Some(l),
                    quantity: "sign step".into(),
                    detail: format!("x' = {got}, expected {want}"),
                });
            }
        }
    }
    out
}

/// One randomly drawn experiment of the invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial: usize,
    pub family: Family,
    pub n: usize,
    pub config: AdamConfig,
    pub scheme: SamplingScheme,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialViolation {
    pub trial: usize,
    pub check: String,
    pub violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub trials: usize,
    pub steps_per_trial: u64,
    pub steps_checked: u64,
    pub violations: Vec<TrialViolation>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn random_problem(rng: &mut SplitMix64) -> Result<Problem> {
    match rng.below(4) {
        0 => make_problem(
            Family::ReddiLinear,
            3 + rng.below(8) as usize,
            &FamilyParams::none(),
        ),
        1 => make_problem(
            Family::DivergencePiecewise,
            3 + rng.below(18) as usize,
            &FamilyParams::scale(rng.uniform(0.05, 2.0)),
        ),
        2 => make_problem(
            Family::NonRealizableQuadratic,
            10,
            &FamilyParams::scale(rng.uniform(0.5, 20.0)),
        ),
        _ => {
            let n = 3 + rng.below(6) as usize;
            let d = 1 + rng.below(4) as usize;
            let rows = (0..n)
                .map(|_| (0..d).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .collect();
            let b = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
            make_problem(Family::LeastSquares, n, &FamilyParams::data(rows, b))
        }
    }
}

/// Draws trial `trial` of the suite deterministically from `seed`.
pub fn draw_trial(seed: u64, trial: usize) -> Result<(Problem, TrialSpec)> {
    let mut rng = SplitMix64::new(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let p = random_problem(&mut rng)?;
    let beta2 = rng.uniform(0.0, 0.9999);
    let beta1 = rng.next_f64() * beta2.sqrt() * 0.999;
    let eta0 = 10f64.powf(rng.uniform(-3.0, 0.0));
    let mut config = AdamConfig::new(beta1, beta2, eta0)
        .with_bias_correction(rng.below(2) == 1)
        .with_schedule(if rng.below(2) == 0 {
            Schedule::InverseSqrt
        } else {
            Schedule::Constant
        });
    if rng.below(2) == 1 {
        config = config.with_eps(1e-8);
    }
    let kind = [
        SamplingKind::WithReplacement,
        SamplingKind::RandomShuffle,
        SamplingKind::Cyclic,
    ][rng.below(3) as usize];
    let scheme = SamplingScheme::new(kind, rng.next_u64());
    let x0 = (0..p.dim()).map(|_| rng.uniform(-5.0, 5.0)).collect();
    let spec = TrialSpec {
        trial,
        family: p.family(),
        n: p.n(),
        config,
        scheme,
        x0,
    };
    Ok((p, spec))
}

/// Runs `trials` random configurations (with `β1 < √β2`) for `steps` updates
/// each and checks: the per-step invariants of [`verify_invariants`], the
/// sign-step reduction at `β1 = β2 = ε = 0` on the same problem and
/// sampling scheme, and bit-identical replay of the run.
pub fn invariant_suite(trials: usize, seed: u64, steps: u64) -> Result<SuiteReport> {
    if steps == 0 {
        return Err(LabError::param("steps must be at least 1"));
    }
    let mut violations = Vec::new();
    let mut steps_checked = 0u64;
    for trial in 0..trials {
        let (p, spec) = draw_trial(seed, trial)?;
        let opts = RunOptions::new(Budget::Iterations(steps), spec.x0.clone())
            .with_log(LogPolicy::instrumented());

        let log = run(&p, &spec.config, spec.scheme, &opts)?;
        steps_checked += log.summary.steps;
        for v in verify_invariants(&log, &spec.config)? {
            violations.push(TrialViolation {
                trial,
                check: "invariants".into(),
                violation: Some(v),
            });
        }

        let replay = run(&p, &spec.config, spec.scheme, &opts)?;
        if replay != log {
            violations.push(TrialViolation {
                trial,
                check: "determinism replay".into(),
                violation: None,
            });
        }

        let sign_cfg =
            AdamConfig::new(0.0, 0.0, spec.config.eta0).with_schedule(spec.config.schedule);
        let sign_log = run(&p, &sign_cfg, spec.scheme, &opts)?;
        for v in verify_sign_steps(&p, &sign_log) {
            violations.push(TrialViolation {
                trial,
                check: "sign step".into(),
                violation: Some(v),
            });
        }
    }
    Ok(SuiteReport {
        trials,
        steps_per_trial: steps,
        steps_checked,
        violations,
    })
}
