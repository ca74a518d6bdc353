//! Adam under with-replacement sampling, random shuffling and cyclic order.
//!
//! Two recursions are implemented:
//!
//! - **with replacement**: one uniformly sampled component per iteration,
//!   stepsize indexed by the iteration counter `k`;
//! - **epoch based** (random shuffling or cyclic): `n` inner steps per epoch
//!   over a permutation of the components, stepsize indexed by the epoch
//!   counter and held fixed inside the epoch; `m` and `v` carry across epoch
//!   boundaries.
//!
//! In both, `m ← β1 m + (1−β1) g`, `v ← β2 v + (1−β2) g∘g` and
//! `x ← Π(x − η · m / (√v + ε))`, where `Π` clamps to the problem's box (if
//! any) and is applied to `x` only.

mod config;
mod sampling;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use config::{stepsize, AdamConfig, Broadcast, Schedule, TINY_V_INIT};
pub use sampling::{next_index, IndexSampler, SamplingKind, SamplingScheme};

use crate::analysis::{classify_summary, theorem_metric_unchecked, Outcome};
use crate::error::{LabError, Result};
use crate::problems::Problem;

/// Iterates are declared divergent once any coordinate exceeds this magnitude.
pub const DEFAULT_CUTOFF: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Stepsize counter, 1-based: the iteration for with-replacement
    /// sampling, the epoch for epoch-based orderings.
    pub k: u64,
    /// Inner index of the last step inside the current epoch.
    pub i: Option<usize>,
    /// Total number of parameter updates applied.
    pub updates: u64,
}

impl OptimizerState {
    /// Initial state at `x0` (projected onto the box, if any).
    pub fn new(p: &Problem, config: &AdamConfig, x0: &[f64]) -> Result<Self> {
        let d = p.dim();
        if x0.len() != d {
            return Err(LabError::Dimension {
                expected: d,
                got: x0.len(),
            });
        }
        Ok(Self {
            x: p.project(x0),
            m: config.m_init.resolve(d)?,
            v: config.v_init.resolve(d)?,
            k: 1,
            i: None,
            updates: 0,
        })
    }

    fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.m)
            .chain(&self.v)
            .all(|v| v.is_finite())
    }
}

/// Full per-step state, kept when instrumentation is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// 0-based global update index.
    pub t: u64,
    pub x_before: Vec<f64>,
    pub x_after: Vec<f64>,
    /// Sampled component gradient at `x_before`.
    pub g: Vec<f64>,
    pub m_prev: Vec<f64>,
    pub m: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Stepsize counter used for this step.
    pub k: u64,
    /// Inner index for epoch-based orderings.
    pub i: Option<usize>,
    pub batch: usize,
    /// Effective stepsize (bias correction included).
    pub eta: f64,
    pub objective: f64,
    pub full_grad_norm: f64,
    pub grad_component_norm: f64,
    /// `‖x_after − x_before‖₂`.
    pub step_norm: f64,
    pub x_norm: f64,
    pub non_finite: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
}

/// Scratch buffers reused across steps.
struct Workspace {
    g: Vec<f64>,
    full: Vec<f64>,
    scratch: Vec<f64>,
    x_before: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self {
            g: vec![0.0; d],
            full: vec![0.0; d],
            scratch: vec![0.0; d],
            x_before: vec![0.0; d],
        }
    }
}

struct StepCore {
    batch: usize,
    eta: f64,
    step_norm: f64,
    grad_component_norm: f64,
    full_grad_norm: f64,
    non_finite: bool,
    snapshot: Option<Snapshot>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Applies one Adam update with component `batch` and stepsize `eta`, then
/// evaluates the full gradient at the new iterate.
fn advance(
    state: &mut OptimizerState,
    p: &Problem,
    config: &AdamConfig,
    batch: usize,
    eta: f64,
    ws: &mut Workspace,
    keep_snapshot: bool,
) -> StepCore {
    p.grad_into(batch, &state.x, &mut ws.g);
    ws.x_before.copy_from_slice(&state.x);
    let prev = keep_snapshot.then(|| (state.m.clone(), state.v.clone()));

    let (b1, b2, eps) = (config.beta1, config.beta2, config.eps);
    for l in 0..state.x.len() {
        let g = ws.g[l];
        let m = b1 * state.m[l] + (1.0 - b1) * g;
        let v = b2 * state.v[l] + (1.0 - b2) * g * g;
        let denom = v.sqrt() + eps;
        // 0/0 only arises with beta2 = 0, eps = 0 and a zero gradient.
        let dir = if m == 0.0 && denom == 0.0 {
            0.0
        } else {
            m / denom
        };
        state.m[l] = m;
        state.v[l] = v;
        state.x[l] -= eta * dir;
    }
    p.project_in_place(&mut state.x);
    state.updates += 1;

    let step_norm = state
        .x
        .iter()
        .zip(&ws.x_before)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    p.full_grad_into(&state.x, &mut ws.full, &mut ws.scratch);

    let snapshot = prev.map(|(m_prev, v_prev)| Snapshot {
        t: state.updates - 1,
        x_before: ws.x_before.clone(),
        x_after: state.x.clone(),
        g: ws.g.clone(),
        m_prev,
        m: state.m.clone(),
        v_prev,
        v: state.v.clone(),
    });

    StepCore {
        batch,
        eta,
        step_norm,
        grad_component_norm: norm(&ws.g),
        full_grad_norm: norm(&ws.full),
        non_finite: !state.is_finite(),
        snapshot,
    }
}

fn to_record(core: StepCore, state: &OptimizerState, p: &Problem, k: u64) -> StepRecord {
    StepRecord {
        k,
        i: state.i,
        batch: core.batch,
        eta: core.eta,
        objective: p.objective_unchecked(&state.x),
        full_grad_norm: core.full_grad_norm,
        grad_component_norm: core.grad_component_norm,
        step_norm: core.step_norm,
        x_norm: norm(&state.x),
        non_finite: core.non_finite,
        snapshot: core.snapshot,
    }
}

fn check_state(state: &OptimizerState, p: &Problem) -> Result<()> {
    let d = p.dim();
    for len in [state.x.len(), state.m.len(), state.v.len()] {
        if len != d {
            return Err(LabError::Dimension {
                expected: d,
                got: len,
            });
        }
    }
    if state.k == 0 {
        return Err(LabError::param("stepsize counter k is 1-based"));
    }
    Ok(())
}

/// One iteration of Adam under with-replacement sampling. The returned
/// record always carries a [`Snapshot`].
pub fn step_wr(
    state: &mut OptimizerState,
    p: &Problem,
    config: &AdamConfig,
    sampler: &mut IndexSampler,
) -> Result<StepRecord> {
    config.validate()?;
    check_state(state, p)?;
    let mut ws = Workspace::new(p.dim());
    let k = state.k;
    let batch = sampler.next_index();
    let core = advance(state, p, config, batch, config.stepsize(k), &mut ws, true);
    state.i = None;
    state.k += 1;
    Ok(to_record(core, state, p, k))
}

/// One epoch of Adam under random shuffling (or cyclic order, depending on
/// the sampler): `n` inner steps, all using the epoch stepsize `eta_k`.
pub fn run_epoch_rr(
    state: &mut OptimizerState,
    p: &Problem,
    config: &AdamConfig,
    sampler: &mut IndexSampler,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    check_state(state, p)?;
    if !sampler.kind().is_epoch_based() {
        return Err(LabError::param(
            "run_epoch_rr needs a shuffling or cyclic sampler",
        ));
    }
    let mut ws = Workspace::new(p.dim());
    let k = state.k;
    let eta = config.stepsize(k);
    let order = sampler.next_epoch();
    let mut records = Vec::with_capacity(order.len());
    for (i, batch) in order.into_iter().enumerate() {
        state.i = Some(i);
        let core = advance(state, p, config, batch, eta, &mut ws, true);
        let stop = core.non_finite;
        records.push(to_record(core, state, p, k));
        if stop {
            return Ok(records);
        }
    }
    state.k += 1;
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Iterations(u64),
    Epochs(u64),
}

impl Budget {
    /// Total number of parameter updates for `n` components.
    pub fn total_steps(self, n: usize) -> u64 {
        match self {
            Budget::Iterations(t) => t,
            Budget::Epochs(e) => e.saturating_mul(n as u64),
        }
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Budget::Iterations(0) | Budget::Epochs(0))
    }
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::Iterations(t) => write!(f, "iters:{t}"),
            Budget::Epochs(e) => write!(f, "epochs:{e}"),
        }
    }
}

/// Which steps end up in [`TrajectoryLog::records`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPolicy {
    /// Keep every `every`-th step (plus the last); 0 keeps only the last.
    pub every: u64,
    /// Attach full [`Snapshot`]s to kept steps.
    pub snapshots: bool,
    /// With snapshots on, keep every `snapshot_stride`-th step in full.
    pub snapshot_stride: u64,
}

impl LogPolicy {
    pub fn every(every: u64) -> Self {
        Self {
            every,
            snapshots: false,
            snapshot_stride: 1,
        }
    }

    /// Every step, with snapshots.
    pub fn instrumented() -> Self {
        Self {
            every: 1,
            snapshots: true,
            snapshot_stride: 1,
        }
    }

    pub fn summary_only() -> Self {
        Self::every(0)
    }
}

impl Default for LogPolicy {
    fn default() -> Self {
        Self::every(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub budget: Budget,
    pub x0: Vec<f64>,
    pub log: LogPolicy,
    pub cutoff: f64,
    pub tol_converge: f64,
}

impl RunOptions {
    pub fn new(budget: Budget, x0: Vec<f64>) -> Self {
        Self {
            budget,
            x0,
            log: LogPolicy::default(),
            cutoff: DEFAULT_CUTOFF,
            tol_converge: 1e-3,
        }
    }

    pub fn with_log(mut self, log: LogPolicy) -> Self {
        self.log = log;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol_converge = tol;
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    /// Stopped after update `step` (1-based) because the state blew up.
    Diverged {
        step: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub status: RunStatus,
    pub outcome: Outcome,
    pub final_x: Vec<f64>,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    /// `‖x − x*‖` when `x*` is known.
    pub final_gap: Option<f64>,
    pub initial_grad_norm: f64,
    pub initial_gap: Option<f64>,
    pub min_grad_norm: f64,
    /// Minimum of the progress metric `min{‖∇f‖²/√D0, ‖∇f‖/(2√(d D1))}` over
    /// all iterates, when `D0` and `D1` are known.
    pub min_metric: Option<f64>,
    /// Mean full-gradient norm over the last 10% of the planned steps.
    pub tail_mean_grad_norm: f64,
    pub tail_mean_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// Online accumulators for the summary.
struct Tracker<'a> {
    x_star: Option<&'a [f64]>,
    metric_consts: Option<(f64, f64)>,
    d: usize,
    tail_start: u64,
    min_grad: f64,
    min_metric: f64,
    tail_grad: f64,
    tail_gap: f64,
    tail_count: u64,
}

impl<'a> Tracker<'a> {
    fn gap(&self, x: &[f64]) -> Option<f64> {
        self.x_star.map(|xs| {
            x.iter()
                .zip(xs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
    }

    fn observe(&mut self, t: u64, x: &[f64], grad_norm: f64) {
        self.min_grad = self.min_grad.min(grad_norm);
        if let Some((d0, d1)) = self.metric_consts {
            self.min_metric = self
                .min_metric
                .min(theorem_metric_unchecked(grad_norm, d0, d1, self.d));
        }
        if t >= self.tail_start {
            self.tail_grad += grad_norm;
            if let Some(g) = self.gap(x) {
                self.tail_gap += g;
            }
            self.tail_count += 1;
        }
    }
}

/// Runs Adam for the given budget and returns the logged trajectory with a
/// summary. The outcome is classified with `opts.tol_converge` and
/// `opts.cutoff`.
///
/// Non-finite states or `|x_l| > cutoff` stop the run early with
/// [`RunStatus::Diverged`]; the partial log is still returned.
pub fn run(
    p: &Problem,
    config: &AdamConfig,
    scheme: SamplingScheme,
    opts: &RunOptions,
) -> Result<TrajectoryLog> {
    config.validate()?;
    if opts.budget.is_zero() {
        return Err(LabError::param("budget must be at least 1"));
    }
    if !(opts.cutoff > 0.0) {
        return Err(LabError::param("divergence cutoff must be positive"));
    }
    let mut state = OptimizerState::new(p, config, &opts.x0)?;
    let n = p.n();
    let d = p.dim();
    let total = opts.budget.total_steps(n);
    let mut sampler = scheme.sampler(n);
    let mut ws = Workspace::new(d);

    let metric_consts = p.known().map(|k| (k.d0, k.d1));
    let mut tracker = Tracker {
        x_star: p.x_star(),
        metric_consts,
        d,
        tail_start: total - total.div_ceil(10),
        min_grad: f64::INFINITY,
        min_metric: f64::INFINITY,
        tail_grad: 0.0,
        tail_gap: 0.0,
        tail_count: 0,
    };

    p.full_grad_into(&state.x, &mut ws.full, &mut ws.scratch);
    let initial_grad_norm = norm(&ws.full);
    let initial_gap = tracker.gap(&state.x);
    tracker.min_grad = initial_grad_norm;
    if let Some((d0, d1)) = metric_consts {
        tracker.min_metric = theorem_metric_unchecked(initial_grad_norm, d0, d1, d);
    }

    let log = opts.log;
    let mut records = Vec::new();
    let mut status = RunStatus::Completed;
    let mut last_grad_norm = initial_grad_norm;
    let epoch_based = scheme.kind.is_epoch_based();
    let mut order: Vec<usize> = Vec::new();

    for t in 0..total {
        let (batch, k) = if epoch_based {
            let i = (t % n as u64) as usize;
            if i == 0 {
                if t > 0 {
                    state.k += 1;
                }
                order = sampler.next_epoch();
            }
            state.i = Some(i);
            (order[i], state.k)
        } else {
            (sampler.next_index(), state.k)
        };
        let keep = t + 1 == total || (log.every > 0 && (t + 1) % log.every == 0);
        let snap = keep && log.snapshots && t % log.snapshot_stride.max(1) == 0;
        let core = advance(
            &mut state,
            p,
            config,
            batch,
            config.stepsize(k),
            &mut ws,
            snap,
        );
        if !epoch_based {
            state.k += 1;
        }
        last_grad_norm = core.full_grad_norm;
        tracker.observe(t, &state.x, core.full_grad_norm);

        let blown = if core.non_finite {
            Some("non-finite state".to_string())
        } else {
            state
                .x
                .iter()
                .position(|x| x.abs() > opts.cutoff)
                .map(|l| format!("|x[{l}]| exceeded cutoff {:e}", opts.cutoff))
        };
        if keep || blown.is_some() {
            records.push(to_record(core, &state, p, k));
        }
        if let Some(reason) = blown {
            status = RunStatus::Diverged {
                step: t + 1,
                reason,
            };
            break;
        }
    }
    let tail = tracker.tail_count.max(1) as f64;
    let mut summary = RunSummary {
        steps: state.updates,
        status,
        outcome: Outcome::Plateau,
        final_objective: p.objective_unchecked(&state.x),
        final_grad_norm: last_grad_norm,
        final_gap: tracker.gap(&state.x),
        final_x: state.x,
        initial_grad_norm,
        initial_gap,
        min_grad_norm: tracker.min_grad,
        min_metric: metric_consts.map(|_| tracker.min_metric),
        tail_mean_grad_norm: tracker.tail_grad / tail,
        tail_mean_gap: tracker.x_star.map(|_| tracker.tail_gap / tail),
    };
    summary.outcome = classify_summary(&summary, opts.tol_converge, opts.cutoff);
    Ok(TrajectoryLog { records, summary })
}

/// One JSONL line of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonlRecord {
    pub k: u64,
    pub i: Option<usize>,
    pub batch: usize,
    pub eta: f64,
    pub objective: f64,
    pub full_grad_norm: f64,
    pub step_norm: f64,
    pub x_norm: f64,
}

impl From<&StepRecord> for JsonlRecord {
    fn from(r: &StepRecord) -> Self {
        Self {
            k: r.k,
            i: r.i,
            batch: r.batch,
            eta: r.eta,
            objective: r.objective,
            full_grad_norm: r.full_grad_norm,
            step_norm: r.step_norm,
            x_norm: r.x_norm,
        }
    }
}

/// Flat CSV view of a [`RunSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub steps: u64,
    pub status: String,
    pub outcome: Outcome,
    /// Coordinates joined by spaces.
    pub final_x: String,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub final_gap: Option<f64>,
    pub initial_grad_norm: f64,
    pub initial_gap: Option<f64>,
    pub min_grad_norm: f64,
    pub min_metric: Option<f64>,
    pub tail_mean_grad_norm: f64,
    pub tail_mean_gap: Option<f64>,
}

impl From<&RunSummary> for SummaryRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            steps: s.steps,
            status: match &s.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Diverged { step, .. } => format!("diverged@{step}"),
            },
            outcome: s.outcome,
            final_x: s
                .final_x
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            final_objective: s.final_objective,
            final_grad_norm: s.final_grad_norm,
            final_gap: s.final_gap,
            initial_grad_norm: s.initial_grad_norm,
            initial_gap: s.initial_gap,
            min_grad_norm: s.min_grad_norm,
            min_metric: s.min_metric,
            tail_mean_grad_norm: s.tail_mean_grad_norm,
            tail_mean_gap: s.tail_mean_gap,
        }
    }
}

impl TrajectoryLog {
    /// Writes one JSON object per kept step.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &JsonlRecord::from(r))?;
            w.write_all(b"\n").map_err(|e| LabError::io("<jsonl>", e))?;
        }
        Ok(())
    }

    /// Writes a header plus one summary row.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.serialize(SummaryRow::from(&self.summary))?;
        wtr.flush()?;
        Ok(())
    }

    /// Snapshots in step order.
    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.records.iter().filter_map(|r| r.snapshot.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Family, FamilyParams};
    use approx::assert_relative_eq;

    fn divpw(n: usize, a: f64) -> Problem {
        make_problem(Family::DivergencePiecewise, n, &FamilyParams::scale(a)).unwrap()
    }

    fn lsq_1d(g: f64) -> Problem {
        // f_0(x) = ½ (x - b)^2 has gradient x - b; at x = 0 this is -b.
        make_problem(
            Family::LeastSquares,
            1,
            &FamilyParams::data(vec![vec![1.0]], vec![-g]),
        )
        .unwrap()
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let p = lsq_1d(2.0);
        let cfg = AdamConfig::new(0.9, 0.999, 0.1)
            .with_v_init(1.0)
            .with_schedule(Schedule::Constant);
        let mut state = OptimizerState::new(&p, &cfg, &[0.0]).unwrap();
        let mut s = SamplingScheme::new(SamplingKind::WithReplacement, 0).sampler(1);
        let rec = step_wr(&mut state, &p, &cfg, &mut s).unwrap();
        assert_relative_eq!(state.m[0], 0.2, epsilon = 1e-16);
        assert_relative_eq!(state.v[0], 1.003, epsilon = 1e-15);
        // Independent float64 recomputation: -0.1 * (0.2 / sqrt(1.003)).
        assert_relative_eq!(state.x[0], -0.01997006733169178, max_relative = 1e-14);
        assert_eq!(state.k, 2);
        assert_eq!(rec.k, 1);
        assert_relative_eq!(rec.step_norm, 0.01997006733169178, max_relative = 1e-14);
    }

    #[test]
    fn sign_sgd_reduction_is_exact() {
        let p = divpw(6, 0.7);
        let cfg = AdamConfig::new(0.0, 0.0, 0.3);
        let mut state = OptimizerState::new(&p, &cfg, &[2.5]).unwrap();
        let mut s = SamplingScheme::new(SamplingKind::WithReplacement, 11).sampler(6);
        for _ in 0..200 {
            let x_before = state.x[0];
            let rec = step_wr(&mut state, &p, &cfg, &mut s).unwrap();
            let snap = rec.snapshot.unwrap();
            let expected = x_before - rec.eta * snap.g[0].signum();
            assert_eq!(state.x[0].to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn zero_gradient_with_zero_beta2_is_a_zero_step() {
        let p = lsq_1d(0.0);
        let cfg = AdamConfig::new(0.0, 0.0, 0.3);
        let mut state = OptimizerState::new(&p, &cfg, &[0.0]).unwrap();
        let mut s = SamplingScheme::cyclic().sampler(1);
        let rec = step_wr(&mut state, &p, &cfg, &mut s).unwrap();
        assert_eq!(state.x, vec![0.0]);
        assert!(!rec.non_finite);
    }

    #[test]
    fn projection_clamps_reddi() {
        let p = make_problem(Family::ReddiLinear, 3, &FamilyParams::none()).unwrap();
        let cfg = AdamConfig::new(0.0, 0.1, 0.5).with_eps(1e-8);
        let mut state = OptimizerState::new(&p, &cfg, &[1.0]).unwrap();
        let mut s = SamplingScheme::cyclic().sampler(3);
        s.next_index(); // skip f_0 so the next component pushes right
        step_wr(&mut state, &p, &cfg, &mut s).unwrap();
        assert_eq!(state.x, vec![1.0]);
        assert_eq!(state.m, vec![-1.0]);
    }

    #[test]
    fn epoch_of_one_component_equals_one_step() {
        let p = lsq_1d(1.5);
        let cfg = AdamConfig::new(0.5, 0.9, 0.2);
        let mut a = OptimizerState::new(&p, &cfg, &[0.4]).unwrap();
        let mut b = a.clone();
        let mut sa = SamplingScheme::new(SamplingKind::RandomShuffle, 1).sampler(1);
        let mut sb = SamplingScheme::new(SamplingKind::WithReplacement, 1).sampler(1);
        for _ in 0..5 {
            let ra = run_epoch_rr(&mut a, &p, &cfg, &mut sa).unwrap();
            step_wr(&mut b, &p, &cfg, &mut sb).unwrap();
            assert_eq!(ra.len(), 1);
            assert_eq!(ra[0].batch, 0);
            assert_eq!(a.x, b.x);
            assert_eq!(a.m, b.m);
            assert_eq!(a.v, b.v);
            assert_eq!(a.k, b.k);
        }
    }

    #[test]
    fn epoch_sign_steps() {
        let p = divpw(3, 1.0);
        let cfg = AdamConfig::new(0.0, 0.0, 0.25);
        let mut state = OptimizerState::new(&p, &cfg, &[3.0]).unwrap();
        let mut s = SamplingScheme::new(SamplingKind::RandomShuffle, 9).sampler(p.n());
        for _ in 0..4 {
            let k = state.k;
            let recs = run_epoch_rr(&mut state, &p, &cfg, &mut s).unwrap();
            for r in recs {
                let snap = r.snapshot.unwrap();
                assert_eq!(r.k, k);
                assert_eq!(r.eta, cfg.stepsize(k));
                assert_eq!(
                    snap.x_after[0],
                    snap.x_before[0] - r.eta * snap.g[0].signum()
                );
            }
        }
    }

    #[test]
    fn epoch_carries_moments_and_holds_stepsize() {
        let p = divpw(5, 1.0);
        let cfg = AdamConfig::new(0.9, 0.99, 0.1).with_eps(1e-8);
        let mut state = OptimizerState::new(&p, &cfg, &[1.0]).unwrap();
        let mut s = SamplingScheme::new(SamplingKind::RandomShuffle, 3).sampler(5);
        let first = run_epoch_rr(&mut state, &p, &cfg, &mut s).unwrap();
        let second = run_epoch_rr(&mut state, &p, &cfg, &mut s).unwrap();
        assert!(first.iter().all(|r| r.eta == cfg.stepsize(1)));
        assert!(second.iter().all(|r| r.eta == cfg.stepsize(2)));
        let end_first = first.last().unwrap().snapshot.as_ref().unwrap();
        let start_second = second[0].snapshot.as_ref().unwrap();
        assert_eq!(end_first.m, start_second.m_prev);
        assert_eq!(end_first.v, start_second.v_prev);
        assert_eq!(end_first.x_after, start_second.x_before);
        assert_eq!(state.k, 3);
    }

    #[test]
    fn run_replays_bit_identically() {
        let p = divpw(5, 1.0);
        let cfg = AdamConfig::new(0.6, 0.95, 0.1).with_eps(1e-8);
        let opts =
            RunOptions::new(Budget::Epochs(3), vec![0.5]).with_log(LogPolicy::instrumented());
        for kind in [SamplingKind::RandomShuffle, SamplingKind::WithReplacement] {
            let a = run(&p, &cfg, SamplingScheme::new(kind, 42), &opts).unwrap();
            let b = run(&p, &cfg, SamplingScheme::new(kind, 42), &opts).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
            assert_eq!(a.records.len(), 15);
        }
    }

    #[test]
    fn run_rejects_zero_budget() {
        let p = divpw(5, 1.0);
        let cfg = AdamConfig::new(0.6, 0.95, 0.1);
        let err = run(
            &p,
            &cfg,
            SamplingScheme::cyclic(),
            &RunOptions::new(Budget::Epochs(0), vec![0.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn log_every_subsamples_and_keeps_last() {
        let p = divpw(4, 1.0);
        let cfg = AdamConfig::new(0.6, 0.95, 0.1);
        let opts =
            RunOptions::new(Budget::Iterations(103), vec![0.5]).with_log(LogPolicy::every(10));
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts).unwrap();
        assert_eq!(log.records.len(), 11);
        assert_eq!(log.summary.steps, 103);
        let opts = opts.with_log(LogPolicy::summary_only());
        assert_eq!(
            run(&p, &cfg, SamplingScheme::cyclic(), &opts)
                .unwrap()
                .records
                .len(),
            1
        );
    }

    #[test]
    fn iteration_budget_on_epoch_scheme_uses_epoch_index() {
        let p = divpw(4, 1.0);
        let cfg = AdamConfig::new(0.0, 0.5, 1.0);
        let opts = RunOptions::new(Budget::Iterations(10), vec![0.5]);
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts).unwrap();
        let ks: Vec<u64> = log.records.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![1, 1, 1, 1, 2, 2, 2, 2, 3, 3]);
        let is: Vec<usize> = log.records.iter().map(|r| r.i.unwrap()).collect();
        assert_eq!(is, vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn cutoff_terminates_with_partial_log() {
        let p = divpw(20, 1.0);
        let cfg = AdamConfig::new(0.0, 0.1, 1.0)
            .with_eps(1e-8)
            .with_schedule(Schedule::Constant);
        let opts = RunOptions::new(Budget::Epochs(10_000), vec![1.0]).with_cutoff(50.0);
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts).unwrap();
        assert!(matches!(log.summary.status, RunStatus::Diverged { .. }));
        assert_eq!(log.summary.outcome, Outcome::Diverged);
        assert!(log.summary.steps < 200_000);
        assert!(log.records.last().unwrap().x_norm > 50.0);
    }

    #[test]
    fn jsonl_has_the_documented_fields() {
        let p = divpw(3, 1.0);
        let cfg = AdamConfig::new(0.5, 0.9, 0.1);
        let log = run(
            &p,
            &cfg,
            SamplingScheme::cyclic(),
            &RunOptions::new(Budget::Iterations(2), vec![0.0]),
        )
        .unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        for key in [
            "k",
            "i",
            "batch",
            "eta",
            "objective",
            "full_grad_norm",
            "step_norm",
            "x_norm",
        ] {
            assert!(keys.iter().any(|k| k.as_str() == key), "missing {key}");
        }
        assert_eq!(keys.len(), 8);
        let mut csv_buf = Vec::new();
        log.write_summary_csv(&mut csv_buf).unwrap();
        assert_eq!(String::from_utf8(csv_buf).unwrap().lines().count(), 2);
    }
}
