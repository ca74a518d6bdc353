//! Deterministic `(β1, β2)` grid experiments.
//!
//! Cells are planned in row-major order (β1 outer, β2 inner, seed innermost);
//! the cell with linear index `j` uses seed `base_seed + j` (wrapping). Each
//! cell is an independent [`run`], so a sweep can be spread over any number
//! of workers; results are sorted by cell index before they are persisted,
//! which makes the CSV a pure function of the spec.
//!
//! While a sweep runs, finished rows are appended to a journal next to the
//! output (`<out>.partial`). With `resume`, rows already present in the output
//! or the journal are kept and their cells are not re-run.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{classify_summary, Outcome};
use crate::error::{LabError, Result};
use crate::optimizer::{
    run, AdamConfig, Budget, LogPolicy, RunOptions, SamplingKind, SamplingScheme, Schedule,
    DEFAULT_CUTOFF,
};
use crate::problems::Problem;

/// `k/res` for `k = 0..res`: the `{k/50}` style grid of the phase diagrams.
pub fn fraction_grid(res: usize) -> Vec<f64> {
    (0..res).map(|k| k as f64 / res as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub problem: Problem,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub scheme: SamplingKind,
    pub budget: Budget,
    pub eta0: f64,
    pub schedule: Schedule,
    pub eps: f64,
    /// `None` uses the default for the chosen `eps` (see [`AdamConfig::with_eps`]).
    pub v_init: Option<f64>,
    pub bias_correction: bool,
    pub x0: Vec<f64>,
    pub base_seed: u64,
    pub seeds_per_cell: usize,
    pub tol_converge: f64,
    pub cutoff: f64,
    /// Record wall-clock time per cell. Off by default so the CSV is
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl SweepSpec {
    /// Defaults: cyclic order, `η0 = 0.1` with `η0/√k`, `ε = 1e-8`,
    /// `x0 = 0`, one seed per cell, `tol = 0.5`, cutoff `1e6`.
    pub fn new(problem: Problem, beta1: Vec<f64>, beta2: Vec<f64>, budget: Budget) -> Self {
        let d = problem.dim();
        Self {
            problem,
            beta1,
            beta2,
            scheme: SamplingKind::Cyclic,
            budget,
            eta0: 0.1,
            schedule: Schedule::InverseSqrt,
            eps: 1e-8,
            v_init: None,
            bias_correction: false,
            x0: vec![0.0; d],
            base_seed: 0,
            seeds_per_cell: 1,
            tol_converge: 0.5,
            cutoff: DEFAULT_CUTOFF,
            record_wall_time: false,
        }
    }

    pub fn config(&self, beta1: f64, beta2: f64) -> AdamConfig {
        let mut cfg = AdamConfig::new(beta1, beta2, self.eta0)
            .with_eps(self.eps)
            .with_schedule(self.schedule)
            .with_bias_correction(self.bias_correction);
        if let Some(v) = self.v_init {
            cfg = cfg.with_v_init(v);
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.beta1.is_empty() || self.beta2.is_empty() {
            return Err(LabError::EmptyGrid);
        }
        if self.seeds_per_cell == 0 {
            return Err(LabError::param("seeds_per_cell must be at least 1"));
        }
        if self.budget.is_zero() {
            return Err(LabError::param("budget must be at least 1"));
        }
        if self.x0.len() != self.problem.dim() {
            return Err(LabError::Dimension {
                expected: self.problem.dim(),
                got: self.x0.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Position in the planned order.
    pub index: usize,
    pub i1: usize,
    pub i2: usize,
    /// Replicate number within the cell, `0..seeds_per_cell`.
    pub replicate: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Cell {
    pub fn key(&self) -> (usize, usize, u64) {
        (self.i1, self.i2, self.seed)
    }
}

/// All cells of the sweep in persisted order.
pub fn plan_grid(spec: &SweepSpec) -> Result<Vec<Cell>> {
    spec.validate()?;
    let (n1, n2, s) = (spec.beta1.len(), spec.beta2.len(), spec.seeds_per_cell);
    let mut cells = Vec::with_capacity(n1 * n2 * s);
    for (i1, &beta1) in spec.beta1.iter().enumerate() {
        for (i2, &beta2) in spec.beta2.iter().enumerate() {
            for replicate in 0..s {
                let index = (i1 * n2 + i2) * s + replicate;
                cells.push(Cell {
                    index,
                    i1,
                    i2,
                    replicate,
                    beta1,
                    beta2,
                    seed: spec.base_seed.wrapping_add(index as u64),
                });
            }
        }
    }
    Ok(cells)
}

/// One persisted sweep row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub beta1: f64,
    pub beta2: f64,
    pub n: usize,
    pub a: Option<f64>,
    pub seed: u64,
    pub scheme: String,
    pub budget: String,
    pub outcome: Outcome,
    /// `‖x − x*‖` when `x*` is known, otherwise the final full-gradient norm.
    pub final_gap: f64,
    pub final_grad_norm: f64,
    pub min_metric: Option<f64>,
    pub steps: u64,
    pub wall_ms: u64,
    /// Why a cell was skipped; not persisted.
    #[serde(skip)]
    pub note: Option<String>,
}

/// Runs a single cell. Invalid configurations give a `Skipped` row and
/// blow-ups a `Diverged` row; this never fails.
pub fn run_cell(spec: &SweepSpec, cell: &Cell) -> SweepResult {
    let p = &spec.problem;
    let start = Instant::now();
    let mut row = SweepResult {
        beta1: cell.beta1,
        beta2: cell.beta2,
        n: p.n(),
        a: p.scale(),
        seed: cell.seed,
        scheme: spec.scheme.to_string(),
        budget: spec.budget.to_string(),
        outcome: Outcome::Skipped,
        final_gap: f64::NAN,
        final_grad_norm: f64::NAN,
        min_metric: None,
        steps: 0,
        wall_ms: 0,
        note: None,
    };
    let config = spec.config(cell.beta1, cell.beta2);
    let opts = RunOptions::new(spec.budget, spec.x0.clone())
        .with_log(LogPolicy::summary_only())
        .with_tolerance(spec.tol_converge)
        .with_cutoff(spec.cutoff);
    match run(
        p,
        &config,
        SamplingScheme::new(spec.scheme, cell.seed),
        &opts,
    ) {
        Ok(log) => {
            let s = &log.summary;
            row.outcome = classify_summary(s, spec.tol_converge, spec.cutoff);
            row.final_gap = s.final_gap.unwrap_or(s.final_grad_norm);
            row.final_grad_norm = s.final_grad_norm;
            row.min_metric = s.min_metric;
            row.steps = s.steps;
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    if spec.record_wall_time {
        row.wall_ms = start.elapsed().as_millis() as u64;
    }
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub cells: Vec<Cell>,
    /// One row per planned cell, in cell order.
    pub results: Vec<SweepResult>,
    /// Cells taken from a previous run instead of being executed.
    pub resumed: usize,
}

impl SweepOutput {
    pub fn write_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.results {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Image matrix of `value` averaged over replicates: row `j` is
    /// `beta2[j]` (β2 increasing downward), column `i` is `beta1[i]`.
    pub fn heatmap(
        &self,
        n1: usize,
        n2: usize,
        value: impl Fn(&SweepResult) -> f64,
    ) -> Vec<Vec<f64>> {
        let mut sum = vec![vec![0.0; n1]; n2];
        let mut count = vec![vec![0usize; n1]; n2];
        for (cell, r) in self.cells.iter().zip(&self.results) {
            sum[cell.i2][cell.i1] += value(r);
            count[cell.i2][cell.i1] += 1;
        }
        for (row, counts) in sum.iter_mut().zip(&count) {
            for (v, c) in row.iter_mut().zip(counts) {
                *v /= (*c).max(1) as f64;
            }
        }
        sum
    }

    /// Fraction of `Converged` rows among those with `β2` in `[lo, hi]`.
    pub fn converged_fraction(&self, lo: f64, hi: f64) -> f64 {
        let band: Vec<&SweepResult> = self
            .results
            .iter()
            .filter(|r| r.beta2 >= lo && r.beta2 <= hi)
            .collect();
        if band.is_empty() {
            return 0.0;
        }
        band.iter()
            .filter(|r| r.outcome == Outcome::Converged)
            .count() as f64
            / band.len() as f64
    }
}

/// Path of the journal kept beside `out` while a sweep runs.
pub fn journal_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

fn read_rows(path: &Path, has_headers: bool) -> Result<Vec<SweepResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .from_path(path)
        .map_err(|e| LabError::csv(path, e))?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        match row {
            Ok(r) => rows.push(r),
            // A torn last line from an interrupted journal write is dropped.
            Err(e) if !has_headers && matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) => {
            }
            Err(e) => return Err(LabError::csv(path, e)),
        }
    }
    Ok(rows)
}

/// Runs every planned cell on `workers` threads. With `out`, writes the CSV
/// there (via a journal, see the module docs); with `resume`, reuses rows
/// from an earlier, possibly interrupted, run of the same spec.
pub fn run_sweep(
    spec: &SweepSpec,
    workers: usize,
    out: Option<&Path>,
    resume: bool,
) -> Result<SweepOutput> {
    if workers == 0 {
        return Err(LabError::param("worker count must be at least 1"));
    }
    let cells = plan_grid(spec)?;

    let mut done: HashMap<(usize, usize, u64), SweepResult> = HashMap::new();
    if let (Some(out), true) = (out, resume) {
        let index1 = |b: f64| spec.beta1.iter().position(|v| *v == b);
        let index2 = |b: f64| spec.beta2.iter().position(|v| *v == b);
        let previous = read_rows(out, true)?
            .into_iter()
            .chain(read_rows(&journal_path(out), false)?);
        for row in previous {
            if let (Some(i1), Some(i2)) = (index1(row.beta1), index2(row.beta2)) {
                done.insert((i1, i2, row.seed), row);
            }
        }
    }

    let journal = match out {
        Some(out) => {
            let path = journal_path(out);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(resume)
                .write(true)
                .truncate(!resume)
                .open(&path)
                .map_err(|e| LabError::io(&path, e))?;
            Some((
                path,
                Mutex::new(
                    csv::WriterBuilder::new()
                        .has_headers(false)
                        .from_writer(file),
                ),
            ))
        }
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::param(format!("cannot start worker pool: {e}")))?;
    let resumed = cells.iter().filter(|c| done.contains_key(&c.key())).count();
    let results: Vec<Result<SweepResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                if let Some(row) = done.get(&cell.key()) {
                    return Ok(row.clone());
                }
                let row = run_cell(spec, cell);
                if let Some((path, writer)) = &journal {
                    let mut w = writer.lock().expect("journal writer poisoned");
                    w.serialize(&row).map_err(|e| LabError::csv(path, e))?;
                    w.flush().map_err(|e| LabError::io(path, e))?;
                }
                Ok(row)
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let output = SweepOutput {
        cells,
        results,
        resumed,
    };

    if let (Some(out), Some((journal_path, writer))) = (out, journal) {
        drop(writer);
        let tmp = out.with_extension("csv.tmp");
        let file = File::create(&tmp).map_err(|e| LabError::io(&tmp, e))?;
        output.write_csv(file).map_err(|e| LabError::csv(&tmp, e))?;
        fs::rename(&tmp, out).map_err(|e| LabError::io(out, e))?;
        fs::remove_file(&journal_path).map_err(|e| LabError::io(&journal_path, e))?;
    }
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Family, FamilyParams};

    fn divpw_spec(res: usize, epochs: u64) -> SweepSpec {
        let p = make_problem(Family::DivergencePiecewise, 20, &FamilyParams::scale(1.0)).unwrap();
        let mut spec = SweepSpec::new(
            p,
            fraction_grid(res),
            fraction_grid(res),
            Budget::Epochs(epochs),
        );
        spec.x0 = vec![1.0];
        spec
    }

    #[test]
    fn plan_order_and_seeds() {
        let mut spec = divpw_spec(2, 1);
        let cells = plan_grid(&spec).unwrap();
        assert_eq!(cells.len(), 4);
        let order: Vec<(usize, usize)> = cells.iter().map(|c| (c.i1, c.i2)).collect();
        assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(
            cells.iter().map(|c| c.seed).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );

        spec.base_seed = u64::MAX;
        let shifted = plan_grid(&spec).unwrap();
        assert_eq!(shifted[0].seed, u64::MAX);
        assert_eq!(shifted[1].seed, 0);
        assert!(shifted
            .iter()
            .zip(&cells)
            .all(|(a, b)| a.i1 == b.i1 && a.i2 == b.i2));

        spec.seeds_per_cell = 3;
        let with_reps = plan_grid(&spec).unwrap();
        assert_eq!(with_reps.len(), 12);
        assert_eq!(with_reps[4].replicate, 1);
        assert_eq!(with_reps[4].i2, 1);

        assert_eq!(plan_grid(&divpw_spec(50, 1)).unwrap().len(), 2500);
        spec.beta1.clear();
        assert!(matches!(plan_grid(&spec), Err(LabError::EmptyGrid)));
    }

    #[test]
    fn cell_examples_from_the_divergence_figure() {
        let spec = divpw_spec(2, 2500);
        let cell = |beta1, beta2| Cell {
            index: 0,
            i1: 0,
            i2: 0,
            replicate: 0,
            beta1,
            beta2,
            seed: 0,
        };
        let bad = run_cell(&spec, &cell(0.0, 0.1));
        assert!(matches!(bad.outcome, Outcome::Diverged | Outcome::Plateau));
        assert!(bad.final_gap >= 30.0, "{bad:?}");
        let good = run_cell(&spec, &cell(0.5, 0.999));
        assert_eq!(good.outcome, Outcome::Converged);
        assert!(good.final_gap <= 0.5);
    }

    #[test]
    fn reddi_cell_locks_in() {
        let p = make_problem(Family::ReddiLinear, 3, &FamilyParams::none()).unwrap();
        let spec = SweepSpec::new(p, vec![0.0], vec![0.1], Budget::Iterations(100_000));
        let out = run_sweep(&spec, 1, None, false).unwrap();
        let r = &out.results[0];
        assert!(r.final_gap >= 1.9, "x should sit near +1: {r:?}");
    }

    #[test]
    fn invalid_cells_are_skipped() {
        let mut spec = divpw_spec(2, 2);
        spec.beta1 = vec![0.5, 1.0];
        let out = run_sweep(&spec, 2, None, false).unwrap();
        assert_eq!(out.results[2].outcome, Outcome::Skipped);
        assert!(out.results[2].note.as_deref().unwrap().contains("beta1"));
        assert_ne!(out.results[0].outcome, Outcome::Skipped);
    }

    #[test]
    fn worker_count_does_not_change_bytes() {
        let spec = divpw_spec(6, 20);
        let render = |workers| {
            let mut buf = Vec::new();
            run_sweep(&spec, workers, None, false)
                .unwrap()
                .write_csv(&mut buf)
                .unwrap();
            buf
        };
        let one = render(1);
        assert_eq!(one, render(4));
        let text = String::from_utf8(one).unwrap();
        assert!(text.starts_with(
            "beta1,beta2,n,a,seed,scheme,budget,outcome,final_gap,final_grad_norm,min_metric,steps,wall_ms\n"
        ));
        assert_eq!(text.lines().count(), 37);
    }

    #[test]
    fn changing_one_seed_touches_one_row() {
        let mut spec = divpw_spec(3, 5);
        spec.scheme = SamplingKind::WithReplacement;
        let cells = plan_grid(&spec).unwrap();
        let base: Vec<SweepResult> = cells.iter().map(|c| run_cell(&spec, c)).collect();
        let mut tweaked = cells.clone();
        tweaked[4].seed ^= 0xDEAD_BEEF;
        let changed: Vec<SweepResult> = tweaked.iter().map(|c| run_cell(&spec, c)).collect();
        for (k, (a, b)) in base.iter().zip(&changed).enumerate() {
            if k != 4 {
                assert_eq!(a, b);
            }
        }
        assert_ne!(base[4].seed, changed[4].seed);
    }

    #[test]
    fn resume_skips_completed_cells() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep.csv");
        let spec = divpw_spec(4, 10);
        let full = run_sweep(&spec, 2, Some(&out), false).unwrap();
        assert_eq!(full.resumed, 0);
        assert!(!journal_path(&out).exists());
        let reference = fs::read(&out).unwrap();

        // Simulate an interruption: only a journal with some rows survives.
        fs::remove_file(&out).unwrap();
        let mut journal = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(journal_path(&out))
            .unwrap();
        for r in full.results.iter().step_by(3) {
            journal.serialize(r).unwrap();
        }
        drop(journal);
        let again = run_sweep(&spec, 3, Some(&out), true).unwrap();
        assert_eq!(again.resumed, 6);
        assert_eq!(fs::read(&out).unwrap(), reference);

        let finished = run_sweep(&spec, 1, Some(&out), true).unwrap();
        assert_eq!(finished.resumed, 16);
        assert_eq!(fs::read(&out).unwrap(), reference);
    }

    #[test]
    fn heatmap_orientation() {
        let spec = divpw_spec(3, 3);
        let out = run_sweep(&spec, 1, None, false).unwrap();
        let map = out.heatmap(3, 3, |r| r.beta2 * 10.0 + r.beta1);
        assert_eq!(map.len(), 3);
        assert!((map[2][0] - spec.beta2[2] * 10.0).abs() < 1e-12);
        assert!((map[0][1] - spec.beta1[1]).abs() < 1e-12);
    }
}
