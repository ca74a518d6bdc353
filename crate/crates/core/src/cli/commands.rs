use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{
    emit_pgm_annotated, AdamArgs, BudgetArgs, CliError, Command, CommonArgs, ConcentrationArgs,
    Normalization, ProblemArgs, RegionArgs, RunArgs, SweepArgs, VerifyArgs,
};
use crate::analysis::{concentration_report, invariant_suite, DiagnosticsConstants, Outcome};
use crate::optimizer::{
    run, AdamConfig, Budget, LogPolicy, RunOptions, RunStatus, SamplingKind, SamplingScheme,
    Schedule,
};
use crate::problems::{make_problem, Family, FamilyParams, LsqData, Problem};
use crate::region::{region_area, region_mask, GridSpec};
use crate::sweep::{fraction_grid, run_sweep, SweepSpec};

type CmdResult = std::result::Result<(), CliError>;

pub(super) fn dispatch(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out),
        Command::Region(args) => cmd_region(&args, out),
        Command::Concentration(args) => cmd_concentration(&args, out),
        Command::Verify(args) => cmd_verify(&args, out),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> CmdResult {
    writeln!(out, "{text}").map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn parse<T: std::str::FromStr<Err = crate::LabError>>(s: &str) -> std::result::Result<T, CliError> {
    s.parse::<T>().map_err(CliError::from)
}

fn out_dir(common: &CommonArgs) -> std::result::Result<&Path, CliError> {
    let dir = common.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes `bytes` to `dir/name` and lists the path in the manifest.
fn write_artifact(
    out: &mut dyn Write,
    dir: &Path,
    name: &str,
    bytes: &[u8],
) -> std::result::Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    say(out, format_args!("wrote {}", path.display()))?;
    Ok(path)
}

fn build_problem(args: &ProblemArgs) -> std::result::Result<Problem, CliError> {
    let family: Family = parse(&args.problem)?;
    let mut params = FamilyParams::none();
    let n = match family {
        Family::ReddiLinear => args.n.unwrap_or(3),
        Family::DivergencePiecewise => {
            params.a = Some(args.a.unwrap_or(1.0));
            args.n.unwrap_or(20)
        }
        Family::NonRealizableQuadratic => {
            params.a = Some(args.a.unwrap_or(10.0));
            args.n.unwrap_or(10)
        }
        Family::LeastSquares => {
            let path = args
                .data
                .as_ref()
                .ok_or_else(|| usage("--problem lsq needs --data <csv>"))?;
            let data = LsqData::from_csv_path(path)?;
            let rows = data.rows.len();
            params.data = Some(data);
            args.n.unwrap_or(rows)
        }
    };
    Ok(make_problem(family, n, &params)?)
}

fn parse_x0(spec: Option<&str>, p: &Problem) -> std::result::Result<Vec<f64>, CliError> {
    let d = p.dim();
    let Some(spec) = spec else {
        let default = if p.family() == Family::DivergencePiecewise {
            1.0
        } else {
            0.0
        };
        return Ok(vec![default; d]);
    };
    let values = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad --x0 value `{s}`")))
        })
        .collect::<std::result::Result<Vec<f64>, _>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        len if len == d => Ok(values),
        len => Err(usage(format!(
            "--x0 has {len} values, the problem has dimension {d}"
        ))),
    }
}

fn parse_budget(args: &BudgetArgs) -> std::result::Result<Budget, CliError> {
    match (args.epochs, args.iters) {
        (Some(e), None) => Ok(Budget::Epochs(e)),
        (None, Some(t)) => Ok(Budget::Iterations(t)),
        (None, None) => Err(usage("one of --epochs or --iters is required")),
        (Some(_), Some(_)) => Err(usage("--epochs and --iters are mutually exclusive")),
    }
}

fn build_config(args: &AdamArgs) -> std::result::Result<AdamConfig, CliError> {
    let schedule: Schedule = parse(&args.schedule)?;
    let mut cfg = AdamConfig::new(args.beta1, args.beta2, args.eta0)
        .with_eps(args.eps.unwrap_or(0.0))
        .with_bias_correction(args.bias_correction)
        .with_schedule(schedule);
    if let Some(v) = args.v_init {
        cfg = cfg.with_v_init(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"))
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CmdResult {
    let p = build_problem(&args.problem)?;
    let cfg = build_config(&args.adam)?;
    let budget = parse_budget(&args.budget)?;
    let kind: SamplingKind = parse(&args.scheme)?;
    let x0 = parse_x0(args.x0.as_deref(), &p)?;
    let expect = args.expect.as_deref().map(parse::<Outcome>).transpose()?;
    let opts = RunOptions::new(budget, x0)
        .with_log(LogPolicy::every(args.log_every))
        .with_tolerance(args.tol)
        .with_cutoff(args.cutoff);
    let scheme = SamplingScheme::new(kind, args.seed.unwrap_or(0));
    let log = run(&p, &cfg, scheme, &opts)?;

    let dir = out_dir(&args.common)?;
    let mut jsonl = Vec::new();
    log.write_jsonl(&mut jsonl)?;
    write_artifact(out, dir, "run.jsonl", &jsonl)?;
    let mut csv_bytes = Vec::new();
    log.write_summary_csv(&mut csv_bytes)
        .map_err(|e| CliError::Runtime(format!("summary csv: {e}")))?;
    write_artifact(out, dir, "run_summary.csv", &csv_bytes)?;

    let s = &log.summary;
    say(out, format_args!("steps           {}", s.steps))?;
    if let RunStatus::Diverged { step, reason } = &s.status {
        say(
            out,
            format_args!("stopped         at step {step}: {reason}"),
        )?;
    }
    say(
        out,
        format_args!("initial gap     {}", fmt_opt(s.initial_gap)),
    )?;
    say(
        out,
        format_args!("final gap       {}", fmt_opt(s.final_gap)),
    )?;
    say(
        out,
        format_args!("initial |grad|  {:.6e}", s.initial_grad_norm),
    )?;
    say(
        out,
        format_args!("final |grad|    {:.6e}", s.final_grad_norm),
    )?;
    say(
        out,
        format_args!("tail |grad|     {:.6e}", s.tail_mean_grad_norm),
    )?;
    say(
        out,
        format_args!("min metric      {}", fmt_opt(s.min_metric)),
    )?;
    say(out, format_args!("outcome         {}", s.outcome))?;
    match expect {
        Some(want) if want != s.outcome => Err(CliError::CheckFailed(format!(
            "expected outcome {want}, got {}",
            s.outcome
        ))),
        _ => Ok(()),
    }
}

fn parse_grid(spec: &str) -> std::result::Result<(usize, usize), CliError> {
    let bad = || usage(format!("--grid must look like 50x50, got `{spec}`"));
    let (a, b) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let r1: usize = a.trim().parse().map_err(|_| bad())?;
    let r2: usize = b.trim().parse().map_err(|_| bad())?;
    if r1 == 0 || r2 == 0 {
        return Err(bad());
    }
    Ok((r1, r2))
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> CmdResult {
    let p = build_problem(&args.problem)?;
    let (r1, r2) = parse_grid(&args.grid)?;
    let budget = parse_budget(&args.budget)?;
    let x0 = parse_x0(args.x0.as_deref(), &p)?;
    let mut spec = SweepSpec::new(p, fraction_grid(r1), fraction_grid(r2), budget);
    spec.scheme = parse(&args.scheme)?;
    spec.schedule = parse(&args.schedule)?;
    spec.eta0 = args.eta0;
    spec.eps = args.eps;
    spec.v_init = args.v_init;
    spec.bias_correction = args.bias_correction;
    spec.x0 = x0;
    spec.base_seed = args.seed.unwrap_or(0);
    spec.seeds_per_cell = args.seeds_per_cell;
    spec.tol_converge = args.tol;
    spec.cutoff = args.cutoff;
    spec.record_wall_time = args.timing;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let dir = out_dir(&args.common)?;
    let csv_path = dir.join("sweep.csv");
    let result = run_sweep(&spec, workers, Some(&csv_path), args.resume)?;
    say(out, format_args!("wrote {}", csv_path.display()))?;
    if args.heatmap {
        let map = result.heatmap(r1, r2, |r| {
            if r.final_gap.is_finite() {
                (1.0 + r.final_gap).log10()
            } else {
                0.0
            }
        });
        let pgm = emit_pgm_annotated(
            &map,
            Normalization::Auto,
            "log10(1 + final gap); rows: beta2 ascending downward; columns: beta1 ascending",
        )?;
        write_artifact(out, dir, "sweep_gap.pgm", &pgm)?;
    }
    let count = |o: Outcome| result.results.iter().filter(|r| r.outcome == o).count();
    say(
        out,
        format_args!(
            "cells {} (resumed {}): converged {}, plateau {}, diverged {}, skipped {}",
            result.results.len(),
            result.resumed,
            count(Outcome::Converged),
            count(Outcome::Plateau),
            count(Outcome::Diverged),
            count(Outcome::Skipped)
        ),
    )
}

fn cmd_region(args: &RegionArgs, out: &mut dyn Write) -> CmdResult {
    if args.res < 2 {
        return Err(usage(format!("--res must be at least 2, got {}", args.res)));
    }
    let mask = region_mask(args.n, &GridSpec::Resolution(args.res))?;
    let dir = out_dir(&args.common)?;
    let stem = format!("region_n{}", args.n);
    let mut csv_bytes = Vec::new();
    mask.write_csv(&mut csv_bytes)
        .map_err(|e| CliError::Runtime(format!("region csv: {e}")))?;
    write_artifact(out, dir, &format!("{stem}.csv"), &csv_bytes)?;
    let pgm = emit_pgm_annotated(
        &mask.image_rows(),
        Normalization::Range { min: 0.0, max: 1.0 },
        &format!(
            "divergence region C1 and C2, n = {}; 255 = inside\n\
             rows: beta2 = (j + 0.5)/{res} ascending downward; columns: beta1 = (i + 0.5)/{res} ascending",
            args.n,
            res = args.res
        ),
    )?;
    write_artifact(out, dir, &format!("{stem}.pgm"), &pgm)?;
    let peak = mask
        .beta2
        .iter()
        .zip(&mask.eta_ceiling)
        .fold(
            (0.0, 0.0),
            |acc, (b, e)| if *e > acc.1 { (*b, *e) } else { acc },
        );
    say(
        out,
        format_args!(
            "n = {}: {} of {} cells inside, area {:.6}",
            args.n,
            mask.true_count(),
            args.res * args.res,
            region_area(&mask)
        ),
    )?;
    say(
        out,
        format_args!(
            "largest C3 stepsize ceiling {:.6} at beta2 = {:.4}",
            peak.1, peak.0
        ),
    )
}

fn cmd_concentration(args: &ConcentrationArgs, out: &mut dyn Write) -> CmdResult {
    let p = build_problem(&ProblemArgs {
        problem: args.problem.clone(),
        n: Some(args.n),
        a: args.a,
        data: None,
    })?;
    let cfg = AdamConfig::new(args.beta1, args.beta2, args.eta0);
    cfg.validate()?;
    let delta = args.delta.unwrap_or(1.0 / (4.0 * p.n() as f64));
    let consts = DiagnosticsConstants::for_problem(&p, &cfg, delta)?;
    if args.iters == 0 || args.stride == 0 {
        return Err(usage("--iters and --stride must be positive"));
    }
    let x0 = parse_x0(Some(&args.x0), &p)?;
    let log_policy = LogPolicy {
        every: args.stride,
        snapshots: true,
        snapshot_stride: 1,
    };
    let opts = RunOptions::new(Budget::Iterations(args.iters), x0).with_log(log_policy);
    let scheme = SamplingScheme::new(SamplingKind::WithReplacement, args.seed.unwrap_or(0));
    let log = run(&p, &cfg, scheme, &opts)?;
    let report = concentration_report(&p, &log, &consts)?;

    let dir = out_dir(&args.common)?;
    let json = serde_json::to_vec_pretty(&report).map_err(crate::LabError::from)?;
    write_artifact(out, dir, "concentration.json", &json)?;
    say(
        out,
        format_args!(
            "precondition {}; C_lower {:.6}, C_upper {:.6}",
            if report.precondition_ok {
                "holds"
            } else {
                "FAILS"
            },
            report.c_lower,
            report.c_upper
        ),
    )?;
    say(
        out,
        format_args!(
            "qualifying {} (from k = {}), violations {} lower / {} upper",
            report.qualifying_steps,
            report.first_qualifying_k,
            report.lower_violations,
            report.upper_violations
        ),
    )?;
    say(
        out,
        format_args!(
            "empirical rate {:.3e}, p_bound {:.3e}, limit {:.3e}",
            report.empirical_rate, report.p_bound, report.binomial_limit
        ),
    )?;
    match report.within_bound {
        Some(false) => Err(CliError::CheckFailed(format!(
            "empirical rate {:.3e} exceeds {:.3e}",
            report.empirical_rate, report.binomial_limit
        ))),
        Some(true) => Ok(()),
        None => say(
            out,
            format_args!("no verdict (precondition fails or nothing qualified)"),
        ),
    }
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    if args.steps == 0 {
        return Err(usage("--steps must be positive"));
    }
    let report = invariant_suite(args.trials, args.seed.unwrap_or(0), args.steps)?;
    let dir = out_dir(&args.common)?;
    let json = serde_json::to_vec_pretty(&report).map_err(crate::LabError::from)?;
    write_artifact(out, dir, "verify.json", &json)?;
    say(
        out,
        format_args!(
            "{} trials, {} steps checked, {} violations",
            report.trials,
            report.steps_checked,
            report.violations.len()
        ),
    )?;
    match report.violations.first() {
        None => Ok(()),
        Some(first) => {
            let detail = first
                .violation
                .as_ref()
                .map_or_else(String::new, |v| format!(": {v}"));
            Err(CliError::CheckFailed(format!(
                "trial {} {}{detail}",
                first.trial, first.check
            )))
        }
    }
}
