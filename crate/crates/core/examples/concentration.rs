//! Checks the second-moment concentration sandwich along a with-replacement
//! run on the divergence problem and compares the empirical failure rate
//! with the per-step bound.
//!
//! `cargo run --release --example concentration`

use adam_lab::analysis::{concentration_report, DiagnosticsConstants};
use adam_lab::{
    make_problem, run, AdamConfig, Budget, Family, FamilyParams, LogPolicy, RunOptions,
    SamplingKind, SamplingScheme,
};

fn main() -> adam_lab::Result<()> {
    let n = 5;
    let p = make_problem(Family::DivergencePiecewise, n, &FamilyParams::scale(1.0))?;
    let cfg = AdamConfig::new(0.9, 0.9999, 1e-3);
    let delta = 1.0 / (4.0 * n as f64);
    let consts = DiagnosticsConstants::for_problem(&p, &cfg, delta)?;
    let opts = RunOptions::new(Budget::Iterations(25_000), vec![-1000.0])
        .with_log(LogPolicy::instrumented());
    let log = run(
        &p,
        &cfg,
        SamplingScheme::new(SamplingKind::WithReplacement, 5),
        &opts,
    )?;
    let report = concentration_report(&p, &log, &consts)?;
    println!(
        "C_lower = {:.6}, C_upper = {:.6}",
        report.c_lower, report.c_upper
    );
    println!("first qualifying k = {}", report.first_qualifying_k);
    println!(
        "qualifying steps {}, violations {} lower / {} upper",
        report.qualifying_steps, report.lower_violations, report.upper_violations
    );
    println!(
        "empirical rate {:.3e} vs per-step bound {:.3e} (limit {:.3e}) -> within bound: {:?}",
        report.empirical_rate, report.p_bound, report.binomial_limit, report.within_bound
    );
    Ok(())
}
