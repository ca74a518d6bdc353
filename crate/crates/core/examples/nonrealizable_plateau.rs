//! Bias-corrected RMSProp on the non-realizable quadratic: the gradient
//! plateau shrinks as β2 approaches one.
//!
//! `cargo run --release --example nonrealizable_plateau`

use adam_lab::{
    make_problem, run, AdamConfig, Budget, Family, FamilyParams, LogPolicy, RunOptions,
    SamplingScheme,
};

fn main() -> adam_lab::Result<()> {
    let p = make_problem(
        Family::NonRealizableQuadratic,
        10,
        &FamilyParams::scale(10.0),
    )?;
    for beta2 in [0.9, 0.99, 0.999, 0.9999] {
        let cfg = AdamConfig::new(0.0, beta2, 0.1)
            .with_eps(1e-8)
            .with_bias_correction(true);
        let opts = RunOptions::new(Budget::Iterations(100_000), vec![0.0])
            .with_log(LogPolicy::summary_only());
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts)?;
        println!(
            "beta2 = {beta2:<7} tail-mean |grad| = {:.4e}  min |grad| = {:.4e}  ({:?})",
            log.summary.tail_mean_grad_norm, log.summary.min_grad_norm, log.summary.outcome
        );
    }
    Ok(())
}
