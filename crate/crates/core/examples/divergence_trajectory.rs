//! Cyclic Adam on the piecewise divergence problem: a small-β2 configuration
//! drifts away from the optimum while a large-β2 one converges.
//!
//! `cargo run --example divergence_trajectory`

use adam_lab::{
    make_problem, run, AdamConfig, Budget, Family, FamilyParams, LogPolicy, RunOptions,
    SamplingScheme,
};

fn main() -> adam_lab::Result<()> {
    let p = make_problem(Family::DivergencePiecewise, 20, &FamilyParams::scale(1.0))?;
    for (beta1, beta2) in [(0.0, 0.1), (0.5, 0.999)] {
        let cfg = AdamConfig::new(beta1, beta2, 0.1).with_eps(1e-8);
        let opts =
            RunOptions::new(Budget::Epochs(2500), vec![1.0]).with_log(LogPolicy::every(20 * 250));
        let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts)?;
        println!("beta1 = {beta1}, beta2 = {beta2}");
        for r in &log.records {
            println!(
                "  epoch {:>5}  objective {:>12.4}  |grad| {:.4}",
                r.k, r.objective, r.full_grad_norm
            );
        }
        println!(
            "  final gap {:.4} -> {:?}\n",
            log.summary.final_gap.unwrap_or(f64::NAN),
            log.summary.outcome
        );
    }
    Ok(())
}
