//! The classic linear counterexample: with β2 = 1/(C²+1) Adam settles at the
//! worst point of the feasible interval instead of the optimum x* = −1.
//!
//! `cargo run --example reddi_lockin`

use adam_lab::{
    make_problem, run, AdamConfig, Budget, Family, FamilyParams, LogPolicy, RunOptions,
    SamplingScheme,
};

fn main() -> adam_lab::Result<()> {
    let p = make_problem(Family::ReddiLinear, 3, &FamilyParams::none())?;
    let c = 3.0_f64;
    let cfg = AdamConfig::new(0.0, 1.0 / (c * c + 1.0), 0.1);
    let opts =
        RunOptions::new(Budget::Iterations(100_000), vec![0.0]).with_log(LogPolicy::every(10_000));
    let log = run(&p, &cfg, SamplingScheme::cyclic(), &opts)?;
    for r in &log.records {
        println!("iteration {:>6}  objective {:.5}", r.k, r.objective);
    }
    println!("final x = {:.6}, optimum x* = -1", log.summary.final_x[0]);
    Ok(())
}
