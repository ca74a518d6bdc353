//! Estimates the variance constant D1 of the divergence problem (with the
//! scale a = 1/(n−1)² that keeps D1 within 2n²) from its default sample
//! points, and cross-checks a component gradient by finite differences.
//!
//! `cargo run --example variance_constants`

use adam_lab::problems::{estimate_variance_constants, fd_check};
use adam_lab::{make_problem, Family, FamilyParams};

fn main() -> adam_lab::Result<()> {
    for n in [5, 10, 20] {
        let a = 1.0 / ((n - 1) * (n - 1)) as f64;
        let p = make_problem(Family::DivergencePiecewise, n, &FamilyParams::scale(a))?;
        let samples = p.default_samples();
        let d1 = estimate_variance_constants(&p, &samples, 0.0)?;
        let err = fd_check(&p, 0, &[0.3], 1e-6)?;
        println!(
            "n = {n:>2}: D1 = {d1:.4} (2n² = {}) over {} samples, L = {:.3}, finite-difference error {err:.2e}",
            2 * n * n,
            samples.len(),
            p.lipschitz()
        );
    }
    Ok(())
}
