//! A coarse (β1, β2) sweep on the divergence problem started at the kink
//! x0 = −1. Prints the final gap ‖x − x*‖ per cell, an outcome map, and
//! checks that the CSV is byte-identical across worker counts.
//!
//! `cargo run --release --example phase_sweep`

use adam_lab::analysis::Outcome;
use adam_lab::sweep::{fraction_grid, run_sweep, SweepSpec};
use adam_lab::{make_problem, Budget, Family, FamilyParams};

fn main() -> adam_lab::Result<()> {
    let p = make_problem(Family::DivergencePiecewise, 20, &FamilyParams::scale(1.0))?;
    let beta1 = fraction_grid(10);
    let beta2 = vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99, 0.995, 0.999];
    let mut spec = SweepSpec::new(p, beta1.clone(), beta2.clone(), Budget::Epochs(100));
    spec.x0 = vec![-1.0];

    let serial = run_sweep(&spec, 1, None, false)?;
    let parallel = run_sweep(&spec, 4, None, false)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    serial.write_csv(&mut a).expect("in-memory CSV");
    parallel.write_csv(&mut b).expect("in-memory CSV");

    let gaps = serial.heatmap(beta1.len(), beta2.len(), |r| r.final_gap);
    let header: String = beta1.iter().map(|b| format!("{b:>7.1}")).collect();
    println!("final gap (rows: beta2, columns: beta1)\n  beta2 {header}");
    for (b2, row) in beta2.iter().zip(&gaps) {
        let cells: String = row.iter().map(|g| format!("{g:>7.3}")).collect();
        println!("  {b2:<5} {cells}");
    }

    println!("\noutcomes: C converged, P plateau, D diverged, - skipped");
    for (j, b2) in beta2.iter().enumerate() {
        let row: String = serial
            .cells
            .iter()
            .zip(&serial.results)
            .filter(|(c, _)| c.i2 == j)
            .map(|(_, r)| match r.outcome {
                Outcome::Converged => 'C',
                Outcome::Plateau => 'P',
                Outcome::Diverged => 'D',
                Outcome::Skipped => '-',
            })
            .collect();
        println!("  {b2:<5} {row}");
    }
    println!(
        "\nconverged fraction beta2 >= 0.9: {:.2}; beta2 <= 0.1: {:.2}",
        serial.converged_fraction(0.9, 1.0),
        serial.converged_fraction(0.0, 0.1)
    );
    println!("CSV identical under 1 and 4 workers: {}", a == b);
    Ok(())
}
