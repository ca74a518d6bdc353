//! Sufficient divergence region in the (β1, β2) square for several n,
//! drawn as ASCII with β2 increasing downward.
//!
//! `cargo run --example region_masks`

use adam_lab::region::{max_eta_c3, region_area, region_mask, GridSpec};

fn main() -> adam_lab::Result<()> {
    for n in [5, 10, 20, 50, 100] {
        let mask = region_mask(n, &GridSpec::Resolution(200))?;
        println!(
            "n = {n:>3}: area {:.4}, stepsize ceiling at beta2 = 0.9: {:.3e}",
            region_area(&mask),
            max_eta_c3(0.9, n)
        );
    }

    let mask = region_mask(20, &GridSpec::Resolution(40))?;
    println!("\nn = 20 (columns: beta1 0 -> 1, rows: beta2 0 -> 1)");
    for row in mask.image_rows() {
        let line: String = row
            .iter()
            .map(|&v| if v > 0.0 { '#' } else { '.' })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
