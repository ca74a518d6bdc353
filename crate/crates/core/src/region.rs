//! Analytic divergence conditions over the `(β1, β2)` plane.
//!
//! On the divergence construction with `n` components, Adam with cyclic
//! ordering diverges when
//!
//! - **C1**: `(n−1−t)(1−β1^t) / √(1 + max{0.1, β2^{n−1} n²}) ≥
//!   (1−β1)/√(1−β2) + β1 n/√(1−β2)` with
//!   `t = min{n−1, ln(1/(10n²))/ln β2}`,
//! - **C2**: `1 − β1^{n−1} > (1−β1) β1^{n−1} n`,
//! - **C3**: `η0 ≤ 2√((1−β2) β2ⁿ)`.
//!
//! Masks record C1 ∧ C2; C3 is a stepsize ceiling reported per `β2`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(LabError::param(format!(
            "the region conditions need n ≥ 3, got {n}"
        )));
    }
    Ok(())
}

fn check_beta1(beta1: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(LabError::param(format!(
            "beta1 must lie in [0, 1), got {beta1}"
        )));
    }
    Ok(())
}

/// Condition C1. The power `β1^t` uses `0^t = 0` for `t > 0`.
pub fn cond_c1(beta1: f64, beta2: f64, n: usize) -> Result<bool> {
    check_n(n)?;
    check_beta1(beta1)?;
    if !(beta2 > 0.0 && beta2 < 1.0) {
        return Err(LabError::param(format!(
            "C1 needs beta2 in (0, 1), got {beta2}"
        )));
    }
    let nf = n as f64;
    let t = (nf - 1.0).min((1.0 / (10.0 * nf * nf)).ln() / beta2.ln());
    let b1t = if beta1 == 0.0 { 0.0 } else { beta1.powf(t) };
    let lhs = (nf - 1.0 - t) * (1.0 - b1t)
        / (1.0 + 0.1f64.max(beta2.powi(n as i32 - 1) * nf * nf)).sqrt();
    let rhs = (1.0 - beta1) / (1.0 - beta2).sqrt() + beta1 * nf / (1.0 - beta2).sqrt();
    Ok(lhs >= rhs)
}

/// Condition C2.
pub fn cond_c2(beta1: f64, n: usize) -> Result<bool> {
    check_n(n)?;
    check_beta1(beta1)?;
    let p = beta1.powi(n as i32 - 1);
    Ok(1.0 - p > (1.0 - beta1) * p * n as f64)
}

/// Stepsize ceiling of condition C3: `2√((1−β2) β2ⁿ)`, for `β2 ∈ [0, 1]`.
pub fn max_eta_c3(beta2: f64, n: usize) -> f64 {
    2.0 * ((1.0 - beta2) * beta2.powi(n as i32)).sqrt()
}

/// The `(β1, β2)` grid a mask is evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// Cell-centered grid `(i + 0.5)/res`, `i = 0..res`, on both axes.
    Resolution(usize),
    /// Explicit ascending axes.
    Explicit { beta1: Vec<f64>, beta2: Vec<f64> },
}

impl GridSpec {
    /// The validated `(β1, β2)` axes.
    pub fn axes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            GridSpec::Resolution(res) => {
                if *res < 2 {
                    return Err(LabError::param(format!(
                        "resolution must be at least 2, got {res}"
                    )));
                }
                let axis: Vec<f64> = (0..*res).map(|i| (i as f64 + 0.5) / *res as f64).collect();
                Ok((axis.clone(), axis))
            }
            GridSpec::Explicit { beta1, beta2 } => {
                if beta1.is_empty() || beta2.is_empty() {
                    return Err(LabError::EmptyGrid);
                }
                let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
                if !ascending(beta1) || !ascending(beta2) {
                    return Err(LabError::param("grid axes must be strictly ascending"));
                }
                if beta1.iter().any(|b| !(0.0..1.0).contains(b)) {
                    return Err(LabError::param("beta1 grid values must lie in [0, 1)"));
                }
                if beta2.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
                    return Err(LabError::param("beta2 grid values must lie in (0, 1)"));
                }
                Ok((beta1.clone(), beta2.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    pub n: usize,
    pub grid: GridSpec,
    /// Ascending β1 axis.
    pub beta1: Vec<f64>,
    /// Ascending β2 axis.
    pub beta2: Vec<f64>,
    /// `cells[i][j]` is C1 ∧ C2 at `(beta1[i], beta2[j])`.
    pub cells: Vec<Vec<bool>>,
    /// C3 stepsize ceiling at each `beta2[j]`.
    pub eta_ceiling: Vec<f64>,
}

/// Evaluates C1 ∧ C2 on every grid cell (in parallel, assembled in index
/// order).
pub fn region_mask(n: usize, grid: &GridSpec) -> Result<RegionMask> {
    check_n(n)?;
    let (b1s, b2s) = grid.axes()?;
    let cells = b1s
        .par_iter()
        .map(|&b1| {
            let c2 = cond_c2(b1, n)?;
            b2s.iter()
                .map(|&b2| Ok(c2 && cond_c1(b1, b2, n)?))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let eta_ceiling = b2s.iter().map(|&b2| max_eta_c3(b2, n)).collect();
    Ok(RegionMask {
        n,
        grid: grid.clone(),
        beta1: b1s,
        beta2: b2s,
        cells,
        eta_ceiling,
    })
}

/// Fraction of cells inside the region.
pub fn region_area(mask: &RegionMask) -> f64 {
    let total = mask.beta1.len() * mask.beta2.len();
    if total == 0 {
        return 0.0;
    }
    mask.true_count() as f64 / total as f64
}

#[derive(Serialize)]
struct MaskRow {
    beta1: f64,
    beta2: f64,
    in_region: u8,
}

impl RegionMask {
    pub fn true_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| **c).count()
    }

    pub fn get(&self, i1: usize, i2: usize) -> bool {
        self.cells[i1][i2]
    }

    /// Image matrix for heatmaps: row `j` is `beta2[j]` (β2 increasing
    /// downward), column `i` is `beta1[i]`; 1.0 = in region.
    pub fn image_rows(&self) -> Vec<Vec<f64>> {
        (0..self.beta2.len())
            .map(|j| {
                (0..self.beta1.len())
                    .map(|i| if self.cells[i][j] { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// CSV with columns `beta1,beta2,in_region` (1 = inside), β1 outer and
    /// β2 inner.
    pub fn write_csv<W: Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        for (i, &beta1) in self.beta1.iter().enumerate() {
            for (j, &beta2) in self.beta2.iter().enumerate() {
                wtr.serialize(MaskRow {
                    beta1,
                    beta2,
                    in_region: self.cells[i][j] as u8,
                })?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn c1_examples() {
        assert!(cond_c1(0.0, 0.1, 20).unwrap());
        assert!(!cond_c1(0.0, 0.99, 20).unwrap());
        assert!(!cond_c1(0.3, 1.0 - 1e-9, 20).unwrap());
        assert!(cond_c1(0.0, 1.0, 20).is_err());
        assert!(cond_c1(0.0, 0.5, 2).is_err());
    }

    #[test]
    fn c2_examples() {
        assert!(cond_c2(0.0, 5).unwrap());
        assert!(cond_c2(0.5, 5).unwrap());
        assert!(!cond_c2(0.99, 5).unwrap());
        assert!(cond_c2(1.0, 5).is_err());
    }

    #[test]
    fn c3_examples() {
        assert_eq!(max_eta_c3(1.0, 5), 0.0);
        assert_eq!(max_eta_c3(0.0, 1), 0.0);
        assert_relative_eq!(
            max_eta_c3(0.5, 2),
            2.0 * 0.125f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn c3_peaks_at_n_over_n_plus_one() {
        let res = 2000;
        for n in [3usize, 5, 20, 50] {
            let (arg, _) = (0..res)
                .map(|i| (i as f64 + 0.5) / res as f64)
                .map(|b| (b, max_eta_c3(b, n)))
                .fold(
                    (0.0, f64::NEG_INFINITY),
                    |acc, c| if c.1 > acc.1 { c } else { acc },
                );
            assert!((arg - n as f64 / (n as f64 + 1.0)).abs() <= 1.0 / res as f64);
        }
    }

    #[test]
    fn c2_true_set_is_a_prefix() {
        for n in 3..=100 {
            let flags: Vec<bool> = (0..2000)
                .map(|i| cond_c2(i as f64 / 2000.0, n).unwrap())
                .collect();
            let first_false = flags.iter().position(|f| !f).unwrap_or(flags.len());
            assert!(flags[first_false..].iter().all(|f| !f), "n = {n}");
        }
    }

    #[test]
    fn frozen_areas_and_growth() {
        // Cell counts from an independent numpy evaluation of C1 ∧ C2.
        let grid = GridSpec::Resolution(200);
        let want = [(5, 946), (10, 4790), (20, 9655), (50, 15323), (100, 18439)];
        let mut last = 0.0;
        for (n, count) in want {
            let mask = region_mask(n, &grid).unwrap();
            assert_eq!(mask.true_count(), count, "n = {n}");
            let area = region_area(&mask);
            assert!(area >= last);
            last = area;
        }
    }

    #[test]
    fn high_beta2_rows_are_empty_for_n20() {
        let mask = region_mask(20, &GridSpec::Resolution(200)).unwrap();
        for (j, &b2) in mask.beta2.iter().enumerate() {
            if b2 >= 0.99 {
                assert!((0..200).all(|i| !mask.get(i, j)));
            }
        }
        assert!(mask.get(0, 0));
    }

    #[test]
    fn refinement_keeps_true_centers() {
        let coarse = region_mask(10, &GridSpec::Resolution(20)).unwrap();
        let fine = region_mask(10, &GridSpec::Resolution(60)).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                if coarse.get(i, j) {
                    assert!(fine.get(3 * i + 1, 3 * j + 1));
                }
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::Resolution(1).axes().is_err());
        let bad = GridSpec::Explicit {
            beta1: vec![0.0],
            beta2: vec![1.0],
        };
        assert!(bad.axes().is_err());
        let empty = GridSpec::Explicit {
            beta1: vec![],
            beta2: vec![0.5],
        };
        assert!(matches!(empty.axes(), Err(LabError::EmptyGrid)));
        let unsorted = GridSpec::Explicit {
            beta1: vec![0.2, 0.1],
            beta2: vec![0.5],
        };
        assert!(unsorted.axes().is_err());
    }

    #[test]
    fn csv_and_image_layout() {
        let mask = region_mask(
            20,
            &GridSpec::Explicit {
                beta1: vec![0.0, 0.95],
                beta2: vec![0.1, 0.999],
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        mask.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "beta1,beta2,in_region\n0.0,0.1,1\n0.0,0.999,0\n0.95,0.1,0\n0.95,0.999,0\n"
        );
        assert_eq!(mask.image_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
    }
}
