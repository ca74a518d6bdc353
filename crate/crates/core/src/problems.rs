//! Closed-form finite-sum problem families.
//!
//! Every problem is `f(x) = (1/n) Σ_i f_i(x)` with exact component values and
//! gradients. Four families are provided:
//!
//! | family | CLI name | d | components |
//! |---|---|---|---|
//! | [`Family::ReddiLinear`] | `reddi` | 1 | `f_0 = n x`, `f_i = -x`, box `[-1, 1]` |
//! | [`Family::DivergencePiecewise`] | `divpw` | 1 | linear for `x >= -1`, quadratic below |
//! | [`Family::NonRealizableQuadratic`] | `nonreal` | 1 | `(x-a)^2` and nine `-0.1 (x - 10a/9)^2` |
//! | [`Family::LeastSquares`] | `lsq` | any | `½ (a_iᵀx - b_i)^2` |
//!
//! Problems are immutable after construction and can be shared freely across
//! threads.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::SplitMix64;

/// Location of the branch switch in the piecewise family. The gradient at the
/// kink itself is taken from the `x >= -1` branch.
pub const KINK: f64 = -1.0;

/// Number of points in the default sample grid used by
/// [`estimate_variance_constants`].
pub const DEFAULT_SAMPLE_COUNT: usize = 512;

/// Half-width of the default sample box `[-10, 10]^d`.
pub const DEFAULT_SAMPLE_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    ReddiLinear,
    DivergencePiecewise,
    NonRealizableQuadratic,
    LeastSquares,
}

impl Family {
    pub fn cli_name(self) -> &'static str {
        match self {
            Family::ReddiLinear => "reddi",
            Family::DivergencePiecewise => "divpw",
            Family::NonRealizableQuadratic => "nonreal",
            Family::LeastSquares => "lsq",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Family {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reddi" => Ok(Family::ReddiLinear),
            "divpw" => Ok(Family::DivergencePiecewise),
            "nonreal" => Ok(Family::NonRealizableQuadratic),
            "lsq" => Ok(Family::LeastSquares),
            other => Err(LabError::param(format!(
                "unknown problem family `{other}` (expected reddi, divpw, nonreal or lsq)"
            ))),
        }
    }
}

/// Data matrix and targets of a least-squares problem, one row per equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqData {
    pub rows: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LsqData {
    /// Reads a headerless CSV where each row is `a_i1, ..., a_id, b_i`.
    pub fn from_csv_reader<R: Read>(reader: R) -> std::result::Result<Self, csv::Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        let mut b = Vec::new();
        for record in rdr.deserialize::<Vec<f64>>() {
            let mut values = record?;
            let target = values.pop().unwrap_or(f64::NAN);
            rows.push(values);
            b.push(target);
        }
        Ok(Self { rows, b })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
        Self::from_csv_reader(file).map_err(|e| LabError::csv(path, e))
    }
}

/// Family-specific parameters for [`make_problem`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FamilyParams {
    /// Scale `a` for `divpw` and `nonreal`.
    pub a: Option<f64>,
    /// Matrix and targets for `lsq`.
    pub data: Option<LsqData>,
}

impl FamilyParams {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn scale(a: f64) -> Self {
        Self {
            a: Some(a),
            data: None,
        }
    }

    pub fn data(rows: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        Self {
            a: None,
            data: Some(LsqData { rows, b }),
        }
    }
}

/// Closed interval `[lo, hi]` for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Analytic smoothness and variance constants of a problem.
///
/// `d0` and `d1` satisfy `Σ_i ‖∇f_i(x)‖² ≤ d1 ‖∇f(x)‖² + d0` for all `x`, and
/// are never both zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownConstants {
    pub lipschitz: f64,
    pub d0: f64,
    pub d1: f64,
    /// Infimum of `f`; `-inf` when unbounded or unknown.
    pub f_star: f64,
    pub x_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Reddi,
    DivPw { a: f64, head: f64 },
    NonReal { a: f64 },
    Lsq(LsqData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: Kind,
    n: usize,
    d: usize,
    bounds: Option<Vec<Interval>>,
    known: Option<KnownConstants>,
}

/// Builds a problem instance, validating family-specific parameters.
///
/// For `DivergencePiecewise` the quadratic-branch offsets are
/// `-(3/2)(1 + (n-1)a)` for `f_0` and `+(3/2)a` for `f_i`, which keeps every
/// component continuous at the kink for any `a > 0`.
pub fn make_problem(family: Family, n: usize, params: &FamilyParams) -> Result<Problem> {
    match family {
        Family::ReddiLinear => {
            if n < 3 {
                return Err(LabError::param(format!("reddi requires n >= 3, got {n}")));
            }
            let nf = n as f64;
            Ok(Problem {
                kind: Kind::Reddi,
                n,
                d: 1,
                bounds: Some(vec![Interval { lo: -1.0, hi: 1.0 }]),
                known: Some(KnownConstants {
                    lipschitz: 0.0,
                    d0: 0.0,
                    d1: nf.powi(4) + nf.powi(3) - nf.powi(2),
                    f_star: -1.0 / nf,
                    x_star: Some(vec![-1.0]),
                }),
            })
        }
        Family::DivergencePiecewise => {
            if n < 3 {
                return Err(LabError::param(format!("divpw requires n >= 3, got {n}")));
            }
            let a = require_scale(family, params)?;
            if !(a > 0.0) || !a.is_finite() {
                return Err(LabError::param(format!("divpw requires a > 0, got {a}")));
            }
            let nf = n as f64;
            let head = 1.0 + (nf - 1.0) * a;
            Ok(Problem {
                kind: Kind::DivPw { a, head },
                n,
                d: 1,
                bounds: None,
                known: Some(KnownConstants {
                    lipschitz: head,
                    d0: 0.0,
                    d1: nf * nf * (head * head + (nf - 1.0) * a * a),
                    f_star: -1.5 / nf,
                    x_star: Some(vec![-2.0]),
                }),
            })
        }
        Family::NonRealizableQuadratic => {
            if n != 10 {
                return Err(LabError::param(format!(
                    "nonreal is defined for n = 10 only, got {n}"
                )));
            }
            let a = require_scale(family, params)?;
            if !a.is_finite() {
                return Err(LabError::param(format!(
                    "nonreal requires finite a, got {a}"
                )));
            }
            // Σ g_i² = 4.36x² − 8.8ax + (40/9)a² and ‖∇f‖² = x²/2500; AM-GM on
            // the cross term gives the pair below.
            let d1 = 2500.0 * 2.0 * 4.36;
            let d0 = a * a * (40.0 / 9.0 + 8.8 * 8.8 / (4.0 * 4.36));
            Ok(Problem {
                kind: Kind::NonReal { a },
                n,
                d: 1,
                bounds: None,
                known: Some(KnownConstants {
                    lipschitz: 2.0,
                    d0: if d0 > 0.0 { d0 } else { 0.0 },
                    d1,
                    f_star: -a * a / 90.0,
                    x_star: Some(vec![0.0]),
                }),
            })
        }
        Family::LeastSquares => {
            let data = params
                .data
                .clone()
                .ok_or_else(|| LabError::param("lsq requires a data matrix and targets"))?;
            if data.rows.is_empty() {
                return Err(LabError::param("lsq requires at least one row"));
            }
            if data.rows.len() != n {
                return Err(LabError::param(format!(
                    "lsq: n = {n} but the data has {} rows",
                    data.rows.len()
                )));
            }
            if data.b.len() != n {
                return Err(LabError::param(format!(
                    "lsq: b has {} entries, expected {n}",
                    data.b.len()
                )));
            }
            let d = data.rows[0].len();
            if d == 0 {
                return Err(LabError::param("lsq rows must have at least one column"));
            }
            if let Some(bad) = data.rows.iter().position(|r| r.len() != d) {
                return Err(LabError::param(format!(
                    "lsq: row {bad} has {} columns, expected {d}",
                    data.rows[bad].len()
                )));
            }
            if data
                .rows
                .iter()
                .flatten()
                .chain(&data.b)
                .any(|v| !v.is_finite())
            {
                return Err(LabError::param("lsq data must be finite"));
            }
            Ok(Problem {
                kind: Kind::Lsq(data),
                n,
                d,
                bounds: None,
                known: None,
            })
        }
    }
}

fn require_scale(family: Family, params: &FamilyParams) -> Result<f64> {
    params
        .a
        .ok_or_else(|| LabError::param(format!("{family} requires the scale parameter a")))
}

impl Problem {
    pub fn family(&self) -> Family {
        match self.kind {
            Kind::Reddi => Family::ReddiLinear,
            Kind::DivPw { .. } => Family::DivergencePiecewise,
            Kind::NonReal { .. } => Family::NonRealizableQuadratic,
            Kind::Lsq(_) => Family::LeastSquares,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Scale parameter `a` for the families that have one.
    pub fn scale(&self) -> Option<f64> {
        match self.kind {
            Kind::DivPw { a, .. } | Kind::NonReal { a } => Some(a),
            _ => None,
        }
    }

    pub fn bounds(&self) -> Option<&[Interval]> {
        self.bounds.as_deref()
    }

    pub fn known(&self) -> Option<&KnownConstants> {
        self.known.as_ref()
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        self.known.as_ref().and_then(|k| k.x_star.as_deref())
    }

    /// Exact component-wise Lipschitz constant of the gradients.
    pub fn lipschitz(&self) -> f64 {
        match &self.kind {
            Kind::Lsq(data) => data
                .rows
                .iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>())
                .fold(0.0, f64::max),
            _ => self.known.as_ref().map_or(0.0, |k| k.lipschitz),
        }
    }

    /// Points where a component gradient changes branch (scalar families).
    pub fn kinks(&self) -> &'static [f64] {
        match self.kind {
            Kind::DivPw { .. } => &[KINK],
            _ => &[],
        }
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(LabError::Dimension {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(LabError::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_point(x)?;
        Ok(self.value_unchecked(i, x))
    }

    /// `∇f_i(x)`.
    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.d];
        self.grad_into(i, x, &mut out);
        Ok(out)
    }

    pub(crate) fn value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Reddi => {
                if i == 0 {
                    self.n as f64 * x[0]
                } else {
                    -x[0]
                }
            }
            Kind::DivPw { a, head } => {
                let x = x[0];
                match (i == 0, x >= KINK) {
                    (true, true) => head * x,
                    (true, false) => 0.5 * head * (x + 2.0) * (x + 2.0) - 1.5 * head,
                    (false, true) => -a * x,
                    (false, false) => -0.5 * a * (x + 2.0) * (x + 2.0) + 1.5 * a,
                }
            }
            Kind::NonReal { a } => {
                let x = x[0];
                if i == 0 {
                    (x - a) * (x - a)
                } else {
                    let c = x - 10.0 * a / 9.0;
                    -0.1 * c * c
                }
            }
            Kind::Lsq(data) => {
                let r = residual(&data.rows[i], data.b[i], x);
                0.5 * r * r
            }
        }
    }

    /// Writes `∇f_i(x)` into `out`. Indices and lengths are not re-checked.
    pub fn grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        debug_assert!(i < self.n && x.len() == self.d && out.len() == self.d);
        match &self.kind {
            Kind::Reddi => out[0] = if i == 0 { self.n as f64 } else { -1.0 },
            Kind::DivPw { a, head } => {
                let x = x[0];
                out[0] = match (i == 0, x >= KINK) {
                    (true, true) => *head,
                    (true, false) => head * (x + 2.0),
                    (false, true) => -a,
                    (false, false) => -a * (x + 2.0),
                };
            }
            Kind::NonReal { a } => {
                let x = x[0];
                out[0] = if i == 0 {
                    2.0 * (x - a)
                } else {
                    -0.2 * (x - 10.0 * a / 9.0)
                };
            }
            Kind::Lsq(data) => {
                let row = &data.rows[i];
                let r = residual(row, data.b[i], x);
                for (o, aij) in out.iter_mut().zip(row) {
                    *o = aij * r;
                }
            }
        }
    }

    /// `f(x) = (1/n) Σ_i f_i(x)`, summed left to right.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            sum += self.value_unchecked(i, x);
        }
        sum / self.n as f64
    }

    /// `∇f(x)`: the left-to-right sum of component gradients divided by `n`.
    pub fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.d];
        let mut scratch = vec![0.0; self.d];
        self.full_grad_into(x, &mut out, &mut scratch);
        Ok(out)
    }

    pub(crate) fn full_grad_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            self.grad_into(i, x, scratch);
            for (o, g) in out.iter_mut().zip(scratch.iter()) {
                *o += g;
            }
        }
        let nf = self.n as f64;
        out.iter_mut().for_each(|o| *o /= nf);
    }

    /// Clamps `x` to the box, if there is one.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        if let Some(bounds) = &self.bounds {
            for (xi, b) in x.iter_mut().zip(bounds) {
                *xi = xi.clamp(b.lo, b.hi);
            }
        }
    }

    /// Default deterministic sample set for [`estimate_variance_constants`]:
    /// 512 equispaced points on `[-10, 10]` for the scalar families, and 512
    /// SplitMix64 draws (seed 0) from `[-10, 10]^d` for least squares.
    pub fn default_samples(&self) -> Vec<Vec<f64>> {
        let r = DEFAULT_SAMPLE_RADIUS;
        let m = DEFAULT_SAMPLE_COUNT;
        if self.d == 1 && !matches!(self.kind, Kind::Lsq(_)) {
            (0..m)
                .map(|j| vec![-r + 2.0 * r * j as f64 / (m - 1) as f64])
                .collect()
        } else {
            let mut rng = SplitMix64::new(0);
            (0..m)
                .map(|_| (0..self.d).map(|_| rng.uniform(-r, r)).collect())
                .collect()
        }
    }
}

fn residual(row: &[f64], b: f64, x: &[f64]) -> f64 {
    row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Smallest `D1` consistent with `Σ_i ‖∇f_i(x)‖² ≤ D1 ‖∇f(x)‖² + D0` over the
/// given samples: `sup_x (Σ_i ‖∇f_i(x)‖² − D0) / ‖∇f(x)‖²`, clamped at zero.
///
/// This is a supremum over a finite sample, so it is an estimate and never a
/// certificate for all of `R^d`.
pub fn estimate_variance_constants(p: &Problem, samples: &[Vec<f64>], d0: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(LabError::param("sample set is empty"));
    }
    if !(d0 >= 0.0) {
        return Err(LabError::param(format!("D0 must be nonnegative, got {d0}")));
    }
    let d = p.dim();
    let mut g = vec![0.0; d];
    let mut full = vec![0.0; d];
    let mut sup = 0.0f64;
    for x in samples {
        p.check_point(x)?;
        let mut comp_sq = 0.0;
        for i in 0..p.n() {
            p.grad_into(i, x, &mut g);
            comp_sq += norm_sq(&g);
        }
        p.full_grad_into(x, &mut full, &mut g);
        let full_sq = norm_sq(&full);
        let excess = comp_sq - d0;
        if full_sq == 0.0 {
            if d0 == 0.0 || excess > 0.0 {
                return Err(LabError::ZeroGradientSample { point: x.clone() });
            }
            continue;
        }
        sup = sup.max(excess / full_sq);
    }
    Ok(sup.max(0.0))
}

/// Largest absolute difference between the central difference of `f_i` and
/// the closed-form gradient, over coordinates.
pub fn fd_check(p: &Problem, i: usize, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(LabError::param(format!("step h must be positive, got {h}")));
    }
    let exact = p.component_grad(i, x)?;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for l in 0..p.dim() {
        probe[l] = x[l] + h;
        let up = p.value_unchecked(i, &probe);
        probe[l] = x[l] - h;
        let down = p.value_unchecked(i, &probe);
        probe[l] = x[l];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - exact[l]).abs());
    }
    Ok(worst)
}
