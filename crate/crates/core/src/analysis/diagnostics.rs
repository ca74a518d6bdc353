use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::optimizer::{AdamConfig, TrajectoryLog};
use crate::problems::Problem;

/// Context for the step-size and concentration diagnostics.
///
/// `delta1 = eta0 · L · √d / √(1−β2) · (1−β1) / (1 − β1/√β2)` bounds the
/// per-coordinate change of any component gradient over one step at `k = 1`;
/// at step `k` the bound is `delta1 / √k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConstants {
    pub delta1: f64,
    /// Concentration level, `0 < delta ≤ 1/(4n)`.
    pub delta: f64,
    pub lipschitz: f64,
    pub d: usize,
    pub n: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eta0: f64,
}

impl DiagnosticsConstants {
    /// Validates `β1 < √β2 < 1` and `0 < δ ≤ 1/(4n)`.
    pub fn new(
        lipschitz: f64,
        d: usize,
        n: usize,
        beta1: f64,
        beta2: f64,
        eta0: f64,
        delta: f64,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(LabError::param("n and d must be positive"));
        }
        if !(0.0..1.0).contains(&beta2) || !(0.0..1.0).contains(&beta1) {
            return Err(LabError::contract(format!(
                "need beta1 in [0, 1) and beta2 in [0, 1), got ({beta1}, {beta2})"
            )));
        }
        if !(beta1 < beta2.sqrt()) {
            return Err(LabError::contract(format!(
                "step bound undefined: beta1 = {beta1} ≥ sqrt(beta2) = {}",
                beta2.sqrt()
            )));
        }
        if !(eta0 > 0.0) || !(lipschitz >= 0.0) {
            return Err(LabError::param("eta0 must be positive and L nonnegative"));
        }
        if !(delta > 0.0 && delta <= 1.0 / (4.0 * n as f64)) {
            return Err(LabError::param(format!(
                "delta must lie in (0, 1/(4n)] = (0, {}], got {delta}",
                1.0 / (4.0 * n as f64)
            )));
        }
        let delta1 = eta0 * lipschitz * (d as f64).sqrt() / (1.0 - beta2).sqrt() * (1.0 - beta1)
            / (1.0 - beta1 / beta2.sqrt());
        Ok(Self {
            delta1,
            delta,
            lipschitz,
            d,
            n,
            beta1,
            beta2,
            eta0,
        })
    }

    /// Constants for a problem/config pair, using the problem's analytic `L`.
    pub fn for_problem(p: &Problem, config: &AdamConfig, delta: f64) -> Result<Self> {
        Self::new(
            p.lipschitz(),
            p.dim(),
            p.n(),
            config.beta1,
            config.beta2,
            config.eta0,
            delta,
        )
    }

    /// `⌈ln(nδ)/ln β2⌉`, the memory horizon in the definition of `R_k`.
    pub fn r_horizon(&self) -> Result<u64> {
        let q = (self.n as f64 * self.delta).ln() / self.log_beta2()?;
        Ok(q.ceil() as u64)
    }

    /// `⌈ln(1/2)/ln β2⌉`, the memory horizon in the definition of `Q_k`.
    pub fn q_horizon(&self) -> Result<u64> {
        let q = 0.5f64.ln() / self.log_beta2()?;
        Ok(q.ceil() as u64)
    }

    /// First step counter at which the concentration check applies:
    /// `⌈ln(nδ)/ln β2⌉ + n + 1`.
    pub fn first_qualifying_k(&self) -> Result<u64> {
        Ok(self.r_horizon()? + self.n as u64 + 1)
    }

    fn log_beta2(&self) -> Result<f64> {
        if self.beta2 <= 0.0 || self.beta2 >= 1.0 {
            return Err(LabError::contract(format!(
                "log(beta2) is degenerate at beta2 = {}",
                self.beta2
            )));
        }
        Ok(self.beta2.ln())
    }
}

/// `Δ_k = Δ_1 / √k`.
pub fn delta_k(consts: &DiagnosticsConstants, k: u64) -> Result<f64> {
    if k == 0 {
        return Err(LabError::param("step counter k is 1-based"));
    }
    Ok(consts.delta1 / (k as f64).sqrt())
}

/// `(R_k, Q_k)` with
/// `R_k = 16√2 · Δ_k · (⌈ln(nδ)/ln β2⌉ + n)` and
/// `Q_k = 32(n+1) · Δ_k · (⌈ln(1/2)/ln β2⌉ + n)`.
pub fn thresholds(consts: &DiagnosticsConstants, k: u64) -> Result<(f64, f64)> {
    let dk = delta_k(consts, k)?;
    let n = consts.n as f64;
    let r = 16.0 * 2f64.sqrt() * dk * (consts.r_horizon()? as f64 + n);
    let q = 32.0 * (n + 1.0) * dk * (consts.q_horizon()? as f64 + n);
    Ok((r, q))
}

/// Exact conditional mean of the next second moment under uniform
/// with-replacement sampling:
/// `β2 · v_prev + (1−β2) · (1/n) Σ_i (∂_l f_i(x))²` per coordinate.
pub fn cond_mean_v(p: &Problem, x: &[f64], v_prev: &[f64], beta2: f64) -> Result<Vec<f64>> {
    p.check_point(x)?;
    if v_prev.len() != p.dim() {
        return Err(LabError::Dimension {
            expected: p.dim(),
            got: v_prev.len(),
        });
    }
    let mut g = vec![0.0; p.dim()];
    let mut acc = vec![0.0; p.dim()];
    for i in 0..p.n() {
        p.grad_into(i, x, &mut g);
        for (a, gl) in acc.iter_mut().zip(&g) {
            *a += gl * gl;
        }
    }
    let n = p.n() as f64;
    Ok(acc
        .iter()
        .zip(v_prev)
        .map(|(s, v)| beta2 * v + (1.0 - beta2) * (s / n))
        .collect())
}

/// Lemma-style sandwich `C_lower/√E ≤ 1/√v ≤ C_upper/√E` evaluated along a
/// with-replacement trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `(1−β2)/β2ⁿ < 1/(8n) − δ/4`.
    pub precondition_ok: bool,
    pub c_lower: f64,
    pub c_upper: f64,
    /// Per-step failure probability `n · exp(−δ²/((1−β2)(28/(3n) + 8δ/3)))`.
    pub p_bound: f64,
    pub first_qualifying_k: u64,
    /// Number of (step, coordinate) pairs that passed the qualification rule.
    pub qualifying_steps: u64,
    pub lower_violations: u64,
    pub upper_violations: u64,
    pub empirical_rate: f64,
    /// `p_bound + 3 √(p_bound / max(1, qualifying_steps))`.
    pub binomial_limit: f64,
    /// `Some(empirical_rate ≤ binomial_limit)` when the precondition holds
    /// and at least one step qualified; `None` otherwise.
    pub within_bound: Option<bool>,
}

/// `C_lower = 1 − (1−β2)·4n / ((1−2nδ) β2ⁿ)`.
pub fn c_lower(n: usize, delta: f64, beta2: f64) -> f64 {
    1.0 - (1.0 - beta2) * 4.0 * n as f64 / ((1.0 - 2.0 * n as f64 * delta) * beta2.powi(n as i32))
}

/// `C_upper = (1 − (1−β2)·8n / ((1−2nδ) β2ⁿ))^{−1/2}`; infinite when the base
/// is not positive.
pub fn c_upper(n: usize, delta: f64, beta2: f64) -> f64 {
    let base = 1.0
        - (1.0 - beta2) * 8.0 * n as f64 / ((1.0 - 2.0 * n as f64 * delta) * beta2.powi(n as i32));
    if base > 0.0 {
        base.powf(-0.5)
    } else {
        f64::INFINITY
    }
}

/// `n · exp(−δ² / ((1−β2)(28/(3n) + 8δ/3)))`.
pub fn failure_probability(n: usize, delta: f64, beta2: f64) -> f64 {
    let n_f = n as f64;
    n_f * (-delta * delta / ((1.0 - beta2) * (28.0 / (3.0 * n_f) + 8.0 * delta / 3.0))).exp()
}

/// `(1−β2)/β2ⁿ < 1/(8n) − δ/4`.
pub fn concentration_precondition(n: usize, delta: f64, beta2: f64) -> bool {
    (1.0 - beta2) / beta2.powi(n as i32) < 1.0 / (8.0 * n as f64) - delta / 4.0
}

/// Evaluates the concentration sandwich on every snapshot of a
/// with-replacement trajectory (snapshot `t` is iteration `k = t + 1`).
///
/// A coordinate `l` of step `k` qualifies when
/// `k ≥ ⌈ln(nδ)/ln β2⌉ + n + 1` and `max_i |∂_l f_i(x_k)| ≥ R_k`. For
/// qualifying pairs the check is
/// `C_lower/√E_k(v) ≤ 1/√v_k ≤ C_upper/√E_k(v)` with `E_k(v)` from
/// [`cond_mean_v`] at the pre-update state.
///
/// When the precondition fails the report is still produced, with
/// `precondition_ok = false` and no verdict.
pub fn concentration_report(
    p: &Problem,
    log: &TrajectoryLog,
    consts: &DiagnosticsConstants,
) -> Result<ConcentrationReport> {
    if consts.n != p.n() || consts.d != p.dim() {
        return Err(LabError::param(
            "diagnostic constants do not match the problem",
        ));
    }
    let (n, delta, beta2) = (consts.n, consts.delta, consts.beta2);
    let precondition_ok = concentration_precondition(n, delta, beta2);
    let cl = c_lower(n, delta, beta2);
    let cu = c_upper(n, delta, beta2);
    let p_bound = failure_probability(n, delta, beta2);
    let first_k = consts.first_qualifying_k()?;

    let d = p.dim();
    let mut g = vec![0.0; d];
    let mut max_abs = vec![0.0f64; d];
    let mut sq_mean = vec![0.0f64; d];
    let (mut qualifying, mut lower, mut upper) = (0u64, 0u64, 0u64);

    for snap in log.snapshots() {
        let k = snap.t + 1;
        if k < first_k {
            continue;
        }
        let (r_k, _) = thresholds(consts, k)?;
        max_abs.iter_mut().for_each(|v| *v = 0.0);
        sq_mean.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            p.grad_into(i, &snap.x_before, &mut g);
            for l in 0..d {
                max_abs[l] = max_abs[l].max(g[l].abs());
                sq_mean[l] += g[l] * g[l];
            }
        }
        for l in 0..d {
            if max_abs[l] < r_k {
                continue;
            }
            qualifying += 1;
            let e = beta2 * snap.v_prev[l] + (1.0 - beta2) * (sq_mean[l] / n as f64);
            let inv_v = 1.0 / snap.v[l].sqrt();
            let inv_e = 1.0 / e.sqrt();
            if inv_v < cl * inv_e {
                lower += 1;
            } else if inv_v > cu * inv_e {
                upper += 1;
            }
        }
    }

    let empirical_rate = (lower + upper) as f64 / qualifying.max(1) as f64;
    let binomial_limit = p_bound + 3.0 * (p_bound / qualifying.max(1) as f64).sqrt();
    let within_bound =
        (precondition_ok && qualifying > 0).then_some(empirical_rate <= binomial_limit);
    Ok(ConcentrationReport {
        n,
        delta,
        beta1: consts.beta1,
        beta2,
        precondition_ok,
        c_lower: cl,
        c_upper: cu,
        p_bound,
        first_qualifying_k: first_k,
        qualifying_steps: qualifying,
        lower_violations: lower,
        upper_violations: upper,
        empirical_rate,
        binomial_limit,
        within_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{run, Budget, LogPolicy, RunOptions, SamplingKind, SamplingScheme};
    use crate::problems::{make_problem, Family, FamilyParams};
    use crate::rng::SplitMix64;
    use approx::assert_relative_eq;

    fn toy(beta1: f64, beta2: f64) -> Result<DiagnosticsConstants> {
        DiagnosticsConstants::new(1.0, 1, 1, beta1, beta2, 1.0, 0.25)
    }

    #[test]
    fn delta_k_examples() {
        let c = toy(0.0, 0.5).unwrap();
        assert_relative_eq!(delta_k(&c, 1).unwrap(), 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(
            delta_k(&c, 4).unwrap(),
            2f64.sqrt() / 2.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            toy(0.5f64.sqrt(), 0.5),
            Err(LabError::Contract(_))
        ));
        assert!(delta_k(&c, 0).is_err());
    }

    #[test]
    fn thresholds_ceiling_and_scaling() {
        let c = DiagnosticsConstants::new(1.0, 1, 5, 0.0, 0.9999, 1.0, 0.05).unwrap();
        assert_eq!(c.r_horizon().unwrap(), 13863);
        let (r1, q1) = thresholds(&c, 9).unwrap();
        let (r4, q4) = thresholds(&c, 36).unwrap();
        assert_relative_eq!(
            r1,
            16.0 * 2f64.sqrt() * c.delta1 * 13868.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(r4, r1 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(q4, q1 / 2.0, max_relative = 1e-15);
        assert!(DiagnosticsConstants::new(1.0, 1, 5, 0.0, 0.9999, 1.0, 0.051).is_err());
    }

    #[test]
    fn degenerate_beta2_rejected() {
        let mut c = toy(0.0, 0.5).unwrap();
        c.beta2 = 1.0;
        assert!(matches!(thresholds(&c, 1), Err(LabError::Contract(_))));
        assert!(toy(0.0, 1.0).is_err());
    }

    #[test]
    fn cond_mean_v_examples() {
        let p = make_problem(Family::ReddiLinear, 3, &FamilyParams::none()).unwrap();
        let e = cond_mean_v(&p, &[0.2], &[5.0], 0.0).unwrap();
        assert_relative_eq!(e[0], 11.0 / 3.0, max_relative = 1e-15);
        assert_eq!(cond_mean_v(&p, &[0.2], &[5.0], 1.0).unwrap(), vec![5.0]);
    }

    #[test]
    fn cond_mean_v_is_the_average_over_batches() {
        let p = make_problem(Family::DivergencePiecewise, 7, &FamilyParams::scale(0.3)).unwrap();
        let beta2 = 0.95;
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let x = [rng.uniform(-6.0, 6.0)];
            let v_prev = [rng.uniform(0.0, 3.0)];
            let mut avg = 0.0;
            for i in 0..p.n() {
                let g = p.component_grad(i, &x).unwrap()[0];
                avg += beta2 * v_prev[0] + (1.0 - beta2) * g * g;
            }
            avg /= p.n() as f64;
            let e = cond_mean_v(&p, &x, &v_prev, beta2).unwrap()[0];
            assert_relative_eq!(e, avg, max_relative = 1e-13);
        }
    }

    #[test]
    fn cond_mean_v_matches_monte_carlo() {
        let p = make_problem(Family::DivergencePiecewise, 5, &FamilyParams::scale(1.0)).unwrap();
        let (x, v_prev, beta2) = ([0.5], [1.0], 0.9);
        let e = cond_mean_v(&p, &x, &v_prev, beta2).unwrap()[0];
        let mut rng = SplitMix64::new(17);
        let trials = 200_000;
        let outcomes: Vec<f64> = (0..trials)
            .map(|_| {
                let i = rng.below(5) as usize;
                let g = p.component_grad(i, &x).unwrap()[0];
                beta2 * v_prev[0] + (1.0 - beta2) * g * g
            })
            .collect();
        let mean = outcomes.iter().sum::<f64>() / trials as f64;
        let var = outcomes.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / trials as f64;
        assert!((mean - e).abs() <= 3.0 * (var / trials as f64).sqrt());
    }

    #[test]
    fn sandwich_constants() {
        assert_relative_eq!(c_lower(5, 0.05, 0.9999), 0.99600, epsilon = 5e-6);
        assert_relative_eq!(
            failure_probability(5, 0.05, 0.9999),
            5.0 * (-12.5f64).exp(),
            max_relative = 1e-3
        );
        assert!(concentration_precondition(5, 0.05, 0.9999));
        assert!(!concentration_precondition(5, 0.05, 0.5));
        let near_one = 1.0 - 1e-12;
        assert_relative_eq!(c_lower(5, 0.05, near_one), 1.0, epsilon = 1e-9);
        assert_relative_eq!(c_upper(5, 0.05, near_one), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn failed_precondition_yields_no_verdict() {
        let p = make_problem(Family::DivergencePiecewise, 5, &FamilyParams::scale(1.0)).unwrap();
        let cfg = AdamConfig::new(0.0, 0.5, 0.01);
        let log = run(
            &p,
            &cfg,
            SamplingScheme::new(SamplingKind::WithReplacement, 1),
            &RunOptions::new(Budget::Iterations(100), vec![-3.0])
                .with_log(LogPolicy::instrumented()),
        )
        .unwrap();
        let consts = DiagnosticsConstants::for_problem(&p, &cfg, 0.05).unwrap();
        let report = concentration_report(&p, &log, &consts).unwrap();
        assert!(!report.precondition_ok);
        assert_eq!(report.within_bound, None);
    }
}
