//! Parameter plans for the multilevel estimator.
//!
//! A plan fixes the number of correcting levels `R`, the halving step
//! sequence `gamma_r = gamma_0 2^-r`, the geometrically decreasing horizons
//! `T_r` and the warm-start time `tau`. The generic rule is
//!
//! ```text
//! R   = ceil(log2(r0 / eps) / delta)
//! T_r = big_t eps^-2 2^{-(1 + b) r / 2}       (b > 1)
//! T_r = big_t eps^-2 R^2 2^{-r}               (b = 1)
//! tau = tau1 |log eps| + tau2
//! ```
//!
//! and the strongly convex Langevin plans ([`plan_b1`], [`plan_b2`],
//! [`plan_aggressive`]) are instances of it with explicit constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LangevinModel;
use crate::sde::grid_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// First-order confluence (`b = 1`, `delta = 1/2`), cost `eps^-2 |log eps|^3`.
    B1,
    /// Second-order confluence (`b = 2`, `delta = 1`), cost `eps^-2`.
    B2,
    General,
}

/// Constants of the four generic assumptions (convergence to equilibrium,
/// L2 confluence, weak error of the invariant law, moment bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralAssumptionConstants {
    /// Exponential rate of convergence to equilibrium, in `(0, 1]`.
    pub alpha: f64,
    /// Confluence exponent `b` in `[1, 2]`.
    pub b_exponent: f64,
    /// Weak-error exponent `delta`.
    pub delta: f64,
    pub c1_x0: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Largest admissible step.
    pub eta0: f64,
}

/// A complete parameter set for one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPlan {
    pub regime: Regime,
    /// Set for heuristic plans outside the proven parameter range.
    #[serde(default)]
    pub experimental: bool,
    pub dim: usize,
    pub epsilon: f64,
    pub b_exponent: f64,
    pub delta: f64,
    /// Number of correcting levels.
    #[serde(rename = "R")]
    pub correcting_levels: usize,
    /// `gamma_0, ..., gamma_R`.
    pub gamma: Vec<f64>,
    /// `T_0, ..., T_R`.
    pub horizons: Vec<f64>,
    /// Warm start from the tuning formula, before any clamping.
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub r0: f64,
    pub big_t: f64,
    #[serde(default)]
    pub include_log2: bool,
    /// Discrete Euler step count over all levels.
    pub predicted_complexity: u64,
    /// Closed-form cost bound `c_b T_0 / gamma_0`.
    pub complexity_bound: f64,
    /// `tau <= T_R / 2`, i.e. `eps` lies below the feasibility threshold `eps_0`.
    pub feasible: bool,
    /// The estimator will use `min(tau, T_R / 2)` instead of `tau`.
    pub tau_clamped: bool,
}

impl TuningPlan {
    pub fn gamma0(&self) -> f64 {
        self.gamma[0]
    }

    /// Warm start actually used by the estimator: `min(tau, T_R / 2)`.
    pub fn effective_tau(&self) -> f64 {
        let half_last = 0.5 * self.horizons[self.correcting_levels];
        self.tau.min(half_last)
    }

    /// A plan from explicit `gamma_0`, horizons and warm start.
    /// `horizons.len() - 1` correcting levels are used.
    pub fn custom(dim: usize, gamma0: f64, horizons: Vec<f64>, tau: f64) -> Result<Self> {
        if horizons.is_empty() {
            return Err(Error::invalid("at least one horizon is required"));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be nonnegative (got {tau})"
            )));
        }
        let levels = horizons.len() - 1;
        let gamma = halving_steps(gamma0, levels);
        let mut plan = TuningPlan {
            regime: Regime::General,
            experimental: false,
            dim,
            epsilon: f64::NAN,
            b_exponent: f64::NAN,
            delta: f64::NAN,
            correcting_levels: levels,
            gamma,
            horizons,
            tau,
            tau1: 0.0,
            tau2: tau,
            r0: f64::NAN,
            big_t: f64::NAN,
            include_log2: false,
            predicted_complexity: 0,
            complexity_bound: f64::NAN,
            feasible: true,
            tau_clamped: false,
        };
        plan.finish()?;
        Ok(plan)
    }

    /// Checks the structural invariants the estimator relies on.
    pub fn validate(&self) -> Result<()> {
        let n = self.correcting_levels + 1;
        if self.gamma.len() != n || self.horizons.len() != n {
            return Err(Error::invalid(format!(
                "plan with R = {} needs {n} steps and horizons (got {} and {})",
                self.correcting_levels,
                self.gamma.len(),
                self.horizons.len()
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("plan dimension must be positive"));
        }
        let g0 = self.gamma[0];
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma_0 must be positive (got {g0})"
            )));
        }
        for (r, g) in self.gamma.iter().enumerate() {
            if (g - g0 * 0.5f64.powi(r as i32)).abs() > 1e-12 * g0 {
                return Err(Error::invalid("steps must halve from level to level"));
            }
        }
        if self.horizons.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("horizons must be positive and finite"));
        }
        if self.horizons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("horizons must be strictly decreasing"));
        }
        let tau = self.effective_tau();
        for r in 0..n {
            let step = if r == 0 {
                self.gamma[0]
            } else {
                self.gamma[r - 1]
            };
            if grid_index(self.horizons[r], step) <= grid_index(tau, step) {
                return Err(Error::Infeasible(format!(
                    "level {r} has an empty averaging window (T = {}, step = {step}, tau = {tau})",
                    self.horizons[r]
                )));
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        let half_last = 0.5 * self.horizons[self.correcting_levels];
        self.feasible = self.tau <= half_last;
        self.tau_clamped = !self.feasible;
        self.validate()?;
        self.predicted_complexity = predicted_complexity(self);
        Ok(())
    }
}

fn halving_steps(gamma0: f64, levels: usize) -> Vec<f64> {
    (0..=levels)
        .map(|r| gamma0 * 0.5f64.powi(r as i32))
        .collect()
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1) (got {eps})"
        )));
    }
    Ok(())
}

/// `d_b = (b - 1)^-2` for `b > 1`, 1 for `b = 1`.
fn d_factor(b: f64) -> f64 {
    if b > 1.0 {
        (b - 1.0).powi(-2)
    } else {
        1.0
    }
}

/// `C(Y) <= cost_factor * T_0 / gamma_0`.
fn cost_factor(b: f64, levels: usize) -> f64 {
    if b > 1.0 {
        1.0 + 1.5 / (2f64.powf(0.5 * (b - 1.0)) - 1.0)
    } else {
        1.0 + 1.5 * levels as f64
    }
}

struct Shape {
    regime: Regime,
    dim: usize,
    eps: f64,
    gamma0: f64,
    b: f64,
    delta: f64,
    r0: f64,
    big_t: f64,
    tau1: f64,
    tau2: f64,
    include_log2: bool,
}

fn build(shape: Shape) -> Result<TuningPlan> {
    let Shape {
        regime,
        dim,
        eps,
        gamma0,
        b,
        delta,
        r0,
        big_t,
        tau1,
        tau2,
        include_log2,
    } = shape;
    let levels = ((r0 / eps).log2() / delta).ceil().max(0.0) as usize;
    let horizons: Vec<f64> = (0..=levels)
        .map(|r| {
            let r = r as f64;
            if b > 1.0 {
                big_t * (1.0 / eps).powi(2) * 2f64.powf(-0.5 * (1.0 + b) * r)
            } else {
                big_t * (1.0 / eps).powi(2) * (levels as f64).powi(2) * 2f64.powf(-r)
            }
        })
        .collect();
    let tau = tau1 * eps.ln().abs() + tau2;
    let mut plan = TuningPlan {
        regime,
        experimental: false,
        dim,
        epsilon: eps,
        b_exponent: b,
        delta,
        correcting_levels: levels,
        gamma: halving_steps(gamma0, levels),
        complexity_bound: cost_factor(b, levels) * horizons[0] / gamma0,
        horizons,
        tau,
        tau1,
        tau2,
        r0,
        big_t,
        include_log2,
        predicted_complexity: 0,
        feasible: true,
        tau_clamped: false,
    };
    plan.finish()?;
    Ok(plan)
}

/// Generic plan from assumption constants. `r0` and `big_t` default to their
/// smallest admissible values; explicit values below those bounds are rejected.
pub fn plan_general(
    constants: &GeneralAssumptionConstants,
    dim: usize,
    gamma0: f64,
    eps: f64,
    r0: Option<f64>,
    big_t: Option<f64>,
) -> Result<TuningPlan> {
    check_epsilon(eps)?;
    let GeneralAssumptionConstants {
        alpha,
        b_exponent: b,
        delta,
        c2,
        c3,
        c4,
        eta0,
        ..
    } = *constants;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1] (got {alpha})"
        )));
    }
    if !(1.0..=2.0).contains(&b) {
        return Err(Error::invalid(format!("b must lie in [1, 2] (got {b})")));
    }
    let delta_ok = if b > 1.0 {
        delta > 0.25 * (1.0 + b) && delta <= 1.0
    } else {
        (0.5..=1.0).contains(&delta)
    };
    if !delta_ok {
        return Err(Error::invalid(format!(
            "delta = {delta} is outside the admissible range for b = {b}"
        )));
    }
    if !(eta0 > 0.0 && eta0 <= 0.5) {
        return Err(Error::invalid(format!(
            "eta0 must lie in (0, 1/2] (got {eta0})"
        )));
    }
    if !(gamma0 > 0.0 && gamma0 <= eta0) {
        return Err(Error::invalid(format!(
            "gamma0 must lie in (0, eta0 = {eta0}] (got {gamma0})"
        )));
    }
    if c2 < 0.0 || c3 < 0.0 {
        return Err(Error::invalid("c2 and c3 must be nonnegative"));
    }
    if c4.is_nan() || c4 <= 0.0 {
        return Err(Error::invalid("c4 must be positive to set the warm start"));
    }
    let df = d_factor(b);
    let r0_min = 1f64.max(c3 * gamma0.powf(delta));
    let big_t_min = df / alpha * (c2 * c2 * gamma0.powf(b) * (1.0 / gamma0).ln()).max(c4 * c4);
    let r0 = match r0 {
        Some(v) if v < r0_min => {
            return Err(Error::invalid(format!(
                "r0 = {v} is below its lower bound max(1, c3 gamma0^delta) = {r0_min}"
            )))
        }
        Some(v) => v,
        None => r0_min,
    };
    let big_t = match big_t {
        Some(v) if v < big_t_min => {
            return Err(Error::invalid(format!(
                "big_t = {v} is below its lower bound {big_t_min}"
            )))
        }
        Some(v) => v,
        None => big_t_min,
    };
    let tau1 = (1.0 + b - 2.0 * delta) / (alpha * delta);
    let tau2 = 0f64.max((r0.powf((1.0 + b) / (2.0 * delta)) / (df * c4)).ln() / alpha);
    build(Shape {
        regime: Regime::General,
        dim,
        eps,
        gamma0,
        b,
        delta,
        r0,
        big_t,
        tau1,
        tau2,
        include_log2: false,
    })
}

fn langevin_constants(model: &LangevinModel) -> Result<(f64, f64, f64)> {
    let alpha = model.alpha_eff();
    let l = model.l_eff();
    if !(alpha > 0.0 && alpha <= 1.0 && alpha <= l) {
        return Err(Error::invalid(format!(
            "need 0 < alpha <= min(L, 1) for the scaled drift (alpha = {alpha}, L = {l}); \
             use the automatic sigma0"
        )));
    }
    let gamma0 = (alpha / (2.0 * l * l)).min(0.5);
    Ok((alpha, l, gamma0))
}

/// Second-order plan for a strongly convex potential with bounded third derivatives.
///
/// With the automatic `sigma0` this is `gamma_0 = 1/2`, `r0 = sqrt(d / alpha_u)`,
/// `T_r = d L_u^2 / alpha_u^3 (log 2) eps^-2 2^{-3r/2}` and
/// `tau = (L_u / alpha_u)^2 (|log eps| + log(d / alpha_u) / 2)`.
/// `include_log2 = false` drops the `log(1 / gamma_0)` factor from the horizons.
pub fn plan_b2(model: &LangevinModel, eps: f64, include_log2: bool) -> Result<TuningPlan> {
    check_epsilon(eps)?;
    let (alpha, _, gamma0) = langevin_constants(model)?;
    let d = model.dim();
    let s2 = model.sigma0_sq();
    let upsilon_sq = (s2 * d as f64 / alpha).max(1.0);
    let log_factor = if include_log2 {
        (1.0 / gamma0).ln()
    } else {
        1.0
    };
    build(Shape {
        regime: Regime::B2,
        dim: d,
        eps,
        gamma0,
        b: 2.0,
        delta: 1.0,
        r0: upsilon_sq.sqrt(),
        big_t: upsilon_sq * log_factor / alpha,
        tau1: 1.0 / alpha,
        tau2: upsilon_sq.ln() / (2.0 * alpha),
        include_log2,
    })
}

/// First-order plan: `R = ceil(2 log2(r0 / eps))` with `r0 = max(1, sqrt(d / (2 alpha_u)))`,
/// `T_r = (d / alpha_u) log(1 / gamma_0) / alpha eps^-2 R^2 2^-r`,
/// `tau = (2 |log eps| + log(d / alpha_u) / 2) / alpha`.
pub fn plan_b1(model: &LangevinModel, eps: f64, include_log2: bool) -> Result<TuningPlan> {
    check_epsilon(eps)?;
    let (alpha, _, gamma0) = langevin_constants(model)?;
    let d = model.dim() as f64;
    let s2 = model.sigma0_sq();
    let upsilon_sq = (s2 * d / alpha).max(1.0);
    let r0 = (0.5 * s2 * d / alpha).sqrt().max(1.0);
    let log_factor = if include_log2 {
        (1.0 / gamma0).ln()
    } else {
        1.0
    };
    build(Shape {
        regime: Regime::B1,
        dim: model.dim(),
        eps,
        gamma0,
        b: 1.0,
        delta: 0.5,
        r0,
        big_t: upsilon_sq * log_factor / alpha,
        tau1: 2.0 / alpha,
        tau2: upsilon_sq.sqrt().ln() / alpha,
        include_log2,
    })
}

/// Enlarged first step for `U = U1 + lambda |x|^2 / 2` with bounded `grad U1`:
/// `gamma_0 = min(1 / (4 alpha), d / (sigma0^2 G^2))` where `G = sup |grad U1|`
/// and `alpha` is the scaled contraction rate. The horizons are those of the
/// second-order plan rescaled so that the total cost is the second-order cost
/// divided by `(L_u / alpha_u)^2`, i.e. of order `d eps^-2 / alpha_u`.
/// Outside the proven parameter range; the plan is marked experimental.
pub fn plan_aggressive(model: &LangevinModel, eps: f64) -> Result<TuningPlan> {
    let base = plan_b2(model, eps, false)?;
    let grad_sup = model.potential().grad_u1_sup().ok_or_else(|| {
        Error::invalid(format!(
            "{} does not expose sup |grad U1|, required by the aggressive plan",
            model.label()
        ))
    })?;
    let alpha = model.alpha_eff();
    let l = model.l_eff();
    let s2 = model.sigma0_sq();
    let stability = 1.0 / (4.0 * alpha);
    let bounded_part = if grad_sup > 0.0 {
        model.dim() as f64 / (s2 * grad_sup * grad_sup)
    } else {
        f64::INFINITY
    };
    let gamma0 = stability.min(bounded_part);
    let ratio = (alpha / l).powi(2);
    let big_t = base.big_t * gamma0 / base.gamma0() * ratio;
    let mut plan = build(Shape {
        regime: Regime::B2,
        dim: base.dim,
        eps,
        gamma0,
        b: 2.0,
        delta: 1.0,
        r0: base.r0,
        big_t,
        tau1: base.tau1,
        tau2: base.tau2,
        include_log2: false,
    })?;
    plan.experimental = true;
    Ok(plan)
}

/// Discrete Euler step count `n_{g0}(T_0) + sum_r [n_{g_r}(T_r) + n_{g_{r-1}}(T_r)]`.
pub fn predicted_complexity(plan: &TuningPlan) -> u64 {
    let mut total = grid_index(plan.horizons[0], plan.gamma[0]);
    for r in 1..=plan.correcting_levels {
        total += grid_index(plan.horizons[r], plan.gamma[r]);
        total += grid_index(plan.horizons[r], plan.gamma[r - 1]);
    }
    total
}

/// Iteration count of each level, in the same convention as [`predicted_complexity`].
pub fn level_iterations(plan: &TuningPlan) -> Vec<u64> {
    (0..=plan.correcting_levels)
        .map(|r| {
            if r == 0 {
                grid_index(plan.horizons[0], plan.gamma[0])
            } else {
                grid_index(plan.horizons[r], plan.gamma[r])
                    + grid_index(plan.horizons[r], plan.gamma[r - 1])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_langevin_model, LogisticPerturbedPotential, QuadraticPotential, Sigma0Mode,
    };
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ou(d: usize) -> LangevinModel {
        make_langevin_model(
            Arc::new(QuadraticPotential::new(d).unwrap()),
            Sigma0Mode::Auto,
        )
        .unwrap()
    }

    fn logistic(d: usize) -> LangevinModel {
        // |x|^2 = 10, i.e. a = 2.
        let mut x = vec![0.0; d];
        x[0] = 10f64.sqrt();
        let p = LogisticPerturbedPotential::new(0.25, x).unwrap();
        make_langevin_model(Arc::new(p), Sigma0Mode::Auto).unwrap()
    }

    fn constants(b: f64, delta: f64) -> GeneralAssumptionConstants {
        GeneralAssumptionConstants {
            alpha: 1.0,
            b_exponent: b,
            delta,
            c1_x0: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            eta0: 0.5,
        }
    }

    #[test]
    fn ou_b2_plan_reproduces_reference_parameters() {
        let plan = plan_b2(&ou(10), 0.1, false).unwrap();
        assert_eq!(plan.correcting_levels, 5);
        assert_relative_eq!(plan.horizons[0], 1000.0, max_relative = 1e-12);
        for (r, g) in plan.gamma.iter().enumerate() {
            assert_eq!(*g, 0.5f64.powi(r as i32 + 1));
        }
        let expect_tau = 10f64.ln() + 0.5 * 10f64.ln();
        assert!((plan.tau - 3.4539).abs() < 1e-3);
        assert_relative_eq!(plan.tau, expect_tau, max_relative = 1e-12);
        assert!(plan.tau_clamped);
        assert!(plan.effective_tau() <= 0.5 * plan.horizons[5]);
    }

    #[test]
    fn ou_b2_complexity() {
        let plan = plan_b2(&ou(10), 0.1, false).unwrap();
        let c = plan.predicted_complexity as f64;
        assert!((c - 7958.0).abs() <= 0.005 * 7958.0, "{c}");
        assert!(c <= 9243.0);
        assert_relative_eq!(plan.complexity_bound, 9242.6, max_relative = 1e-4);
        assert_eq!(
            level_iterations(&plan).iter().sum::<u64>(),
            plan.predicted_complexity
        );
        assert_eq!(level_iterations(&plan)[0], 2000);
    }

    #[test]
    fn ou_b2_levels_table() {
        assert_eq!(
            plan_b2(&ou(100), 0.01, false).unwrap().correcting_levels,
            10
        );
        assert!(plan_b2(&ou(10), 1.0, false).is_err());
        assert!(plan_b2(&ou(10), 1.5, false).is_err());
        assert!(plan_b2(&ou(10), 0.0, false).is_err());
    }

    #[test]
    fn include_log2_scales_horizons() {
        let a = plan_b2(&ou(10), 0.1, false).unwrap();
        let b = plan_b2(&ou(10), 0.1, true).unwrap();
        assert_relative_eq!(
            b.horizons[0],
            a.horizons[0] * 2f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn general_plan_matches_b2_shape() {
        let plan = plan_general(
            &constants(2.0, 1.0),
            10,
            0.5,
            0.1,
            Some(10f64.sqrt()),
            Some(10.0),
        )
        .unwrap();
        assert_eq!(plan.correcting_levels, 5);
        assert_relative_eq!(plan.horizons[0], 1000.0, max_relative = 1e-12);
        for w in plan.horizons.windows(2) {
            assert_relative_eq!(w[0] / w[1], 2f64.powf(1.5), max_relative = 1e-12);
        }
        assert_relative_eq!(plan.tau1, 1.0);
    }

    #[test]
    fn general_plan_b1() {
        let plan = plan_general(&constants(1.0, 0.5), 4, 0.5, 0.5, Some(2.0), Some(1.0)).unwrap();
        assert_eq!(plan.correcting_levels, 4);
        // T_r = big_t eps^-2 R^2 2^-r
        assert_relative_eq!(plan.horizons[0], 1.0 * 4.0 * 16.0, max_relative = 1e-12);
        assert_relative_eq!(plan.horizons[1], 32.0, max_relative = 1e-12);
        assert_relative_eq!(plan.tau1, 2.0);
    }

    #[test]
    fn general_plan_rejects_bad_inputs() {
        let c = constants(2.0, 1.0);
        assert!(plan_general(&c, 2, 0.5, 1.0, None, None).is_err());
        let err = plan_general(&c, 2, 0.5, 0.1, Some(0.5), None).unwrap_err();
        assert!(err.to_string().contains("r0"));
        let err = plan_general(&c, 2, 0.5, 0.1, None, Some(0.1)).unwrap_err();
        assert!(err.to_string().contains("big_t"));
        assert!(plan_general(&c, 2, 0.75, 0.1, None, None).is_err());
        assert!(plan_general(&constants(2.0, 0.6), 2, 0.5, 0.1, None, None).is_err());
        let mut c0 = c;
        c0.c4 = 0.0;
        assert!(plan_general(&c0, 2, 0.5, 0.1, None, None).is_err());
    }

    #[test]
    fn general_plan_defaults_to_lower_bounds() {
        let mut c = constants(2.0, 1.0);
        c.c3 = 8.0;
        c.c4 = 2.0;
        let plan = plan_general(&c, 2, 0.5, 0.1, None, None).unwrap();
        assert_relative_eq!(plan.r0, 4.0);
        assert_relative_eq!(plan.big_t, 4.0);
    }

    #[test]
    fn b1_plan_ou() {
        let plan = plan_b1(&ou(10), 0.1, false).unwrap();
        assert_eq!(plan.correcting_levels, 9);
        assert_relative_eq!(plan.horizons[0], 10.0 * 100.0 * 81.0, max_relative = 1e-12);
        for w in plan.horizons.windows(2) {
            assert_relative_eq!(w[0] / w[1], 2.0, max_relative = 1e-12);
        }
        let b2 = plan_b2(&ou(10), 0.1, false).unwrap();
        let ratio = plan.correcting_levels as f64 / b2.correcting_levels as f64;
        assert!((1.5..=2.5).contains(&ratio));
    }

    #[test]
    fn b1_r0_floor() {
        let plan = plan_b1(&ou(2), 0.5, false).unwrap();
        assert_eq!(plan.r0, 1.0);
        assert_eq!(plan.correcting_levels, 2);
    }

    #[test]
    fn aggressive_plan_on_logistic() {
        let m = logistic(100);
        let agg = plan_aggressive(&m, 0.1).unwrap();
        assert!(agg.experimental);
        assert_relative_eq!(agg.gamma0(), 20.25, max_relative = 1e-12);
        let b2 = plan_b2(&m, 0.1, false).unwrap();
        assert_eq!(agg.correcting_levels, b2.correcting_levels);
        let ratio = b2.predicted_complexity as f64 / agg.predicted_complexity as f64;
        assert!((ratio - 81.0).abs() < 0.05 * 81.0, "{ratio}");
    }

    #[test]
    fn aggressive_plan_branches() {
        // G = 0: the stability branch 1 / (4 alpha) = 1/4 for OU.
        let agg = plan_aggressive(&ou(4), 0.1).unwrap();
        assert_relative_eq!(agg.gamma0(), 0.25);
        // Small d with a large covariate: the bounded-gradient branch wins.
        let x = vec![20.0, 0.0];
        let p = LogisticPerturbedPotential::new(0.25, x).unwrap();
        let m = make_langevin_model(Arc::new(p), Sigma0Mode::Auto).unwrap();
        let agg = plan_aggressive(&m, 0.1).unwrap();
        let s2 = m.sigma0_sq();
        assert_relative_eq!(agg.gamma0(), 2.0 / (s2 * 400.0), max_relative = 1e-12);
        assert!(agg.gamma0() < 1.0 / (4.0 * m.alpha_eff()));
    }

    #[test]
    fn custom_plan_r0() {
        let plan = TuningPlan::custom(3, 0.5, vec![10.0], 1.0).unwrap();
        assert_eq!(plan.correcting_levels, 0);
        assert_eq!(plan.predicted_complexity, 20);
        assert!(TuningPlan::custom(3, 0.5, vec![10.0, 20.0], 1.0).is_err());
        assert!(TuningPlan::custom(3, 0.5, vec![0.6], 0.0).is_ok());
        assert!(TuningPlan::custom(3, 0.5, vec![0.4], 0.0).is_err());
    }

    #[test]
    fn plan_round_trips_through_json() {
        let plan = plan_b2(&ou(10), 0.1, false).unwrap();
        let text = serde_json::to_string(&plan).unwrap();
        assert!(text.contains("\"R\":5"));
        let back: TuningPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, plan);
    }
}
