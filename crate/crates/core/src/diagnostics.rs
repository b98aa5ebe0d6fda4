//! Benchmarks against known references and numerical probes of the
//! assumptions the tuning relies on.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_run, EstimatorOutput};
use crate::model::{
    logistic_covariate, make_langevin_model, ou_reference_value, LangevinModel,
    LogisticPerturbedPotential, Potential, QuadraticPotential, Sigma0Mode,
};
use crate::observable::{CoordinateSquare, Identity, Norm, Observable, Value};
use crate::sde::{grid_index, EulerScheme, NoiseStream};
use crate::tuning::{plan_aggressive, plan_b2, TuningPlan};
use crate::warmstart::warm_start;

/// Starting point of benchmark runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Mode {
    Zero,
    Ones,
    /// Gradient descent from the origin.
    WarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model_label: String,
    pub plan_echo: TuningPlan,
    pub n_runs: usize,
    pub reference_value: Value,
    /// How `reference_value` was obtained.
    pub reference_source: String,
    pub rmse: f64,
    pub per_run_estimates: Vec<Value>,
    pub per_run_complexity: Vec<u64>,
    pub mean_complexity: u64,
    pub x0: Vec<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub per_run_seconds: Vec<f64>,
    pub wall_clock_seconds: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report is always serialisable")
    }

    /// Columns `run, estimate` (or `estimate_k` per coordinate), `complexity, seconds`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let vector = matches!(self.reference_value, Value::Vector(_));
        let k = self.reference_value.components().len();
        let mut header = vec!["run".to_string()];
        if vector {
            header.extend((0..k).map(|i| format!("estimate_{i}")));
        } else {
            header.push("estimate".into());
        }
        header.push("complexity".into());
        header.push("seconds".into());
        w.write_record(&header)?;
        for (i, est) in self.per_run_estimates.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(est.components().iter().map(|v| v.to_string()));
            rec.push(self.per_run_complexity[i].to_string());
            rec.push(self.per_run_seconds[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Distance used by the RMSE: absolute difference for scalars,
/// `k^{-1/2} |a - b|` for vectors of length `k`.
pub fn normalized_distance(a: &Value, b: &Value) -> f64 {
    let (a, b) = (a.components(), b.components());
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq / a.len() as f64).sqrt()
}

pub fn rmse(estimates: &[Value], reference: &Value) -> f64 {
    let mean_sq = estimates
        .iter()
        .map(|e| normalized_distance(e, reference).powi(2))
        .sum::<f64>()
        / estimates.len() as f64;
    mean_sq.sqrt()
}

fn starting_point(
    potential: &dyn Potential,
    mode: X0Mode,
    warnings: &mut Vec<String>,
) -> Result<Vec<f64>> {
    let d = potential.dim();
    Ok(match mode {
        X0Mode::Zero => vec![0.0; d],
        X0Mode::Ones => vec![1.0; d],
        X0Mode::WarmStart => {
            let ws = warm_start(potential, &vec![0.0; d], None, 10_000)?;
            if !ws.converged {
                warnings.push(format!(
                    "warm start did not reach |grad U|^2 <= alpha_u d (got {:.4e})",
                    ws.grad_norm_sq
                ));
            }
            ws.x0
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    model: &LangevinModel,
    plan: TuningPlan,
    x0: Vec<f64>,
    f: &dyn Observable,
    reference_value: Value,
    reference_source: String,
    n_runs: usize,
    seed: u64,
    mut warnings: Vec<String>,
) -> Result<BenchReport> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs must be at least 1"));
    }
    let start = Instant::now();
    let runs: Vec<(EstimatorOutput, f64)> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let t = Instant::now();
            let out = estimate_run(model, &plan, &x0, f, seed, i)?;
            Ok((out, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Some((first, _)) = runs.first() {
        warnings.extend(first.warnings.iter().cloned());
    }
    let per_run_estimates: Vec<Value> = runs.iter().map(|(o, _)| o.estimate.clone()).collect();
    let per_run_complexity: Vec<u64> = runs.iter().map(|(o, _)| o.total_complexity).collect();
    let mean_complexity = per_run_complexity.iter().sum::<u64>() / n_runs as u64;
    Ok(BenchReport {
        model_label: model.label(),
        rmse: rmse(&per_run_estimates, &reference_value),
        plan_echo: plan,
        n_runs,
        reference_value,
        reference_source,
        per_run_estimates,
        per_run_complexity,
        mean_complexity,
        x0,
        master_seed: seed,
        warnings,
        per_run_seconds: runs.iter().map(|(_, s)| *s).collect(),
        wall_clock_seconds,
    })
}

/// RMSE of the second-order plan for `E|Z|`, `Z ~ N(0, I_d)`, against its closed form.
pub fn bench_ou(
    d: usize,
    eps: f64,
    n_runs: usize,
    x0_mode: X0Mode,
    seed: u64,
) -> Result<BenchReport> {
    let reference = ou_reference_value(d)?;
    let potential = Arc::new(QuadraticPotential::new(d)?);
    let model = make_langevin_model(potential.clone(), Sigma0Mode::Auto)?;
    let plan = plan_b2(&model, eps, false)?;
    let mut warnings = Vec::new();
    let x0 = starting_point(potential.as_ref(), x0_mode, &mut warnings)?;
    run_bench(
        &model,
        plan,
        x0,
        &Norm,
        Value::Scalar(reference),
        "closed form".into(),
        n_runs,
        seed,
        warnings,
    )
}

/// Accuracy of the default logistic reference run.
pub const DEFAULT_REFERENCE_EPS: f64 = 0.01;
/// Seed of the default logistic reference run, distinct from benchmark seeds.
pub const DEFAULT_REFERENCE_SEED: u64 = 0x005e_ed0f_7ee5;

/// Source of the posterior-mean reference in [`bench_logistic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogisticReference {
    /// A single estimator run of the second-order plan at a finer accuracy.
    Estimate {
        eps: f64,
        seed: u64,
    },
    /// One-dimensional quadrature along the covariate direction.
    Quadrature,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticBenchConfig {
    pub d: usize,
    pub lambda: f64,
    pub a: f64,
    pub eps: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub covariate_seed: u64,
    pub reference: LogisticReference,
    #[serde(default)]
    pub aggressive: bool,
    pub x0_mode: X0Mode,
}

impl LogisticBenchConfig {
    pub fn new(d: usize, lambda: f64, a: f64, eps: f64, n_runs: usize, seed: u64) -> Self {
        Self {
            d,
            lambda,
            a,
            eps,
            n_runs,
            seed,
            covariate_seed: 0,
            reference: LogisticReference::Estimate {
                eps: DEFAULT_REFERENCE_EPS,
                seed: DEFAULT_REFERENCE_SEED,
            },
            aggressive: false,
            x0_mode: X0Mode::WarmStart,
        }
    }
}

/// The logistic-perturbed potential with covariate drawn from `covariate_seed`.
pub fn logistic_potential(
    d: usize,
    lambda: f64,
    a: f64,
    covariate_seed: u64,
) -> Result<LogisticPerturbedPotential> {
    let mut rng = ChaCha8Rng::seed_from_u64(covariate_seed);
    let x = logistic_covariate(d, a, &mut rng)?;
    LogisticPerturbedPotential::new(lambda, x)
}

/// Posterior mean of the logistic-perturbed potential. Orthogonally to the
/// covariate `x` the law is centred Gaussian; along `x / |x|` the coordinate
/// `t` has density proportional to `exp(-softplus(|x| t) - lambda t^2 / 2)`.
pub fn logistic_posterior_mean_quadrature(potential: &LogisticPerturbedPotential) -> Vec<f64> {
    let x = potential.covariate();
    let lambda = potential.lambda();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let half_width = 40.0 / lambda.sqrt();
    let n = 200_000;
    let h = 2.0 * half_width / n as f64;
    let log_density = |t: f64| {
        let u = norm * t;
        let softplus = if u > 0.0 {
            u + (-u).exp().ln_1p()
        } else {
            u.exp().ln_1p()
        };
        -softplus - 0.5 * lambda * t * t
    };
    let peak = (0..=n)
        .map(|i| log_density(-half_width + i as f64 * h))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..=n {
        let t = -half_width + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let p = w * (log_density(t) - peak).exp();
        mass += p;
        first += p * t;
    }
    let mean_t = first / mass;
    x.iter().map(|v| mean_t * v / norm).collect()
}

/// Normalized-L2 RMSE for the posterior mean of the logistic-perturbed
/// potential, with `f` the identity and the automatic `sigma0`.
pub fn bench_logistic(config: &LogisticBenchConfig) -> Result<BenchReport> {
    let potential = Arc::new(logistic_potential(
        config.d,
        config.lambda,
        config.a,
        config.covariate_seed,
    )?);
    let model = make_langevin_model(potential.clone(), Sigma0Mode::Auto)?;
    let plan = if config.aggressive {
        plan_aggressive(&model, config.eps)?
    } else {
        plan_b2(&model, config.eps, false)?
    };
    let mut warnings = Vec::new();
    let x0 = starting_point(potential.as_ref(), config.x0_mode, &mut warnings)?;
    let (reference, source) = match &config.reference {
        LogisticReference::Estimate { eps, seed } => {
            let ref_plan = plan_b2(&model, *eps, false)?;
            let out = estimate_run(&model, &ref_plan, &x0, &Identity, *seed, 0)?;
            (
                out.estimate.components().to_vec(),
                format!("estimator run at eps = {eps}, seed = {seed}"),
            )
        }
        LogisticReference::Quadrature => (
            logistic_posterior_mean_quadrature(&potential),
            "quadrature along the covariate direction".into(),
        ),
        LogisticReference::Given(v) => {
            if v.len() != config.d {
                return Err(Error::DimensionMismatch {
                    expected: config.d,
                    found: v.len(),
                });
            }
            (v.clone(), "user supplied".into())
        }
    };
    run_bench(
        &model,
        plan,
        x0,
        &Identity,
        Value::Vector(reference),
        source,
        config.n_runs,
        config.seed,
        warnings,
    )
}

/// Driving noise of a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    Seeded(u64),
    /// Deterministic drift recursion.
    Noiseless,
}

impl NoiseSource {
    fn stream(self, path: u64) -> NoiseStream {
        match self {
            NoiseSource::Seeded(seed) => NoiseStream::new(seed, path, 0),
            NoiseSource::Noiseless => NoiseStream::zero(),
        }
    }
}

/// `sup_k E|X^{h}_{kh} - X^{h/m}_{kh}|^2` over the grid of the coarse step `h`
/// up to `horizon`, estimated from `n_paths` shared-noise path pairs. The coarse
/// increment is the sum of the `m = refinement` fine increments.
pub fn confluence_gap(
    model: &LangevinModel,
    x0: &[f64],
    coarse_step: f64,
    refinement: usize,
    horizon: f64,
    n_paths: usize,
    noise: NoiseSource,
) -> Result<f64> {
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if refinement == 0 || n_paths == 0 {
        return Err(Error::invalid("refinement and n_paths must be positive"));
    }
    if !(coarse_step > 0.0 && horizon >= coarse_step) {
        return Err(Error::invalid("need 0 < step <= horizon"));
    }
    let n = grid_index(horizon, coarse_step) as usize;
    let d = model.dim();
    let fine_step = coarse_step / refinement as f64;
    let root = fine_step.sqrt();
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stream = noise.stream(p);
            let mut fine_scheme = EulerScheme::new(model);
            let mut coarse_scheme = EulerScheme::new(model);
            let (mut fine, mut coarse) = (x0.to_vec(), x0.to_vec());
            let mut dw = vec![0.0; d];
            let mut sum = vec![0.0; d];
            let mut gaps = Vec::with_capacity(n);
            for k in 0..n {
                sum.fill(0.0);
                for _ in 0..refinement {
                    stream.fill_standard_normal(&mut dw);
                    dw.iter_mut().for_each(|v| *v *= root);
                    if !fine_scheme.advance(&mut fine, fine_step, &dw) {
                        return Err(Error::NonFinite {
                            step: k as u64,
                            step_size: fine_step,
                        });
                    }
                    sum.iter_mut().zip(&dw).for_each(|(s, w)| *s += w);
                }
                if !coarse_scheme.advance(&mut coarse, coarse_step, &sum) {
                    return Err(Error::NonFinite {
                        step: k as u64,
                        step_size: coarse_step,
                    });
                }
                gaps.push(
                    fine.iter()
                        .zip(&coarse)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum(),
                );
            }
            Ok(gaps)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; n];
    for gaps in &per_path {
        mean.iter_mut().zip(gaps).for_each(|(m, g)| *m += g);
    }
    Ok(mean.iter().map(|m| m / n_paths as f64).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfluenceReport {
    pub gamma: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// `[gap(gamma), gap(gamma / 2)]`.
    pub sup_gap_sq: [f64; 2],
    pub gap_ratio: f64,
    /// `log2(gap(gamma) / gap(gamma / 2))`; about `b` for `L2`-confluence of order `b / 2`.
    pub order_estimate: f64,
}

/// Compares the `(gamma, gamma / 2)` and `(gamma / 2, gamma / 4)` coarse/fine gaps
/// from the origin, with independent noise for the two pairs.
pub fn confluence_probe(
    model: &LangevinModel,
    gamma: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ConfluenceReport> {
    if n_paths < 100 {
        return Err(Error::invalid(format!(
            "at least 100 paths are needed for a meaningful order estimate (got {n_paths})"
        )));
    }
    let limit = model.alpha_eff() / (2.0 * model.l_eff().powi(2));
    if gamma > limit * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "gamma must not exceed alpha / (2 L^2) = {limit} (got {gamma})"
        )));
    }
    let x0 = vec![0.0; model.dim()];
    let coarse = confluence_gap(
        model,
        &x0,
        gamma,
        2,
        horizon,
        n_paths,
        NoiseSource::Seeded(seed),
    )?;
    let fine = confluence_gap(
        model,
        &x0,
        0.5 * gamma,
        2,
        horizon,
        n_paths,
        NoiseSource::Seeded(crate::sde::derive_seed(seed, 0, 1)),
    )?;
    let gap_ratio = coarse / fine;
    Ok(ConfluenceReport {
        gamma,
        horizon,
        n_paths,
        sup_gap_sq: [coarse, fine],
        gap_ratio,
        order_estimate: gap_ratio.log2(),
    })
}

/// `|X^x_n - X^y_n|` for `n = 0..=n_steps`, both paths driven by the same noise.
pub fn contraction_probe(
    model: &LangevinModel,
    x: &[f64],
    y: &[f64],
    gamma: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = model.dim();
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if x.len() != d { x.len() } else { y.len() },
        });
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive (got {gamma})"
        )));
    }
    let mut stream = NoiseStream::new(seed, 0, 0);
    let mut sx = EulerScheme::new(model);
    let mut sy = EulerScheme::new(model);
    let (mut a, mut b) = (x.to_vec(), y.to_vec());
    let mut dw = vec![0.0; d];
    let root = gamma.sqrt();
    let distance = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt()
    };
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(distance(&a, &b));
    for k in 0..n_steps {
        stream.fill_standard_normal(&mut dw);
        dw.iter_mut().for_each(|v| *v *= root);
        if !(sx.advance(&mut a, gamma, &dw) && sy.advance(&mut b, gamma, &dw)) {
            return Err(Error::NonFinite {
                step: k as u64,
                step_size: gamma,
            });
        }
        out.push(distance(&a, &b));
    }
    Ok(out)
}

/// Per-coordinate stationary second moment `2 / (2 - gamma)` of the Euler chain
/// `x <- (1 - gamma) x + sqrt(2 gamma) g`.
pub fn euler_invariant_moment_oracle(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return Err(Error::invalid(format!(
            "the Euler chain is stable only for gamma in (0, 2) (got {gamma})"
        )));
    }
    Ok(2.0 / (2.0 - gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub gamma: f64,
    pub average: f64,
    pub standard_error: f64,
    pub oracle: f64,
    /// `(average - oracle) / standard_error`.
    pub z_score: f64,
}

/// Level-0 average of `x_coordinate^2` on the Euler chain of `model` with step
/// `gamma`, window `[tau, horizon]`, with a batch-means standard error.
/// The average equals that of `run_level0` with the stream `NoiseStream::new(seed, 0, 0)`.
pub fn level0_bias_check(
    model: &LangevinModel,
    gamma: f64,
    tau: f64,
    horizon: f64,
    coordinate: usize,
    n_batches: usize,
    seed: u64,
) -> Result<BiasCheck> {
    let oracle = euler_invariant_moment_oracle(gamma)?;
    if coordinate >= model.dim() {
        return Err(Error::invalid("coordinate out of range"));
    }
    let f = CoordinateSquare(coordinate);
    let start = grid_index(tau, gamma);
    let end = grid_index(horizon, gamma);
    let count = end.saturating_sub(start) as usize;
    if n_batches < 2 || count < 2 * n_batches {
        return Err(Error::invalid("window too short for the requested batches"));
    }
    let d = model.dim();
    let mut scheme = EulerScheme::new(model);
    let mut stream = NoiseStream::new(seed, 0, 0);
    let mut x = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut fx = [0.0];
    let mut samples = Vec::with_capacity(count);
    let root = gamma.sqrt();
    for k in 0..end {
        if k >= start {
            f.eval(&x, &mut fx);
            samples.push(fx[0]);
        }
        stream.fill_standard_normal(&mut dw);
        dw.iter_mut().for_each(|v| *v *= root);
        if !scheme.advance(&mut x, gamma, &dw) {
            return Err(Error::NonFinite {
                step: k,
                step_size: gamma,
            });
        }
    }
    let mut window = crate::sde::WindowMean::new(1);
    samples
        .iter()
        .for_each(|v| window.push(std::slice::from_ref(v)));
    let average = window.mean()[0];
    let batch = count / n_batches;
    let means: Vec<f64> = samples
        .chunks_exact(batch)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    let standard_error = (var / n_batches as f64).sqrt();
    Ok(BiasCheck {
        gamma,
        average,
        standard_error,
        oracle,
        z_score: (average - oracle) / standard_error,
    })
}
