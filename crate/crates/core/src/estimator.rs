//! The multilevel estimator: a level-0 occupation average plus `R` coupled
//! correction averages, each driven by its own noise stream.

use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LangevinModel;
use crate::observable::{Observable, Value};
use crate::sde::{derive_seed, run_coupled_level, run_level0, LevelResult, NoiseStream};
use crate::tuning::TuningPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub estimate: Value,
    /// Per-level averages, level 0 first. Their sum is `estimate`.
    pub level_contributions: Vec<Value>,
    pub level_iterations: Vec<u64>,
    pub total_complexity: u64,
    pub plan_echo: TuningPlan,
    pub master_seed: u64,
    pub run_index: u64,
    pub observable: String,
    pub tau_used: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// One row of the per-level evolution table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: usize,
    pub gamma: f64,
    pub horizon: f64,
    pub iterations: u64,
    pub contribution: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl EstimatorOutput {
    pub fn level_rows(&self) -> Vec<LevelRow> {
        let mut cumulative = vec![0.0; self.estimate.components().len()];
        self.level_contributions
            .iter()
            .enumerate()
            .map(|(r, c)| {
                cumulative
                    .iter_mut()
                    .zip(c.components())
                    .for_each(|(acc, v)| *acc += v);
                LevelRow {
                    level: r,
                    gamma: self.plan_echo.gamma[r],
                    horizon: self.plan_echo.horizons[r],
                    iterations: self.level_iterations[r],
                    contribution: c.components().to_vec(),
                    cumulative: cumulative.clone(),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimator output is always serialisable")
    }

    /// One CSV row per level: `level, gamma, T, contribution[_k], iterations`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.estimate.components().len();
        let vector = matches!(self.estimate, Value::Vector(_));
        let mut header = vec!["level".to_string(), "gamma".into(), "T".into()];
        if vector {
            header.extend((0..k).map(|i| format!("contribution_{i}")));
        } else {
            header.push("contribution".into());
        }
        header.push("iterations".into());
        w.write_record(&header)?;
        for row in self.level_rows() {
            let mut rec = vec![
                row.level.to_string(),
                row.gamma.to_string(),
                row.horizon.to_string(),
            ];
            rec.extend(row.contribution.iter().map(|v| v.to_string()));
            rec.push(row.iterations.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_inputs(model: &LangevinModel, plan: &TuningPlan, x0: &[f64]) -> Result<()> {
    if plan.dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: plan.dim,
        });
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting point is not finite"));
    }
    plan.validate()
}

fn run_levels(
    model: &LangevinModel,
    plan: &TuningPlan,
    x0: &[f64],
    f: &dyn Observable,
    tau: f64,
    seeds: &[u64],
) -> Result<Vec<LevelResult>> {
    (0..=plan.correcting_levels)
        .into_par_iter()
        .map(|r| {
            let mut stream = NoiseStream::from_seed(seeds[r]);
            let result = if r == 0 {
                run_level0(
                    model,
                    x0,
                    plan.gamma[0],
                    tau,
                    plan.horizons[0],
                    f,
                    &mut stream,
                )
            } else {
                run_coupled_level(
                    model,
                    x0,
                    plan.gamma[r],
                    tau,
                    plan.horizons[r],
                    f,
                    &mut stream,
                )
            };
            if let Ok(level) = &result {
                debug!(
                    "level {r}: {} iterations, average {:?}",
                    level.iterations, level.average
                );
            }
            result
        })
        .collect()
}

/// Runs the estimator with an explicit noise seed per level.
pub fn estimate_with_seeds(
    model: &LangevinModel,
    plan: &TuningPlan,
    x0: &[f64],
    f: &dyn Observable,
    master_seed: u64,
    run_index: u64,
    level_seeds: &[u64],
) -> Result<EstimatorOutput> {
    check_inputs(model, plan, x0)?;
    if level_seeds.len() != plan.correcting_levels + 1 {
        return Err(Error::invalid(format!(
            "expected {} level seeds (got {})",
            plan.correcting_levels + 1,
            level_seeds.len()
        )));
    }
    let mut warnings = Vec::new();
    let tau = plan.effective_tau();
    if tau < plan.tau {
        let msg = format!(
            "warm start clamped from {:.6} to T_R / 2 = {:.6}; epsilon is above the feasibility threshold",
            plan.tau, tau
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    if plan.experimental {
        warnings.push("experimental plan outside the proven parameter range".into());
    }

    let levels = run_levels(model, plan, x0, f, tau, level_seeds)?;

    let vector = f.is_vector();
    let mut total = vec![0.0; f.output_dim(model.dim())];
    for level in &levels {
        total
            .iter_mut()
            .zip(&level.average)
            .for_each(|(a, v)| *a += v);
    }
    let level_iterations: Vec<u64> = levels.iter().map(|l| l.iterations).collect();
    Ok(EstimatorOutput {
        estimate: Value::from_components(total, vector),
        level_contributions: levels
            .into_iter()
            .map(|l| Value::from_components(l.average, vector))
            .collect(),
        total_complexity: level_iterations.iter().sum(),
        level_iterations,
        plan_echo: plan.clone(),
        master_seed,
        run_index,
        observable: f.label(),
        tau_used: tau,
        warnings,
    })
}

fn run_seeds(plan: &TuningPlan, master_seed: u64, run_index: u64) -> Vec<u64> {
    (0..=plan.correcting_levels as u64)
        .map(|r| derive_seed(master_seed, run_index, r))
        .collect()
}

/// One estimator run. Level `r` uses the stream seeded by `derive_seed(master_seed, 0, r)`.
pub fn estimate(
    model: &LangevinModel,
    plan: &TuningPlan,
    x0: &[f64],
    f: &dyn Observable,
    master_seed: u64,
) -> Result<EstimatorOutput> {
    estimate_run(model, plan, x0, f, master_seed, 0)
}

/// Run `run_index` of a replicated experiment: level `r` is seeded by
/// `derive_seed(master_seed, run_index, r)`.
pub fn estimate_run(
    model: &LangevinModel,
    plan: &TuningPlan,
    x0: &[f64],
    f: &dyn Observable,
    master_seed: u64,
    run_index: u64,
) -> Result<EstimatorOutput> {
    let seeds = run_seeds(plan, master_seed, run_index);
    estimate_with_seeds(model, plan, x0, f, master_seed, run_index, &seeds)
}

/// `n_runs` independent runs; run `i` uses `derive_seed(master_seed, i, r)` for level `r`,
/// so run 0 coincides with [`estimate`]. Output order follows the run index.
pub fn estimate_repeated(
    model: &LangevinModel,
    plan: &TuningPlan,
    x0: &[f64],
    f: &dyn Observable,
    master_seed: u64,
    n_runs: usize,
) -> Result<Vec<EstimatorOutput>> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs must be at least 1"));
    }
    check_inputs(model, plan, x0)?;
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| estimate_run(model, plan, x0, f, master_seed, i))
        .collect()
}
