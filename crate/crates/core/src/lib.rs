//! Multilevel pathwise-average estimators of Gibbs expectations `pi(f)` for
//! `pi ~ exp(-U)`, built on Euler schemes of the overdamped Langevin diffusion.
//!
//! ```
//! use std::sync::Arc;
//! use mlpa_core::{estimate, make_langevin_model, plan_b2, Norm, QuadraticPotential, Sigma0Mode};
//!
//! let model = make_langevin_model(Arc::new(QuadraticPotential::new(4).unwrap()), Sigma0Mode::Auto).unwrap();
//! let plan = plan_b2(&model, 0.3, false).unwrap();
//! let out = estimate(&model, &plan, &[0.0; 4], &Norm, 7).unwrap();
//! assert_eq!(out.total_complexity, plan.predicted_complexity);
//! ```

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod model;
pub mod observable;
pub mod sde;
pub mod tuning;
pub mod warmstart;

pub use diagnostics::{
    bench_logistic, bench_ou, confluence_probe, contraction_probe, euler_invariant_moment_oracle,
    BenchReport, ConfluenceReport, LogisticBenchConfig, LogisticReference, X0Mode,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate, estimate_repeated, estimate_run, estimate_with_seeds, EstimatorOutput, LevelRow,
};
pub use model::{
    logistic_covariate, make_langevin_model, ou_reference_value, CustomPotential, LangevinModel,
    LogisticPerturbedPotential, Potential, QuadraticPotential, Sigma0Mode,
};
pub use observable::{Constant, CoordinateSquare, FnObservable, Identity, Norm, Observable, Value};
pub use sde::{
    derive_seed, euler_step, run_coupled_level, run_level0, LevelResult, NoiseStream, PathState,
};
pub use tuning::{
    plan_aggressive, plan_b1, plan_b2, plan_general, predicted_complexity,
    GeneralAssumptionConstants, Regime, TuningPlan,
};
pub use warmstart::{warm_start, WarmStart};
