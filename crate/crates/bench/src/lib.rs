//! Fixtures shared by the criterion benchmarks.

use std::sync::Arc;

use mlpa_core::diagnostics::logistic_potential;
use mlpa_core::{make_langevin_model, LangevinModel, QuadraticPotential, Sigma0Mode};

pub fn ou_model(d: usize) -> LangevinModel {
    make_langevin_model(
        Arc::new(QuadraticPotential::new(d).expect("d > 0")),
        Sigma0Mode::Auto,
    )
    .expect("quadratic constants are valid")
}

/// Logistic-perturbed model with `lambda = 1/4`, `|x|^2 = 10`.
pub fn logistic_model(d: usize) -> LangevinModel {
    let p = logistic_potential(d, 0.25, 2.0, 0).expect("valid logistic parameters");
    make_langevin_model(Arc::new(p), Sigma0Mode::Auto).expect("logistic constants are valid")
}
