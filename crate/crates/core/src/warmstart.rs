//! Gradient-descent preprocessing of the starting point.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Potential;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub x0: Vec<f64>,
    pub iters_used: usize,
    pub grad_norm_sq: f64,
    /// `grad_norm_sq <= alpha_u * d`.
    pub converged: bool,
}

/// Fixed-step gradient descent `x <- x - step grad U(x)` until
/// `|grad U(x)|^2 <= alpha_u d` or `max_iters` steps. `step` defaults to `1 / l_u`.
/// Running out of iterations is not an error; `converged` is then false.
pub fn warm_start(
    potential: &dyn Potential,
    x_init: &[f64],
    step: Option<f64>,
    max_iters: usize,
) -> Result<WarmStart> {
    let d = potential.dim();
    if x_init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x_init.len(),
        });
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let l = potential.l_u();
    let step = step.unwrap_or(1.0 / l);
    if !(step > 0.0 && step < 2.0 / l) {
        return Err(Error::invalid(format!(
            "descent step must lie in (0, 2 / l_u) = (0, {}) (got {step})",
            2.0 / l
        )));
    }
    let threshold = potential.alpha_u() * d as f64;
    let mut x = x_init.to_vec();
    let mut g = vec![0.0; d];
    let mut iters = 0;
    let grad_norm_sq = loop {
        potential.gradient(&x, &mut g);
        let norm_sq: f64 = g.iter().map(|v| v * v).sum();
        if !norm_sq.is_finite() {
            return Err(Error::NonFinite {
                step: iters as u64,
                step_size: step,
            });
        }
        if norm_sq <= threshold || iters == max_iters {
            break norm_sq;
        }
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= step * gi);
        iters += 1;
    };
    let converged = grad_norm_sq <= threshold;
    if !converged {
        warn!(
            "warm start stopped after {iters} iterations with |grad U|^2 = {grad_norm_sq:.4e} > {threshold:.4e}"
        );
    }
    Ok(WarmStart {
        x0: x,
        iters_used: iters,
        grad_norm_sq,
        converged,
    })
}
