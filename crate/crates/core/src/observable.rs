//! Test functions `f` whose Gibbs expectation is estimated.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A function of the state. Scalar observables have `output_dim == 1`;
/// vector observables are applied coordinatewise on shared paths.
pub trait Observable: Send + Sync {
    fn output_dim(&self, state_dim: usize) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    fn label(&self) -> String;

    fn is_vector(&self) -> bool {
        false
    }
}

/// `f(x) = |x|` (1-Lipschitz).
#[derive(Debug, Clone, Copy, Default)]
pub struct Norm;

impl Observable for Norm {
    fn output_dim(&self, _: usize) -> usize {
        1
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }

    fn label(&self) -> String {
        "norm".into()
    }
}

/// `f(x) = x` (coordinatewise 1-Lipschitz).
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Observable for Identity {
    fn output_dim(&self, state_dim: usize) -> usize {
        state_dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn label(&self) -> String {
        "identity".into()
    }

    fn is_vector(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl Observable for Constant {
    fn output_dim(&self, _: usize) -> usize {
        1
    }

    fn eval(&self, _: &[f64], out: &mut [f64]) {
        out[0] = self.0;
    }

    fn label(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// `f(x) = x_i^2`.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateSquare(pub usize);

impl Observable for CoordinateSquare {
    fn output_dim(&self, _: usize) -> usize {
        1
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[self.0] * x[self.0];
    }

    fn label(&self) -> String {
        format!("coord_square({})", self.0)
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A caller-provided scalar function. Its Lipschitz constant is the caller's business.
#[derive(Clone)]
pub struct FnObservable {
    f: Arc<ScalarFn>,
    label: String,
}

impl FnObservable {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }
}

impl fmt::Debug for FnObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnObservable")
            .field("label", &self.label)
            .finish()
    }
}

impl Observable for FnObservable {
    fn output_dim(&self, _: usize) -> usize {
        1
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = (self.f)(x);
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// A scalar or vector result, serialised as a bare number or an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn from_components(components: Vec<f64>, vector: bool) -> Self {
        if !vector && components.len() == 1 {
            Value::Scalar(components[0])
        } else {
            Value::Vector(components)
        }
    }

    pub fn components(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => std::slice::from_ref(v),
            Value::Vector(v) => v,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(_) => None,
        }
    }
}
