//! Potentials `U` and the overdamped Langevin model built on top of them.
//!
//! A [`Potential`] carries its own convexity constant `alpha_u` (already
//! clipped at 1) and gradient Lipschitz constant `l_u`. The
//! [`LangevinModel`] rescales time by `sigma0^2`, giving the drift
//! `-sigma0^2 grad U` and additive noise `sqrt(2) sigma0`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A potential `U: R^d -> R` whose Gibbs measure `exp(-U)` is the target.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad U(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Lower bound on the Hessian spectrum, clipped at 1.
    fn alpha_u(&self) -> f64;

    /// Lipschitz constant of the gradient (upper bound on the Hessian spectrum).
    fn l_u(&self) -> f64;

    /// Whether the caller asserts the third-derivative growth condition
    /// `|Laplacian(grad U)|^2 <= l_u^4 d / alpha_u` needed by the second-order plans.
    fn third_deriv_ok(&self) -> bool {
        true
    }

    /// For potentials of the form `U = U1 + lambda |x|^2 / 2`, the supremum of `|grad U1|`.
    fn grad_u1_sup(&self) -> Option<f64> {
        None
    }

    fn label(&self) -> String;
}

fn check_constants(alpha_u: f64, l_u: f64) -> Result<()> {
    if !(alpha_u.is_finite() && l_u.is_finite()) || alpha_u <= 0.0 {
        return Err(Error::invalid(format!(
            "alpha_u must be positive and finite (got {alpha_u})"
        )));
    }
    if alpha_u > l_u {
        return Err(Error::invalid(format!(
            "alpha_u ({alpha_u}) exceeds l_u ({l_u})"
        )));
    }
    Ok(())
}

/// `U(x) = |x|^2 / 2`; the Langevin diffusion is the Ornstein-Uhlenbeck process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPotential {
    dim: usize,
}

impl QuadraticPotential {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(Self { dim })
    }
}

impl Potential for QuadraticPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn alpha_u(&self) -> f64 {
        1.0
    }

    fn l_u(&self) -> f64 {
        1.0
    }

    fn grad_u1_sup(&self) -> Option<f64> {
        Some(0.0)
    }

    fn label(&self) -> String {
        format!("ou(d={})", self.dim)
    }
}

/// `U(b) = log(1 + exp(x^T b)) + lambda |b|^2 / 2` for a fixed covariate `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticPerturbedPotential {
    lambda: f64,
    covariate: Vec<f64>,
    covariate_norm_sq: f64,
}

impl LogisticPerturbedPotential {
    pub fn new(lambda: f64, covariate: Vec<f64>) -> Result<Self> {
        if covariate.is_empty() {
            return Err(Error::invalid("covariate must be nonempty"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be positive (got {lambda})"
            )));
        }
        if covariate.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariate has non-finite entries"));
        }
        let covariate_norm_sq = covariate.iter().map(|v| v * v).sum();
        Ok(Self {
            lambda,
            covariate,
            covariate_norm_sq,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn covariate(&self) -> &[f64] {
        &self.covariate
    }

    fn margin(&self, beta: &[f64]) -> f64 {
        self.covariate.iter().zip(beta).map(|(c, b)| c * b).sum()
    }
}

/// `log(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-u})` without overflow.
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Potential for LogisticPerturbedPotential {
    fn dim(&self) -> usize {
        self.covariate.len()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let sq: f64 = beta.iter().map(|v| v * v).sum();
        softplus(self.margin(beta)) + 0.5 * self.lambda * sq
    }

    fn gradient(&self, beta: &[f64], out: &mut [f64]) {
        let s = logistic(self.margin(beta));
        for ((o, c), b) in out.iter_mut().zip(&self.covariate).zip(beta) {
            *o = c * s + self.lambda * b;
        }
    }

    fn alpha_u(&self) -> f64 {
        self.lambda.min(1.0)
    }

    fn l_u(&self) -> f64 {
        // (1 + e^u)(1 + e^-u) >= 5 bound on the logistic curvature.
        self.lambda + self.covariate_norm_sq / 5.0
    }

    fn grad_u1_sup(&self) -> Option<f64> {
        Some(self.covariate_norm_sq.sqrt())
    }

    fn label(&self) -> String {
        format!(
            "logistic(d={}, lambda={}, |x|^2={:.6})",
            self.dim(),
            self.lambda,
            self.covariate_norm_sq
        )
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A user-supplied potential. Constants are data: nothing is derived symbolically.
#[derive(Clone)]
pub struct CustomPotential {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
    alpha_u: f64,
    l_u: f64,
    third_deriv_ok: bool,
    grad_u1_sup: Option<f64>,
    label: String,
}

impl CustomPotential {
    /// `lambda_min` is the infimum of the Hessian spectrum; it is clipped at 1 here.
    pub fn new<V, G>(dim: usize, value: V, gradient: G, lambda_min: f64, l_u: f64) -> Result<Self>
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let alpha_u = lambda_min.min(1.0);
        check_constants(alpha_u, l_u)?;
        Ok(Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            alpha_u,
            l_u,
            third_deriv_ok: false,
            grad_u1_sup: None,
            label: "custom".to_string(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_third_deriv_ok(mut self, ok: bool) -> Self {
        self.third_deriv_ok = ok;
        self
    }

    pub fn with_grad_u1_sup(mut self, sup: f64) -> Self {
        self.grad_u1_sup = Some(sup);
        self
    }
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("dim", &self.dim)
            .field("alpha_u", &self.alpha_u)
            .field("l_u", &self.l_u)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl Potential for CustomPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    fn alpha_u(&self) -> f64 {
        self.alpha_u
    }

    fn l_u(&self) -> f64 {
        self.l_u
    }

    fn third_deriv_ok(&self) -> bool {
        self.third_deriv_ok
    }

    fn grad_u1_sup(&self) -> Option<f64> {
        self.grad_u1_sup
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// How the diffusion scale `sigma0` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma0Mode {
    /// `sigma0^2 = alpha_u / l_u^2`, which normalises `alpha / L^2` to 1.
    Auto,
    Explicit(f64),
}

/// `dX = -sigma0^2 grad U(X) dt + sqrt(2) sigma0 dB`, invariant for `exp(-U)`.
#[derive(Clone)]
pub struct LangevinModel {
    potential: Arc<dyn Potential>,
    sigma0: f64,
    sigma0_sq: f64,
    auto_scaled: bool,
}

impl fmt::Debug for LangevinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LangevinModel")
            .field("potential", &self.potential.label())
            .field("sigma0", &self.sigma0)
            .field("alpha_eff", &self.alpha_eff())
            .field("l_eff", &self.l_eff())
            .finish()
    }
}

impl LangevinModel {
    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    /// True when `sigma0` was chosen by [`Sigma0Mode::Auto`].
    pub fn is_auto_scaled(&self) -> bool {
        self.auto_scaled
    }

    pub fn noise_scale(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.sigma0
    }

    pub fn alpha_eff(&self) -> f64 {
        self.sigma0_sq * self.potential.alpha_u()
    }

    pub fn l_eff(&self) -> f64 {
        self.sigma0_sq * self.potential.l_u()
    }

    /// Writes `b(x) = -sigma0^2 grad U(x)` into `out`.
    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.potential.gradient(x, out);
        let scale = -self.sigma0_sq;
        out.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn label(&self) -> String {
        self.potential.label()
    }
}

/// Builds the Langevin model for `potential` with the requested `sigma0`.
pub fn make_langevin_model(
    potential: Arc<dyn Potential>,
    sigma0_mode: Sigma0Mode,
) -> Result<LangevinModel> {
    let alpha_u = potential.alpha_u();
    let l_u = potential.l_u();
    check_constants(alpha_u, l_u)?;
    let (sigma0_sq, auto_scaled) = match sigma0_mode {
        Sigma0Mode::Auto => (alpha_u / (l_u * l_u), true),
        Sigma0Mode::Explicit(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma0 must be positive (got {s})")));
            }
            (s * s, false)
        }
    };
    Ok(LangevinModel {
        potential,
        sigma0: sigma0_sq.sqrt(),
        sigma0_sq,
        auto_scaled,
    })
}

/// Draws a covariate `sqrt(5a) Z / |Z|` with `Z ~ N(0, I_d)`, so that `|x|^2 = 5a`.
pub fn logistic_covariate<R: Rng + ?Sized>(d: usize, a: f64, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("a must be positive (got {a})")));
    }
    let radius = (5.0 * a).sqrt();
    loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return Ok(z.into_iter().map(|v| radius * v / norm).collect());
        }
    }
}

/// `E|Z|` for `Z ~ N(0, I_d)` with `d = 2k`:
/// `(2k)! sqrt(2 pi) / (4^k k! (k-1)!)`, evaluated as
/// `sqrt(2 pi) k prod_{j<=k} (2j-1)/(2j)` so large `d` cannot overflow.
pub fn ou_reference_value(d: usize) -> Result<f64> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::Unsupported(format!(
            "closed-form reference needs an even positive dimension (got {d})"
        )));
    }
    let k = d / 2;
    let central_binomial = (1..=k).fold(1.0_f64, |acc, j| {
        let j = j as f64;
        acc * (2.0 * j - 1.0) / (2.0 * j)
    });
    Ok((2.0 * std::f64::consts::PI).sqrt() * k as f64 * central_binomial)
}
