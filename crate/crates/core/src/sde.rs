//! Constant-step Euler-Maruyama simulation of the Langevin model.
//!
//! Level 0 of the estimator is a single path averaged on its own grid.
//! Correcting levels advance a fine path (step `h`) and a coarse path
//! (step `2h`) driven by the same Brownian path: every coarse increment is
//! the sum of the two fine increments it spans. Both paths are read only on
//! the coarse grid.
//!
//! # Noise streams
//!
//! Each level of each replication owns an independent [`NoiseStream`]. The
//! child seed is obtained from `(master_seed, run_index, level_index)` by
//! [`derive_seed`], a fixed chain of SplitMix64 finalisers; the 256-bit
//! ChaCha8 key is then filled from a SplitMix64 sequence started at the child
//! seed. Nothing depends on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::LangevinModel;
use crate::observable::Observable;

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    mix64(*state)
}

/// Child seed for one level of one replication:
///
/// ```text
/// h0 = mix64(master ^ 0x6A09E667F3BCC909)
/// h1 = mix64(h0 ^ mix64(run   + 0x243F6A8885A308D3))
/// h2 = mix64(h1 ^ mix64(level + 0x13198A2E03707344))
/// ```
///
/// where `mix64` is the SplitMix64 output finaliser and additions wrap.
pub fn derive_seed(master_seed: u64, run_index: u64, level_index: u64) -> u64 {
    let h0 = mix64(master_seed ^ 0x6A09_E667_F3BC_C909);
    let h1 = mix64(h0 ^ mix64(run_index.wrapping_add(0x243F_6A88_85A3_08D3)));
    mix64(h1 ^ mix64(level_index.wrapping_add(0x1319_8A2E_0370_7344)))
}

/// A reproducible i.i.d. standard-normal sequence.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    rng: ChaCha8Rng,
    silent: bool,
}

impl NoiseStream {
    pub fn new(master_seed: u64, run_index: u64, level_index: u64) -> Self {
        Self::from_seed(derive_seed(master_seed, run_index, level_index))
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            seed,
            rng: ChaCha8Rng::from_seed(key),
            silent: false,
        }
    }

    /// A stream that yields zeros: paths follow the deterministic drift recursion.
    pub fn zero() -> Self {
        Self {
            silent: true,
            ..Self::from_seed(0)
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        if self.silent {
            out.fill(0.0);
            return;
        }
        for v in out.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// The underlying generator, for auxiliary draws (e.g. random covariates).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Position of an Euler path together with its step size and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub position: Vec<f64>,
    pub steps_taken: u64,
    pub step_size: f64,
}

impl PathState {
    pub fn new(position: Vec<f64>, step_size: f64) -> Self {
        Self {
            position,
            steps_taken: 0,
            step_size,
        }
    }

    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.step_size
    }
}

/// `n_step(t) = max{k : k * step <= t}`, tolerant to rounding in `t / step`.
pub fn grid_index(t: f64, step: f64) -> u64 {
    let q = t / step;
    (q + 1e-9 * q.max(1.0)).floor().max(0.0) as u64
}

/// Reusable stepping kernel holding the drift scratch buffer.
pub struct EulerScheme<'a> {
    model: &'a LangevinModel,
    drift: Vec<f64>,
    noise_scale: f64,
}

impl<'a> EulerScheme<'a> {
    pub fn new(model: &'a LangevinModel) -> Self {
        Self {
            model,
            drift: vec![0.0; model.dim()],
            noise_scale: model.noise_scale(),
        }
    }

    /// `x <- x + step * b(x) + noise_scale * dw`, where `dw` is a Brownian
    /// increment over the step. Returns false if the new position is not finite.
    #[inline]
    pub fn advance(&mut self, x: &mut [f64], step: f64, dw: &[f64]) -> bool {
        self.model.drift(x, &mut self.drift);
        let s = self.noise_scale;
        let mut acc = 0.0;
        for ((xi, bi), wi) in x.iter_mut().zip(&self.drift).zip(dw) {
            *xi += step * bi + s * wi;
            acc += *xi;
        }
        acc.is_finite()
    }
}

/// One Euler step driven by a standard normal vector `gaussian`.
pub fn euler_step(model: &LangevinModel, state: &mut PathState, gaussian: &[f64]) -> Result<()> {
    let d = model.dim();
    if state.position.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: state.position.len(),
        });
    }
    if gaussian.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: gaussian.len(),
        });
    }
    let root = state.step_size.sqrt();
    let dw: Vec<f64> = gaussian.iter().map(|g| root * g).collect();
    let mut scheme = EulerScheme::new(model);
    if !scheme.advance(&mut state.position, state.step_size, &dw) {
        return Err(Error::NonFinite {
            step: state.steps_taken,
            step_size: state.step_size,
        });
    }
    state.steps_taken += 1;
    Ok(())
}

/// Compensated running mean of vector samples.
///
/// Samples are summed relative to the first one (Neumaier summation per
/// component), so a constant sequence averages to itself exactly.
#[derive(Debug, Clone)]
pub(crate) struct WindowMean {
    shift: Vec<f64>,
    sum: Vec<f64>,
    comp: Vec<f64>,
    count: u64,
}

impl WindowMean {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
            count: 0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, values: &[f64]) {
        if self.count == 0 {
            self.shift.copy_from_slice(values);
        }
        for (((s, c), v), m) in self
            .sum
            .iter_mut()
            .zip(self.comp.iter_mut())
            .zip(values)
            .zip(&self.shift)
        {
            let y = v - m;
            let t = *s + y;
            if s.abs() >= y.abs() {
                *c += (*s - t) + y;
            } else {
                *c += (y - t) + *s;
            }
            *s = t;
        }
        self.count += 1;
    }

    pub(crate) fn mean(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.shift
            .iter()
            .zip(&self.sum)
            .zip(&self.comp)
            .map(|((m, s), c)| m + (s + c) / n)
            .collect()
    }
}

/// Average and Euler-step count of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub average: Vec<f64>,
    pub iterations: u64,
}

fn check_window(
    model: &LangevinModel,
    x0: &[f64],
    step: f64,
    tau: f64,
    horizon: f64,
) -> Result<(u64, u64)> {
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting point is not finite"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!(
            "step must be positive (got {step})"
        )));
    }
    if !(tau >= 0.0 && tau < horizon && horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 <= tau < horizon (tau = {tau}, horizon = {horizon})"
        )));
    }
    let start = grid_index(tau, step);
    let end = grid_index(horizon, step);
    if end <= start {
        return Err(Error::EmptyWindow {
            tau,
            horizon,
            step_size: step,
        });
    }
    Ok((start, end))
}

/// Level 0: one path with step `step` from `x0` over `[0, horizon]`, averaging
/// `f` at grid indices `n(tau) ..= n(horizon) - 1`.
pub fn run_level0(
    model: &LangevinModel,
    x0: &[f64],
    step: f64,
    tau: f64,
    horizon: f64,
    f: &dyn Observable,
    stream: &mut NoiseStream,
) -> Result<LevelResult> {
    let (start, end) = check_window(model, x0, step, tau, horizon)?;
    let d = model.dim();
    let mut scheme = EulerScheme::new(model);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut fx = vec![0.0; f.output_dim(d)];
    let mut mean = WindowMean::new(fx.len());
    let root = step.sqrt();

    for k in 0..end {
        if k >= start {
            f.eval(&x, &mut fx);
            mean.push(&fx);
        }
        stream.fill_standard_normal(&mut g);
        g.iter_mut().for_each(|v| *v *= root);
        if !scheme.advance(&mut x, step, &g) {
            return Err(Error::NonFinite {
                step: k,
                step_size: step,
            });
        }
    }
    Ok(LevelResult {
        average: mean.mean(),
        iterations: end,
    })
}

/// Correcting level: fine path with step `fine_step`, coarse path with step
/// `2 * fine_step`, same start and same Brownian path. Returns the average of
/// `f(fine) - f(coarse)` over coarse grid indices `n_c(tau) ..= n_c(horizon) - 1`.
pub fn run_coupled_level(
    model: &LangevinModel,
    x0: &[f64],
    fine_step: f64,
    tau: f64,
    horizon: f64,
    f: &dyn Observable,
    stream: &mut NoiseStream,
) -> Result<LevelResult> {
    let coarse_step = 2.0 * fine_step;
    let (start, end) = check_window(model, x0, coarse_step, tau, horizon)?;
    let fine_end = grid_index(horizon, fine_step);
    let d = model.dim();
    let mut fine_scheme = EulerScheme::new(model);
    let mut coarse_scheme = EulerScheme::new(model);
    let mut fine = x0.to_vec();
    let mut coarse = x0.to_vec();
    let mut dw1 = vec![0.0; d];
    let mut dw2 = vec![0.0; d];
    let out_dim = f.output_dim(d);
    let mut f_fine = vec![0.0; out_dim];
    let mut f_coarse = vec![0.0; out_dim];
    let mut mean = WindowMean::new(out_dim);
    let root = fine_step.sqrt();

    for k in 0..end {
        if k >= start {
            f.eval(&fine, &mut f_fine);
            f.eval(&coarse, &mut f_coarse);
            f_fine.iter_mut().zip(&f_coarse).for_each(|(a, b)| *a -= b);
            mean.push(&f_fine);
        }
        stream.fill_standard_normal(&mut dw1);
        stream.fill_standard_normal(&mut dw2);
        dw1.iter_mut().for_each(|v| *v *= root);
        dw2.iter_mut().for_each(|v| *v *= root);
        let ok = fine_scheme.advance(&mut fine, fine_step, &dw1)
            && fine_scheme.advance(&mut fine, fine_step, &dw2);
        if !ok {
            return Err(Error::NonFinite {
                step: 2 * k,
                step_size: fine_step,
            });
        }
        dw1.iter_mut().zip(&dw2).for_each(|(a, b)| *a += b);
        if !coarse_scheme.advance(&mut coarse, coarse_step, &dw1) {
            return Err(Error::NonFinite {
                step: k,
                step_size: coarse_step,
            });
        }
    }
    // The fine grid may hold one extra point before the horizon.
    for k in 2 * end..fine_end {
        stream.fill_standard_normal(&mut dw1);
        dw1.iter_mut().for_each(|v| *v *= root);
        if !fine_scheme.advance(&mut fine, fine_step, &dw1) {
            return Err(Error::NonFinite {
                step: k,
                step_size: fine_step,
            });
        }
    }
    Ok(LevelResult {
        average: mean.mean(),
        iterations: fine_end + end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_langevin_model, CustomPotential, Potential, QuadraticPotential, Sigma0Mode,
    };
    use crate::observable::{Constant, CoordinateSquare, Identity, Norm};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ou(d: usize) -> LangevinModel {
        make_langevin_model(
            Arc::new(QuadraticPotential::new(d).unwrap()),
            Sigma0Mode::Auto,
        )
        .unwrap()
    }

    /// Zero potential with zero noise scale is not expressible; use a tiny sigma0
    /// on a flat-gradient potential to check the identity step.
    fn zero_drift(d: usize) -> LangevinModel {
        let p = CustomPotential::new(d, |_| 0.0, |_, g| g.fill(0.0), 1.0, 1.0).unwrap();
        make_langevin_model(Arc::new(p), Sigma0Mode::Explicit(1.0)).unwrap()
    }

    #[test]
    fn drift_only_step() {
        let m = ou(4);
        let mut s = PathState::new(vec![1.0, 0.0, 0.0, 0.0], 0.5);
        euler_step(&m, &mut s, &[0.0; 4]).unwrap();
        assert_eq!(s.position, vec![0.5, 0.0, 0.0, 0.0]);
        assert_eq!(s.steps_taken, 1);
        assert_eq!(s.time(), 0.5);
    }

    #[test]
    fn zero_drift_zero_noise_is_identity() {
        let m = zero_drift(3);
        let mut s = PathState::new(vec![0.3, -1.0, 2.0], 0.1);
        euler_step(&m, &mut s, &[0.0; 3]).unwrap();
        assert_eq!(s.position, vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn noise_only_step_from_origin() {
        // sqrt(2) * sqrt(0.5) * g = g
        let m = ou(3);
        let g = [0.7, -1.3, 2.2];
        let mut s = PathState::new(vec![0.0; 3], 0.5);
        euler_step(&m, &mut s, &g).unwrap();
        for (a, b) in s.position.iter().zip(&g) {
            assert_relative_eq!(*a, *b, max_relative = 1e-15);
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let m = ou(2);
        let mut s = PathState::new(vec![0.0; 3], 0.5);
        assert!(matches!(
            euler_step(&m, &mut s, &[0.0; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut s = PathState::new(vec![f64::MAX, 0.0], 0.5);
        assert!(matches!(
            euler_step(&m, &mut s, &[f64::MAX, 0.0]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn unstable_step_reports_non_finite() {
        // gamma = 3 makes the OU recursion x <- -2x + noise blow up.
        let m = ou(2);
        let mut stream = NoiseStream::from_seed(1);
        let err = run_level0(&m, &[1.0, 1.0], 3.0, 0.0, 3.0e4, &Norm, &mut stream).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn grid_index_rule() {
        assert_eq!(grid_index(1000.0, 0.5), 2000);
        assert_eq!(grid_index(0.49, 0.5), 0);
        assert_eq!(grid_index(0.5, 0.5), 1);
        assert_eq!(grid_index(0.0, 0.5), 0);
        assert_eq!(grid_index(3.0 * 0.1, 0.1), 3);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for run in 0..20 {
            for level in 0..20 {
                assert!(seen.insert(derive_seed(42, run, level)));
            }
        }
        assert_ne!(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = NoiseStream::new(7, 3, 2);
        let mut b = NoiseStream::new(7, 3, 2);
        let mut c = NoiseStream::new(7, 3, 1);
        let (mut va, mut vb, mut vc) = (vec![0.0; 64], vec![0.0; 64], vec![0.0; 64]);
        a.fill_standard_normal(&mut va);
        b.fill_standard_normal(&mut vb);
        c.fill_standard_normal(&mut vc);
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn window_mean_constant_is_exact() {
        let mut m = WindowMean::new(1);
        for _ in 0..1001 {
            m.push(&[0.1]);
        }
        assert_eq!(m.mean(), vec![0.1]);
    }

    #[test]
    fn level0_constant_observable() {
        let m = ou(5);
        let mut stream = NoiseStream::new(3, 0, 0);
        let r = run_level0(&m, &[0.0; 5], 0.5, 2.0, 50.0, &Constant(2.5), &mut stream).unwrap();
        assert_eq!(r.average, vec![2.5]);
        assert_eq!(r.iterations, 100);
    }

    #[test]
    fn level0_single_term_window() {
        let m = ou(3);
        let x0 = [1.0, 2.0, 2.0];
        let mut stream = NoiseStream::new(3, 0, 0);
        let r = run_level0(&m, &x0, 0.5, 0.0, 0.5, &Norm, &mut stream).unwrap();
        assert_eq!(r.average, vec![3.0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn level0_rejects_empty_window() {
        let m = ou(2);
        let mut stream = NoiseStream::new(3, 0, 0);
        let err = run_level0(&m, &[0.0; 2], 0.5, 1.2, 1.4, &Norm, &mut stream).unwrap_err();
        assert!(matches!(err, Error::EmptyWindow { .. }));
        let err = run_level0(&m, &[0.0; 2], 0.5, 2.0, 1.0, &Norm, &mut stream).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn level0_ou_second_moment_matches_euler_fixed_point() {
        // Stationary variance of x <- (1 - g) x + sqrt(2 g) z solves v = (1 - g)^2 v + 2 g.
        let m = ou(1);
        let gamma = 0.5;
        let v = 2.0 * gamma / (1.0 - (1.0 - gamma) * (1.0 - gamma));
        let mut stream = NoiseStream::new(11, 0, 0);
        let r = run_level0(
            &m,
            &[0.0],
            gamma,
            50.0,
            50_000.0,
            &CoordinateSquare(0),
            &mut stream,
        )
        .unwrap();
        // AR(1) with phi = 1/2: Var(mean of x^2) ~ 2 v^2 (1 + phi^2) / (1 - phi^2) / N.
        let n = 100_000.0 - 100.0;
        let se = (2.0 * v * v * (1.25 / 0.75) / n).sqrt();
        assert!(
            (r.average[0] - v).abs() < 3.0 * se,
            "{} vs {v} (se {se})",
            r.average[0]
        );
    }

    #[test]
    fn coupled_level_constant_observable_is_zero() {
        let m = ou(4);
        let mut stream = NoiseStream::new(5, 0, 1);
        let r = run_coupled_level(&m, &[1.0; 4], 0.25, 1.0, 20.0, &Constant(-3.0), &mut stream)
            .unwrap();
        assert_eq!(r.average, vec![0.0]);
        assert_eq!(r.iterations, 80 + 40);
    }

    #[test]
    fn coupled_level_odd_fine_count() {
        // horizon 1.3 with fine step 0.25: n_f = 5, n_c = 2.
        let m = ou(2);
        let mut stream = NoiseStream::new(5, 0, 1);
        let r = run_coupled_level(&m, &[0.0; 2], 0.25, 0.0, 1.3, &Norm, &mut stream).unwrap();
        assert_eq!(r.iterations, 5 + 2);
    }

    /// With zero noise both schemes are deterministic: on OU, fine_k = (1 - h)^{2k} x0
    /// and coarse_k = (1 - 2h)^k x0.
    #[test]
    fn coupled_level_noiseless_closed_form() {
        let m = ou(3);
        let x0 = [1.0, -2.0, 0.5];
        let (h, tau, horizon) = (0.125, 1.0, 4.0);
        let start = grid_index(tau, 2.0 * h);
        let end = grid_index(horizon, 2.0 * h);
        let r0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect = (start..end)
            .map(|k| {
                let k = k as i32;
                r0 * ((1.0 - h).powi(2 * k) - (1.0 - 2.0 * h).powi(k))
            })
            .sum::<f64>()
            / (end - start) as f64;
        let mut stream = NoiseStream::zero();
        let r = run_coupled_level(&m, &x0, h, tau, horizon, &Norm, &mut stream).unwrap();
        assert_relative_eq!(r.average[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn shared_noise_contraction_is_exact_on_ou() {
        let m = ou(3);
        let gamma = 0.5;
        let mut x = PathState::new(vec![1.0, 0.0, 0.0], gamma);
        let mut y = PathState::new(vec![0.0, 0.0, 0.0], gamma);
        let mut stream = NoiseStream::new(1, 0, 0);
        let mut g = vec![0.0; 3];
        for n in 1..=16 {
            stream.fill_standard_normal(&mut g);
            euler_step(&m, &mut x, &g).unwrap();
            euler_step(&m, &mut y, &g).unwrap();
            let dist = x
                .position
                .iter()
                .zip(&y.position)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert_relative_eq!(dist, 0.5f64.powi(n), max_relative = 1e-10);
        }
    }

    #[test]
    fn vector_observable_has_state_dimension() {
        let m = ou(6);
        let mut stream = NoiseStream::new(5, 0, 0);
        let r = run_level0(&m, &[0.0; 6], 0.5, 0.0, 10.0, &Identity, &mut stream).unwrap();
        assert_eq!(r.average.len(), 6);
        let r = run_coupled_level(&m, &[0.0; 6], 0.25, 0.0, 10.0, &Identity, &mut stream).unwrap();
        assert_eq!(r.average.len(), 6);
    }

    #[test]
    fn potential_trait_object_is_shareable() {
        fn assert_sync<T: Sync + Send + ?Sized>() {}
        assert_sync::<dyn Potential>();
        assert_sync::<LangevinModel>();
    }
}
