//! Objective functions, evaluation counting and measurement noise.
//!
//! Every optimizer-facing evaluation goes through [`Cost::eval`], which
//! increments the evaluation counter and, for noisy objectives, draws a fresh
//! Gaussian perturbation. [`Cost::peek`] is the noise-free, uncounted view used
//! by the verification oracles and for reporting `J(x_k)` in trajectories.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{NcmapError, Result};

/// Identifier of the pseudo-random stream used for measurement noise.
/// Recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9+ziggurat-normal/rand_distr-0.5";

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A scalar cost `J: R^n -> R` as seen by the optimizers.
pub trait Cost {
    fn dim(&self) -> usize;

    /// Counted evaluation. May be noisy.
    fn eval(&mut self, x: &[f64]) -> f64;

    /// Noise-free evaluation that does not touch the counter.
    fn peek(&self, x: &[f64]) -> f64;

    /// Analytic gradient, when the problem provides one. Never used by the
    /// derivative-free algorithms.
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;

    fn eval_count(&self) -> u64;

    fn reset_count(&mut self);
}

/// Deterministic objective with an evaluation counter.
#[derive(Clone)]
pub struct Objective {
    label: String,
    dim: usize,
    value: ScalarFn,
    grad: Option<VectorFn>,
    minimizer: Option<Vec<f64>>,
    evals: u64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("has_gradient", &self.grad.is_some())
            .field("minimizer", &self.minimizer)
            .field("evals", &self.evals)
            .finish()
    }
}

impl Objective {
    pub fn new<F>(label: impl Into<String>, dim: usize, value: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(NcmapError::InvalidDimension { expected: 1, got: 0 });
        }
        Ok(Self {
            label: label.into(),
            dim,
            value: Arc::new(value),
            grad: None,
            minimizer: None,
            evals: 0,
        })
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    /// Attach the known global minimizer (benchmark metadata only).
    pub fn with_minimizer(mut self, x_star: Vec<f64>) -> Self {
        self.minimizer = Some(x_star);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The unique global minimizer, if the problem has one.
    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }
}

impl Cost for Objective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.evals += 1;
        (self.value)(x)
    }

    fn peek(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(x))
    }

    fn eval_count(&self) -> u64 {
        self.evals
    }

    fn reset_count(&mut self) {
        self.evals = 0;
    }
}

/// `J(x) = sum_i (x_i - center_i)^2 + offset`.
pub fn make_quadratic(center: &[f64], offset: f64) -> Result<Objective> {
    make_scaled_quadratic(center, 1.0, offset)
}

/// `J(x) = curvature * sum_i (x_i - center_i)^2 + offset`, curvature > 0.
pub fn make_scaled_quadratic(center: &[f64], curvature: f64, offset: f64) -> Result<Objective> {
    if center.is_empty() {
        return Err(NcmapError::InvalidDimension { expected: 1, got: 0 });
    }
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(NcmapError::param(format!("curvature must be positive, got {curvature}")));
    }
    if !offset.is_finite() {
        return Err(NcmapError::param("offset must be finite"));
    }
    let c = center.to_vec();
    let cg = c.clone();
    let obj = Objective::new("quadratic", c.len(), move |x| {
        curvature * x.iter().zip(&c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum::<f64>() + offset
    })?
    .with_gradient(move |x| x.iter().zip(&cg).map(|(xi, ci)| 2.0 * curvature * (xi - ci)).collect())
    .with_minimizer(center.to_vec());
    Ok(obj)
}

/// `J(x) = value` everywhere. Every point is a minimizer, so none is recorded.
pub fn make_constant(dim: usize, value: f64) -> Result<Objective> {
    Ok(Objective::new("constant", dim, move |_| value)?.with_gradient(move |_| vec![0.0; dim]))
}

/// Separable double well `J(x) = sum_i (x_i^2 - 1)^2`.
///
/// Non-convex with 2^n global minimizers, so it violates the unique-minimizer
/// assumption behind the convergence guarantees. For exploratory runs only;
/// no minimizer is attached.
pub fn make_two_well(dim: usize) -> Result<Objective> {
    Ok(Objective::new("two_well", dim, |x| {
        x.iter().map(|xi| (xi * xi - 1.0).powi(2)).sum()
    })?
    .with_gradient(|x| x.iter().map(|xi| 4.0 * xi * (xi * xi - 1.0)).collect()))
}

/// Objective whose counted evaluations return `J(x) + sigma * z`, with `z`
/// standard normal drawn from a seeded ChaCha20 stream. One draw per call.
#[derive(Debug, Clone)]
pub struct NoisyObjective {
    base: Objective,
    sigma: f64,
    seed: u64,
    rng: ChaCha20Rng,
}

pub fn with_noise(base: Objective, sigma: f64, seed: u64) -> Result<NoisyObjective> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(NcmapError::param(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Ok(NoisyObjective {
        base,
        sigma,
        seed,
        rng: ChaCha20Rng::seed_from_u64(seed),
    })
}

impl NoisyObjective {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base(&self) -> &Objective {
        &self.base
    }
}

impl Cost for NoisyObjective {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = self.base.eval(x);
        if self.sigma == 0.0 {
            return v;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        v + self.sigma * z
    }

    fn peek(&self, x: &[f64]) -> f64 {
        self.base.peek(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.base.gradient(x)
    }

    fn eval_count(&self) -> u64 {
        self.base.eval_count()
    }

    fn reset_count(&mut self) {
        self.base.reset_count();
    }
}
