//! Gaussian-process regression with a Matérn 5/2 ARD kernel.
//!
//! Outputs are standardized to zero mean and unit sample variance before
//! fitting; predictions are returned on the original scale. Kernel
//! hyperparameters are fitted by maximizing the log marginal likelihood with
//! multi-start Nelder-Mead over log-parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::Cholesky;
use crate::optimize::NelderMead;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("no observations to fit")]
    Empty,
    #[error("{inputs} inputs but {outputs} outputs")]
    CountMismatch { inputs: usize, outputs: usize },
    #[error("output {index} is not finite")]
    NonFiniteOutput { index: usize },
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(&'static str),
    #[error("kernel matrix is not positive definite even with maximal jitter")]
    NotPositiveDefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams<T> {
    pub lengthscales: Vec<T>,
    pub signal_variance: T,
    pub noise_variance: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(lengthscales: Vec<T>, signal_variance: T, noise_variance: T) -> Result<Self, GpError> {
        let params = Self { lengthscales, signal_variance, noise_variance };
        params.check()?;
        Ok(params)
    }

    pub fn isotropic(dim: usize, lengthscale: T, signal_variance: T, noise_variance: T) -> Result<Self, GpError> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    fn check(&self) -> Result<(), GpError> {
        if self.lengthscales.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return Err(GpError::InvalidKernel("lengthscales must be positive"));
        }
        if !(self.signal_variance > T::zero()) || !self.signal_variance.is_finite() {
            return Err(GpError::InvalidKernel("signal variance must be positive"));
        }
        if !(self.noise_variance >= T::zero()) || !self.noise_variance.is_finite() {
            return Err(GpError::InvalidKernel("noise variance must be non-negative"));
        }
        Ok(())
    }

    /// Matérn 5/2 covariance between two points.
    pub fn covariance(&self, a: &[T], b: &[T]) -> T {
        let r2 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (*x - *y) / *l;
                d * d
            })
            .fold(T::zero(), |acc, v| acc + v);
        self.signal_variance * matern52(r2)
    }
}

/// Unit-variance Matérn 5/2 correlation as a function of squared scaled distance.
fn matern52<T: Scalar>(r2: T) -> T {
    let sqrt5r = (T::of(5.0) * r2).sqrt();
    (T::one() + sqrt5r + T::of(5.0 / 3.0) * r2) * (-sqrt5r).exp()
}

/// Box for fitted log-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    pub log_lengthscale: (f64, f64),
    pub log_signal_variance: (f64, f64),
    pub log_noise_variance: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            log_lengthscale: (0.01f64.ln(), 10f64.ln()),
            log_signal_variance: (0.01f64.ln(), 100f64.ln()),
            log_noise_variance: (1e-8f64.ln(), 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub bounds: FitBounds,
    /// Holds noise at this value instead of fitting it.
    pub fixed_noise: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 8, max_iters: 200, bounds: FitBounds::default(), fixed_noise: None }
    }
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Standardizer<T> {
    shift: T,
    scale: T,
}

impl<T: Scalar> Standardizer<T> {
    fn from_outputs(outputs: &[T]) -> Self {
        let n = T::of(outputs.len() as f64);
        let shift = outputs.iter().fold(T::zero(), |a, &y| a + y) / n;
        let scale = if outputs.len() < 2 {
            T::one()
        } else {
            let ss = outputs.iter().fold(T::zero(), |a, &y| a + (y - shift) * (y - shift));
            let sd = (ss / (n - T::one())).sqrt();
            if sd > T::zero() && sd.is_finite() { sd } else { T::one() }
        };
        Self { shift, scale }
    }

    fn apply(&self, outputs: &[T]) -> Vec<T> {
        outputs.iter().map(|&y| (y - self.shift) / self.scale).collect()
    }
}

/// Pairwise per-dimension squared differences, reused across LML evaluations.
struct Distances<T> {
    n: usize,
    dim: usize,
    sq: Vec<T>,
}

impl<T: Scalar> Distances<T> {
    fn new(inputs: &[Vec<T>]) -> Self {
        let n = inputs.len();
        let dim = inputs.first().map_or(0, Vec::len);
        let mut sq = vec![T::zero(); n * n * dim];
        for i in 0..n {
            for j in 0..i {
                for d in 0..dim {
                    let diff = inputs[i][d] - inputs[j][d];
                    sq[(i * n + j) * dim + d] = diff * diff;
                }
            }
        }
        Self { n, dim, sq }
    }

    /// Kernel matrix without noise.
    fn kernel(&self, kernel: &KernelParams<T>) -> Vec<T> {
        let (n, dim) = (self.n, self.dim);
        let inv_l2: Vec<T> = kernel.lengthscales.iter().map(|l| T::one() / (*l * *l)).collect();
        let mut k = vec![T::zero(); n * n];
        for i in 0..n {
            k[i * n + i] = kernel.signal_variance;
            for j in 0..i {
                let base = (i * n + j) * dim;
                let r2 = (0..dim).fold(T::zero(), |acc, d| acc + self.sq[base + d] * inv_l2[d]);
                let v = kernel.signal_variance * matern52(r2);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

/// Factors `K + (noise + jitter) I`, escalating jitter tenfold on failure.
fn factor_with_jitter<T: Scalar>(k: &[T], n: usize, noise: T) -> Result<(Cholesky<T>, T), GpError> {
    let mean_diag = (0..n).fold(T::zero(), |a, i| a + k[i * n + i]) / T::of(n as f64);
    let mut rel = JITTER_START;
    loop {
        let jitter = T::of(rel) * mean_diag;
        let mut a = k.to_vec();
        for i in 0..n {
            a[i * n + i] = a[i * n + i] + noise + jitter;
        }
        if let Some(chol) = Cholesky::factor(&a, n) {
            return Ok((chol, jitter));
        }
        rel *= 10.0;
        if rel > JITTER_MAX * 1.000001 {
            return Err(GpError::NotPositiveDefinite);
        }
    }
}

fn lml_from_factor<T: Scalar>(chol: &Cholesky<T>, y: &[T]) -> T {
    let n = y.len();
    let alpha_half = chol.solve_lower(y);
    let quad = alpha_half.iter().fold(T::zero(), |a, &v| a + v * v);
    let half = T::of(0.5);
    -half * quad - half * chol.log_det() - half * T::of(n as f64) * T::of(std::f64::consts::TAU.ln())
}

fn quantize(v: f64) -> f64 {
    const STEP: f64 = 4_294_967_296.0;
    (v * STEP).round() / STEP
}

fn check_data<T: Scalar>(inputs: &[Vec<T>], outputs: &[T]) -> Result<usize, GpError> {
    if inputs.is_empty() {
        return Err(GpError::Empty);
    }
    if inputs.len() != outputs.len() {
        return Err(GpError::CountMismatch { inputs: inputs.len(), outputs: outputs.len() });
    }
    if let Some(index) = outputs.iter().position(|y| !y.is_finite()) {
        return Err(GpError::NonFiniteOutput { index });
    }
    let dim = inputs[0].len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != dim) {
        return Err(GpError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    Ok(dim)
}

/// Log marginal likelihood of the standardized outputs under `kernel`.
pub fn log_marginal_likelihood<T: Scalar>(
    inputs: &[Vec<T>],
    outputs: &[T],
    kernel: &KernelParams<T>,
) -> Result<T, GpError> {
    let dim = check_data(inputs, outputs)?;
    kernel.check()?;
    if kernel.lengthscales.len() != dim {
        return Err(GpError::DimensionMismatch { expected: dim, got: kernel.lengthscales.len() });
    }
    let y = Standardizer::from_outputs(outputs).apply(outputs);
    let n = inputs.len();
    let k = Distances::new(inputs).kernel(kernel);
    let (chol, _) = factor_with_jitter(&k, n, kernel.noise_variance)?;
    Ok(lml_from_factor(&chol, &y))
}

/// A fitted GP posterior.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    inputs: Vec<Vec<T>>,
    outputs: Vec<T>,
    kernel: KernelParams<T>,
    factor: Cholesky<T>,
    alpha: Vec<T>,
    jitter: T,
    standardizer: Standardizer<T>,
    log_marginal_likelihood: T,
}

impl<T: Scalar> GpModel<T> {
    /// Fits kernel hyperparameters with default options.
    pub fn fit(inputs: Vec<Vec<T>>, outputs: Vec<T>, seed: u64) -> Result<Self, GpError> {
        Self::fit_with(inputs, outputs, seed, &FitOptions::default())
    }

    pub fn fit_with(inputs: Vec<Vec<T>>, outputs: Vec<T>, seed: u64, options: &FitOptions) -> Result<Self, GpError> {
        let dim = check_data(&inputs, &outputs)?;
        let standardizer = Standardizer::from_outputs(&outputs);
        // Hyperparameters are fitted to standardized outputs rounded to 2^-32:
        // an affine change of the raw outputs perturbs the standardized values
        // only by round-off, and the rounding keeps the fitted kernel
        // bit-identical under it. The posterior itself uses unrounded data.
        let y: Vec<T> = standardizer.apply(&outputs).into_iter().map(|v| T::of(quantize(v.as_f64()))).collect();
        let n = inputs.len();
        let distances = Distances::new(&inputs);

        let b = options.bounds;
        let mut bounds = vec![b.log_lengthscale; dim];
        bounds.push(b.log_signal_variance);
        if options.fixed_noise.is_none() {
            bounds.push(b.log_noise_variance);
        }
        let to_kernel = |theta: &[f64]| -> KernelParams<T> {
            KernelParams {
                lengthscales: theta[..dim].iter().map(|v| T::of(v.exp())).collect(),
                signal_variance: T::of(theta[dim].exp()),
                noise_variance: T::of(options.fixed_noise.unwrap_or_else(|| theta[dim + 1].exp())),
            }
        };
        let objective = |theta: &[f64]| -> f64 {
            let kernel = to_kernel(theta);
            match factor_with_jitter(&distances.kernel(&kernel), n, kernel.noise_variance) {
                Ok((chol, _)) => lml_from_factor(&chol, &y).as_f64(),
                Err(_) => f64::NEG_INFINITY,
            }
        };

        let optimizer = NelderMead { max_iters: options.max_iters, ..NelderMead::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for restart in 0..options.restarts.max(1) {
            let start: Vec<f64> = if restart == 0 {
                let mut s = vec![0.5f64.ln().clamp(b.log_lengthscale.0, b.log_lengthscale.1); dim];
                s.push(0.0f64.clamp(b.log_signal_variance.0, b.log_signal_variance.1));
                if options.fixed_noise.is_none() {
                    s.push((1e-4f64).ln().clamp(b.log_noise_variance.0, b.log_noise_variance.1));
                }
                s
            } else {
                bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
            };
            let found = optimizer.maximize(objective, &start, &bounds);
            if best.as_ref().is_none_or(|(_, v)| found.value > *v) {
                best = Some((found.x, found.value));
            }
        }
        let (theta, value) = best.expect("at least one restart");
        if !value.is_finite() {
            return Err(GpError::NotPositiveDefinite);
        }
        Self::from_parts(inputs, outputs, to_kernel(&theta), standardizer)
    }

    /// Conditions on the data with fixed kernel parameters (no fitting).
    pub fn with_kernel(inputs: Vec<Vec<T>>, outputs: Vec<T>, kernel: KernelParams<T>) -> Result<Self, GpError> {
        let dim = check_data(&inputs, &outputs)?;
        kernel.check()?;
        if kernel.lengthscales.len() != dim {
            return Err(GpError::DimensionMismatch { expected: dim, got: kernel.lengthscales.len() });
        }
        let standardizer = Standardizer::from_outputs(&outputs);
        Self::from_parts(inputs, outputs, kernel, standardizer)
    }

    fn from_parts(
        inputs: Vec<Vec<T>>,
        outputs: Vec<T>,
        kernel: KernelParams<T>,
        standardizer: Standardizer<T>,
    ) -> Result<Self, GpError> {
        let n = inputs.len();
        let y = standardizer.apply(&outputs);
        let k = Distances::new(&inputs).kernel(&kernel);
        let (factor, jitter) = factor_with_jitter(&k, n, kernel.noise_variance)?;
        let alpha = factor.solve(&y);
        let log_marginal_likelihood = lml_from_factor(&factor, &y);
        Ok(Self { inputs, outputs, kernel, factor, alpha, jitter, standardizer, log_marginal_likelihood })
    }

    pub fn dim(&self) -> usize {
        self.kernel.lengthscales.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        &self.kernel
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn output_shift(&self) -> T {
        self.standardizer.shift
    }

    pub fn output_scale(&self) -> T {
        self.standardizer.scale
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// Log marginal likelihood of the standardized outputs at the fitted kernel.
    pub fn log_marginal_likelihood(&self) -> T {
        self.log_marginal_likelihood
    }

    /// Kernel matrix plus noise and jitter on the diagonal, i.e. what the factor reproduces.
    pub fn regularized_kernel_matrix(&self) -> Vec<T> {
        let n = self.len();
        let mut k = Distances::new(&self.inputs).kernel(&self.kernel);
        for i in 0..n {
            k[i * n + i] = k[i * n + i] + self.kernel.noise_variance + self.jitter;
        }
        k
    }

    /// Posterior mean and standard deviation of the latent function at `x`,
    /// on the original output scale.
    pub fn predict(&self, x: &[T]) -> Result<(T, T), GpError> {
        if x.len() != self.dim() {
            return Err(GpError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let k_star: Vec<T> = self.inputs.iter().map(|xi| self.kernel.covariance(xi, x)).collect();
        let mean = k_star.iter().zip(&self.alpha).fold(T::zero(), |a, (k, w)| a + *k * *w);
        let v = self.factor.solve_lower(&k_star);
        let var = self.kernel.signal_variance - v.iter().fold(T::zero(), |a, &e| a + e * e);
        let std = var.max(T::zero()).sqrt();
        let s = self.standardizer;
        Ok((mean * s.scale + s.shift, std * s.scale))
    }
}
