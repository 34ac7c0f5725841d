//! Gaussian-process regression with a squared-exponential ("exponential")
//! kernel and an optional prior mean function.
//!
//! The model is fitted once from a [`TrainingSet`]; the covariance matrix
//! `K + σ²_noise I` is Cholesky-factorized and both the residual weights and
//! the factor are cached, so a prediction costs one kernel vector plus one
//! triangular solve.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default length-scale of the kernel.
pub const DEFAULT_BETA: f64 = 0.15;
/// Default observation noise variance, in squared performance units.
pub const DEFAULT_NOISE_VAR: f64 = 1e-2;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Prior mean `x ↦ μ_p(x)` added under the GP.
pub type PriorMean = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub beta: f64,
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            noise_var: DEFAULT_NOISE_VAR,
        }
    }
}

impl KernelParams {
    pub fn new(beta: f64, noise_var: f64) -> Result<Self> {
        let params = Self { beta, noise_var };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be > 0, got {}", self.beta)));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::param(
                "noise_var",
                format!("must be >= 0, got {}", self.noise_var),
            ));
        }
        Ok(())
    }

    /// Kernel value from a squared distance. Subnormal results are flushed
    /// to zero.
    #[inline]
    pub fn from_sq_dist(&self, sq_dist: f64) -> f64 {
        let k = (-sq_dist / (self.beta * self.beta)).exp();
        if k < f64::MIN_POSITIVE {
            0.0
        } else {
            k
        }
    }
}

/// `k(x1, x2) = exp(-‖x1 - x2‖² / β²)`.
pub fn kernel(x1: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            got: x2.len(),
        });
    }
    Ok(params.from_sq_dist(sq_dist(x1, x2)))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Evaluated inputs `χ_{1:t}` and their performances `P_{1:t}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl TrainingSet {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidTrainingSet(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        let mut set = Self::default();
        for (p, v) in points.into_iter().zip(values) {
            set.push(p, v)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.len() != point.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: point.len(),
                });
            }
        }
        if point.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidTrainingSet(format!(
                "point {point:?} leaves the unit cube"
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidTrainingSet(format!("non-finite value {value}")));
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Input dimension, if known.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }
}

/// Predictive mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A fitted, immutable Gaussian process.
#[derive(Clone)]
pub struct GpModel {
    training: TrainingSet,
    kernel: KernelParams,
    prior: Option<PriorMean>,
    /// Lower Cholesky factor of `K + (σ² + jitter) I`, row-major.
    chol: Vec<f64>,
    /// `K⁻¹ (P - μ_p(χ))`.
    alpha: Vec<f64>,
    jitter: f64,
}

impl fmt::Debug for GpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GpModel")
            .field("n", &self.training.len())
            .field("kernel", &self.kernel)
            .field("has_prior", &self.prior.is_some())
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl GpModel {
    /// Fits the GP. Deterministic for identical inputs.
    pub fn fit(training: TrainingSet, kernel: KernelParams, prior: Option<PriorMean>) -> Result<Self> {
        kernel.validate()?;
        let n = training.len();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = kernel.from_sq_dist(sq_dist(&training.points[i], &training.points[j]));
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
            gram[(i, i)] += kernel.noise_var;
        }

        let mut jitter = 0.0;
        let factor = loop {
            let mut attempt = gram.clone();
            for i in 0..n {
                attempt[(i, i)] += jitter;
            }
            if let Some(chol) = attempt.cholesky() {
                break chol;
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_MAX * 1.000_001 {
                let min_diag = (0..n).map(|i| gram[(i, i)]).fold(f64::INFINITY, f64::min);
                return Err(Error::Factorization {
                    n,
                    max_jitter: JITTER_MAX,
                    min_diag,
                    noise_var: kernel.noise_var,
                });
            }
        };

        let residuals = DVector::from_iterator(
            n,
            training
                .points
                .iter()
                .zip(&training.values)
                .map(|(p, v)| v - prior.as_ref().map_or(0.0, |m| m(p))),
        );
        let alpha = factor.solve(&residuals);
        let l = factor.l();
        let mut chol = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                chol[i * n + j] = l[(i, j)];
            }
        }

        Ok(Self {
            training,
            kernel,
            prior,
            chol,
            alpha: alpha.iter().copied().collect(),
            jitter,
        })
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn prior(&self) -> Option<&PriorMean> {
        self.prior.as_ref()
    }

    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior_mean_at(&self, x: &[f64]) -> f64 {
        self.prior.as_ref().map_or(0.0, |m| m(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if let Some(d) = self.training.dim() {
            if d != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        let mut scratch = Vec::with_capacity(self.training.len());
        Ok(self.predict_with(x, &mut scratch))
    }

    /// Prediction reusing `scratch` for the kernel vector. The caller
    /// guarantees the dimension matches.
    pub fn predict_with(&self, x: &[f64], scratch: &mut Vec<f64>) -> Prediction {
        self.predict_with_prior(x, self.prior_mean_at(x), scratch)
    }

    /// Same as [`predict_with`](Self::predict_with) with `μ_p(x)` supplied by
    /// the caller (useful when the prior is tabulated on a lattice).
    pub fn predict_with_prior(&self, x: &[f64], prior_at_x: f64, scratch: &mut Vec<f64>) -> Prediction {
        let n = self.training.len();
        scratch.clear();
        scratch.extend(
            self.training
                .points
                .iter()
                .map(|p| self.kernel.from_sq_dist(sq_dist(x, p))),
        );
        let mean = prior_at_x + scratch.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();

        // Forward substitution L v = k in place; kᵀK⁻¹k = ‖v‖².
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let mut s = scratch[i];
            for (l, v) in row.iter().zip(&scratch[..i]) {
                s -= l * v;
            }
            let v = s / self.chol[i * n + i];
            scratch[i] = v;
            quad += v * v;
        }
        let variance = (1.0 + self.kernel.noise_var - quad).max(0.0);
        Prediction { mean, variance }
    }

    /// Predictions at many inputs, evaluated in parallel.
    pub fn predict_many(&self, xs: &[[f64; 3]]) -> Vec<Prediction> {
        xs.par_iter()
            .map_init(Vec::new, |scratch, x| self.predict_with(x, scratch))
            .collect()
    }
}
