//! Bayesian optimization with an upper-confidence-bound acquisition,
//! together with the prior-free and random-search baselines.

use std::fmt::Display;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelParams, PriorMean, TrainingSet};
use crate::tasks::Policy;

pub const DEFAULT_KAPPA: f64 = 0.2;
pub const DEFAULT_GRID_PER_DIM: usize = 51;
pub const DEFAULT_BUDGET: usize = 30;
/// Random initial trials used by prior-free optimization.
pub const DEFAULT_INIT_RANDOM: usize = 10;
/// Prior value at the eight full-speed corners.
pub const CORNER_PRIOR: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionParams {
    pub kappa: f64,
    pub grid_per_dim: usize,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            grid_per_dim: DEFAULT_GRID_PER_DIM,
        }
    }
}

impl AcquisitionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        if self.grid_per_dim < 2 {
            return Err(Error::param(
                "grid_per_dim",
                format!("must be >= 2, got {}", self.grid_per_dim),
            ));
        }
        Ok(())
    }
}

/// Uniform candidate lattice over `[0,1]³`, stored in lexicographic order of
/// χ so the first maximum found is the lexicographically smallest.
#[derive(Debug, Clone)]
pub struct Lattice {
    per_dim: usize,
    points: Vec<[f64; 3]>,
}

impl Lattice {
    pub fn new(per_dim: usize) -> Self {
        assert!(per_dim >= 2, "lattice needs at least two points per axis");
        let step = |i: usize| i as f64 / (per_dim - 1) as f64;
        let mut points = Vec::with_capacity(per_dim.pow(3));
        for i in 0..per_dim {
            for j in 0..per_dim {
                for k in 0..per_dim {
                    points.push([step(i), step(j), step(k)]);
                }
            }
        }
        Self { per_dim, points }
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }
}

/// The hand-crafted prior: a noise-free GP through anchor points whose
/// variance is discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub anchor_points: Vec<[f64; 3]>,
    pub anchor_values: Vec<f64>,
    pub kernel: KernelParams,
}

impl PriorSpec {
    /// Eight full-speed corners at `0.3 · scale`, stopped motors at 0.
    pub fn corners_and_center(scale: f64) -> Self {
        let mut anchor_points = Vec::with_capacity(9);
        let mut anchor_values = Vec::with_capacity(9);
        for v1 in [-1.0, 1.0] {
            for v2 in [-1.0, 1.0] {
                for v3 in [-1.0, 1.0] {
                    anchor_points.push(Policy::from_commands([v1, v2, v3]).chi());
                    anchor_values.push(CORNER_PRIOR * scale);
                }
            }
        }
        anchor_points.push(Policy::from_commands([0.0, 0.0, 0.0]).chi());
        anchor_values.push(0.0);
        Self {
            anchor_points,
            anchor_values,
            kernel: KernelParams {
                beta: crate::gp::DEFAULT_BETA,
                noise_var: 0.0,
            },
        }
    }

    /// Fits the anchor GP once and returns it as a mean function.
    pub fn mean_fn(&self) -> Result<PriorMean> {
        let set = TrainingSet::new(
            self.anchor_points.iter().map(|p| p.to_vec()).collect(),
            self.anchor_values.clone(),
        )?;
        let gp = GpModel::fit(set, self.kernel, None)?;
        Ok(Arc::new(move |x: &[f64]| {
            let mut scratch = Vec::with_capacity(9);
            gp.predict_with(x, &mut scratch).mean
        }))
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::corners_and_center(1.0)
    }
}

/// One-off evaluation of the prior mean at `x`.
pub fn prior_mean(spec: &PriorSpec, x: &[f64; 3]) -> Result<f64> {
    Ok(spec.mean_fn()?(x))
}

/// `argmax_x μ(x) + κ σ(x)` over a fresh `grid_per_dim³` lattice.
pub fn ucb_select(model: &GpModel, params: &AcquisitionParams) -> Result<Policy> {
    params.validate()?;
    Ok(ucb_select_on(model, params.kappa, &Lattice::new(params.grid_per_dim)))
}

/// UCB argmax over a prebuilt lattice. Ties go to the lexicographically
/// smallest χ.
pub fn ucb_select_on(model: &GpModel, kappa: f64, lattice: &Lattice) -> Policy {
    let best = lattice
        .points()
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |scratch, (i, x)| {
            let p = model.predict_with(x, scratch);
            (p.mean + kappa * p.std_dev(), i)
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .map(|(_, i)| i)
        .unwrap_or(0);
    Policy::new(lattice.points()[best]).expect("lattice points lie in the unit cube")
}

/// What the optimizer learns from one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub performance: f64,
    pub aborted: bool,
}

impl From<f64> for Outcome {
    fn from(performance: f64) -> Self {
        Self {
            performance,
            aborted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub policy: Policy,
    pub performance: f64,
    pub best_so_far: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub trials: Vec<Trial>,
    pub budget: usize,
    pub rng_seed: u64,
}

impl OptimizationTrace {
    fn new(budget: usize, rng_seed: u64) -> Self {
        Self {
            trials: Vec::with_capacity(budget),
            budget,
            rng_seed,
        }
    }

    fn record(&mut self, policy: Policy, outcome: Outcome) {
        let best_so_far = self.best().map_or(outcome.performance, |b| b.max(outcome.performance));
        self.trials.push(Trial {
            policy,
            performance: outcome.performance,
            best_so_far,
            aborted: outcome.aborted,
        });
    }

    pub fn best(&self) -> Option<f64> {
        self.trials.last().map(|t| t.best_so_far)
    }

    /// The trial holding the best performance (earliest on ties).
    pub fn best_trial(&self) -> Option<&Trial> {
        self.trials.iter().fold(None, |acc: Option<&Trial>, t| match acc {
            Some(a) if a.performance >= t.performance => Some(a),
            _ => Some(t),
        })
    }
}

/// An evaluator failed; the trials completed before the failure are kept.
#[derive(Debug, thiserror::Error)]
#[error("{error} (after {} completed trials)", trace.trials.len())]
pub struct Aborted {
    pub trace: OptimizationTrace,
    #[source]
    pub error: Error,
}

/// Constant mean used when no [`PriorSpec`] is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantMean {
    Zero,
    /// Average of the observations made so far.
    #[default]
    ObservedAverage,
}

#[derive(Debug, Clone)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init_random: usize,
    pub kernel: KernelParams,
    pub acquisition: AcquisitionParams,
    pub prior: Option<PriorSpec>,
    pub constant_mean: ConstantMean,
}

impl BoConfig {
    /// Prior-guided optimization: no random initialization.
    pub fn with_prior(prior: PriorSpec) -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            n_init_random: 0,
            kernel: KernelParams::default(),
            acquisition: AcquisitionParams::default(),
            prior: Some(prior),
            constant_mean: ConstantMean::default(),
        }
    }

    /// Zero-mean optimization seeded with random trials.
    pub fn without_prior() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            n_init_random: DEFAULT_INIT_RANDOM,
            kernel: KernelParams::default(),
            acquisition: AcquisitionParams::default(),
            prior: None,
            constant_mean: ConstantMean::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.acquisition.validate()?;
        if self.n_init_random > self.budget {
            return Err(Error::param(
                "n_init_random",
                format!("{} exceeds the budget {}", self.n_init_random, self.budget),
            ));
        }
        if self.prior.is_some() && self.n_init_random != 0 {
            return Err(Error::param(
                "n_init_random",
                "prior-guided optimization starts without random trials",
            ));
        }
        Ok(())
    }
}

fn random_policy(rng: &mut ChaCha8Rng) -> Policy {
    Policy::random(rng)
}

fn constant_mean(mode: ConstantMean, data: &TrainingSet) -> Option<PriorMean> {
    match mode {
        ConstantMean::Zero => None,
        ConstantMean::ObservedAverage if data.is_empty() => None,
        ConstantMean::ObservedAverage => {
            let avg = data.values().iter().sum::<f64>() / data.len() as f64;
            Some(Arc::new(move |_: &[f64]| avg))
        }
    }
}

fn call<F, O, E>(evaluator: &mut F, policy: &Policy, trial: usize) -> Result<Outcome>
where
    F: FnMut(&Policy) -> std::result::Result<O, E>,
    O: Into<Outcome>,
    E: Display,
{
    evaluator(policy).map(Into::into).map_err(|e| Error::Evaluator {
        trial,
        message: e.to_string(),
    })
}

/// Runs `n_init_random` uniform trials, then UCB-selected trials, refitting
/// the GP after every evaluation.
pub fn run_bo<F, O, E>(mut evaluator: F, config: &BoConfig, rng_seed: u64) -> Result<OptimizationTrace, Aborted>
where
    F: FnMut(&Policy) -> std::result::Result<O, E>,
    O: Into<Outcome>,
    E: Display,
{
    let mut trace = OptimizationTrace::new(config.budget, rng_seed);
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(Aborted { trace, error }),
            }
        };
    }
    bail!(config.validate());

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let prior = match &config.prior {
        Some(spec) => Some(bail!(spec.mean_fn())),
        None => None,
    };
    let lattice = Lattice::new(config.acquisition.grid_per_dim);
    let mut data = TrainingSet::default();

    for t in 0..config.budget {
        let policy = if t < config.n_init_random {
            random_policy(&mut rng)
        } else {
            let mean = prior.clone().or_else(|| constant_mean(config.constant_mean, &data));
            let model = bail!(GpModel::fit(data.clone(), config.kernel, mean));
            ucb_select_on(&model, config.acquisition.kappa, &lattice)
        };
        let outcome = bail!(call(&mut evaluator, &policy, t));
        bail!(data.push(policy.chi().to_vec(), outcome.performance));
        trace.record(policy, outcome);
    }
    Ok(trace)
}

/// `budget` i.i.d. uniform policies.
pub fn run_random_search<F, O, E>(mut evaluator: F, budget: usize, rng_seed: u64) -> Result<OptimizationTrace, Aborted>
where
    F: FnMut(&Policy) -> std::result::Result<O, E>,
    O: Into<Outcome>,
    E: Display,
{
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut trace = OptimizationTrace::new(budget, rng_seed);
    for t in 0..budget {
        let policy = random_policy(&mut rng);
        match call(&mut evaluator, &policy, t) {
            Ok(outcome) => trace.record(policy, outcome),
            Err(error) => return Err(Aborted { trace, error }),
        }
    }
    Ok(trace)
}
