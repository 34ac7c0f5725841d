//! Experiment orchestration: replicated optimization runs, result files and
//! the statistics used to compare treatments.
//!
//! Replicate `r` of an experiment uses seed `base_seed + r`, both for the
//! optimizer and (through [`episode_seed`]) for the rotor phases of every
//! trial, so treatments sharing a base seed are paired.

mod stats;

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::bo::{self, AcquisitionParams, BoConfig, ConstantMean, OptimizationTrace, PriorSpec, Trial};
use crate::error::{Error, Result};
use crate::gp::KernelParams;
use crate::sim::{SimParams, Variant};
use crate::tasks::{EpisodeOptions, EpisodeResult, Policy, Robot};

pub use stats::{
    mann_whitney_u, mann_whitney_u_with, pairwise_tests, percentile, star_code, MannWhitney, PValueMethod,
    PairwiseTest, StatsSummary, EXACT_LIMIT,
};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "TENSEGRITY_OUT_DIR";

/// Header of every result file.
pub const RESULT_COLUMNS: [&str; 8] = [
    "replicate",
    "trial",
    "chi1",
    "chi2",
    "chi3",
    "performance",
    "best_so_far",
    "aborted",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    BoPrior,
    BoNoprior,
    Random,
}

impl Treatment {
    pub const ALL: [Treatment; 3] = [Treatment::BoPrior, Treatment::BoNoprior, Treatment::Random];

    pub fn name(self) -> &'static str {
        match self {
            Treatment::BoPrior => "bo_prior",
            Treatment::BoNoprior => "bo_noprior",
            Treatment::Random => "random",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Treatment::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            Error::param(
                "treatment",
                format!("expected bo_prior, bo_noprior or random, got `{s}`"),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Intact,
    Damaged,
    Rigid,
}

/// Optimizer settings shared by the two BO treatments.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub kernel: KernelParams,
    pub acquisition: AcquisitionParams,
    /// Mean of the prior-free GP.
    pub constant_mean: ConstantMean,
    /// Multiplies the corner values of the prior.
    pub prior_scale: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            acquisition: AcquisitionParams::default(),
            constant_mean: ConstantMean::default(),
            prior_scale: 1.0,
        }
    }
}

/// One treatment on one robot variant, replicated.
///
/// ```toml
/// variant = "damaged"
/// damaged_spring = 0
/// treatment = "bo_prior"
/// replicates = 20
/// budget = 30
/// base_seed = 0
/// output_dir = "results"
///
/// [sim]
/// motor_eccentricity = 1e-6
///
/// [optimizer]
/// prior_scale = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub variant: VariantKind,
    /// Index of the removed spring when `variant = "damaged"`.
    pub damaged_spring: usize,
    pub treatment: Treatment,
    pub replicates: usize,
    pub budget: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub sim: SimParams,
    pub episode: EpisodeOptions,
    pub optimizer: OptimizerSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: VariantKind::Intact,
            damaged_spring: 0,
            treatment: Treatment::BoPrior,
            replicates: 20,
            budget: bo::DEFAULT_BUDGET,
            base_seed: 0,
            output_dir: PathBuf::from("results"),
            sim: SimParams::default(),
            episode: EpisodeOptions::default(),
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn variant(&self) -> Variant {
        match self.variant {
            VariantKind::Intact => Variant::Intact,
            VariantKind::Damaged => Variant::Damaged(self.damaged_spring),
            VariantKind::Rigid => Variant::Rigid,
        }
    }

    /// File stem of this experiment's outputs, e.g. `damaged0_bo_prior`.
    pub fn label(&self) -> String {
        match self.variant() {
            Variant::Damaged(i) => format!("damaged{i}_{}", self.treatment),
            v => format!("{}_{}", v.name(), self.treatment),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::param("replicates", "must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::param("budget", "must be >= 1"));
        }
        if self.treatment == Treatment::BoNoprior && self.budget < bo::DEFAULT_INIT_RANDOM {
            return Err(Error::param(
                "budget",
                format!("bo_noprior needs at least {} trials", bo::DEFAULT_INIT_RANDOM),
            ));
        }
        if !(self.optimizer.prior_scale.is_finite()) {
            return Err(Error::param("prior_scale", "must be finite"));
        }
        self.sim.validate()?;
        self.episode.validate()?;
        self.bo_config().validate()
    }

    /// Optimizer configuration; prior-free runs start with
    /// [`bo::DEFAULT_INIT_RANDOM`] random trials.
    pub fn bo_config(&self) -> BoConfig {
        let settings = &self.optimizer;
        let mut config = match self.treatment {
            Treatment::BoNoprior => BoConfig::without_prior(),
            _ => {
                let mut prior = PriorSpec::corners_and_center(settings.prior_scale);
                prior.kernel.beta = settings.kernel.beta;
                BoConfig::with_prior(prior)
            }
        };
        config.budget = self.budget;
        config.kernel = settings.kernel;
        config.acquisition = settings.acquisition;
        config.constant_mean = settings.constant_mean;
        config
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.base_seed.wrapping_add(replicate as u64)
    }
}

/// Seed of the rotor phases for one trial of a replicate.
pub fn episode_seed(replicate_seed: u64, trial: usize) -> u64 {
    replicate_seed.wrapping_mul(1_000_003).wrapping_add(trial as u64)
}

/// Every evaluation made during an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub replicate: usize,
    pub trial: usize,
    pub policy: Policy,
    pub performance: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    /// Trials completed, including those before a failure.
    pub trace: OptimizationTrace,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateOutcome>,
}

impl ExperimentResult {
    pub fn failed(&self) -> impl Iterator<Item = &ReplicateOutcome> {
        self.replicates.iter().filter(|r| r.error.is_some())
    }

    /// Best performance of every replicate that finished its budget.
    pub fn final_performances(&self) -> Vec<f64> {
        self.replicates
            .iter()
            .filter(|r| r.error.is_none())
            .filter_map(|r| r.trace.best())
            .collect()
    }

    pub fn summary(&self) -> Result<StatsSummary> {
        StatsSummary::from_samples(&self.final_performances())
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.replicates
            .iter()
            .flat_map(|r| {
                r.trace.trials.iter().enumerate().map(move |(t, trial)| Observation {
                    replicate: r.replicate,
                    trial: t,
                    policy: trial.policy,
                    performance: trial.performance,
                    aborted: trial.aborted,
                })
            })
            .collect()
    }

    /// Per-trial best-so-far, one row per replicate.
    pub fn best_so_far_curves(&self) -> Vec<Vec<f64>> {
        self.replicates
            .iter()
            .map(|r| r.trace.trials.iter().map(|t| t.best_so_far).collect())
            .collect()
    }
}

/// Runs every replicate of `config`. A failing replicate is recorded in
/// [`ReplicateOutcome::error`]; the others still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let robot = Robot::build(config.variant(), &config.sim)?;
    run_experiment_on(&robot, config)
}

/// As [`run_experiment`] on an already relaxed robot; `config.variant` and
/// `config.sim` are ignored.
pub fn run_experiment_on(robot: &Robot, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let bo_config = config.bo_config();
    let replicates = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = config.replicate_seed(r);
            let mut trial = 0;
            let evaluator = |policy: &Policy| {
                let result = robot.evaluate_with(policy, episode_seed(seed, trial), &config.episode);
                trial += 1;
                result
            };
            let outcome = match config.treatment {
                Treatment::Random => bo::run_random_search(evaluator, config.budget, seed),
                _ => bo::run_bo(evaluator, &bo_config, seed),
            };
            let (trace, error) = match outcome {
                Ok(trace) => (trace, None),
                Err(aborted) => (aborted.trace, Some(aborted.error.to_string())),
            };
            ReplicateOutcome {
                replicate: r,
                seed,
                trace,
                error,
            }
        })
        .collect();
    Ok(ExperimentResult {
        config: config.clone(),
        replicates,
    })
}

/// Evaluates one gait on two variants with the same seed.
pub fn cross_test(
    gait: &Policy,
    from: Variant,
    to: Variant,
    params: &SimParams,
    seed: u64,
) -> Result<(EpisodeResult, EpisodeResult)> {
    let a = Robot::build(from, params)?;
    let b = if to == from {
        a.clone()
    } else {
        Robot::build(to, params)?
    };
    cross_test_on(gait, &a, &b, seed, &EpisodeOptions::default())
}

pub fn cross_test_on(
    gait: &Policy,
    from: &Robot,
    to: &Robot,
    seed: u64,
    options: &EpisodeOptions,
) -> Result<(EpisodeResult, EpisodeResult)> {
    Ok((
        from.evaluate_with(gait, seed, options)?,
        to.evaluate_with(gait, seed, options)?,
    ))
}

/// One row of a result file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub replicate: usize,
    pub trial: usize,
    pub chi: [f64; 3],
    pub performance: f64,
    pub best_so_far: f64,
    pub aborted: bool,
}

impl ResultRow {
    fn from_trial(replicate: usize, trial: usize, t: &Trial) -> Self {
        Self {
            replicate,
            trial,
            chi: t.policy.chi(),
            performance: t.performance,
            best_so_far: t.best_so_far,
            aborted: t.aborted,
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        Policy::new(self.chi)
    }
}

impl ExperimentResult {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.replicates
            .iter()
            .flat_map(|r| {
                r.trace
                    .trials
                    .iter()
                    .enumerate()
                    .map(move |(t, trial)| ResultRow::from_trial(r.replicate, t, trial))
            })
            .collect()
    }
}

/// Writes the result table. Numbers use Rust's shortest round-trip
/// formatting, so identical runs give identical bytes.
pub fn write_results<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", RESULT_COLUMNS.join(","))?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.replicate, r.trial, r.chi[0], r.chi[1], r.chi[2], r.performance, r.best_so_far, r.aborted as u8
        )?;
    }
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_results(BufReader::new(file), path)
}

fn parse_results<R: BufRead>(reader: R, path: &Path) -> Result<Vec<ResultRow>> {
    let bad = |line: usize, reason: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header.trim_end() == RESULT_COLUMNS.join(",") => {}
        Some((_, Ok(header))) => return Err(bad(1, format!("unexpected header `{header}`"))),
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(bad(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != RESULT_COLUMNS.len() {
            return Err(bad(
                n,
                format!("expected {} fields, got {}", RESULT_COLUMNS.len(), fields.len()),
            ));
        }
        let int = |k: usize| {
            fields[k]
                .parse::<usize>()
                .map_err(|e| bad(n, format!("{}: {e}", RESULT_COLUMNS[k])))
        };
        let num = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|e| bad(n, format!("{}: {e}", RESULT_COLUMNS[k])))
        };
        let aborted = match fields[7] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(bad(n, format!("aborted: expected 0 or 1, got `{other}`"))),
        };
        let chi = [num(2)?, num(3)?, num(4)?];
        if chi.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(bad(n, format!("policy {chi:?} outside [0, 1]")));
        }
        rows.push(ResultRow {
            replicate: int(0)?,
            trial: int(1)?,
            chi,
            performance: num(5)?,
            best_so_far: num(6)?,
            aborted,
        });
    }
    Ok(rows)
}

/// Final best-so-far of each replicate in a result file, in replicate order.
pub fn final_performances(rows: &[ResultRow]) -> Vec<f64> {
    let mut last: std::collections::BTreeMap<usize, (usize, f64)> = Default::default();
    for r in rows {
        let entry = last.entry(r.replicate).or_insert((r.trial, r.best_so_far));
        if r.trial >= entry.0 {
            *entry = (r.trial, r.best_so_far);
        }
    }
    last.into_values().map(|(_, best)| best).collect()
}

pub fn write_summary<W: Write>(summary: &StatsSummary, mut out: W) -> io::Result<()> {
    writeln!(out, "statistic,value")?;
    writeln!(out, "n,{}", summary.n)?;
    for (name, v) in [
        ("p5", summary.p5),
        ("p25", summary.p25),
        ("median", summary.median),
        ("p75", summary.p75),
        ("p95", summary.p95),
    ] {
        writeln!(out, "{name},{v}")?;
    }
    let outliers: Vec<String> = summary.outliers.iter().map(f64::to_string).collect();
    writeln!(out, "outliers,{}", outliers.join(" "))
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub results: PathBuf,
    /// Absent when no replicate finished.
    pub summary: Option<PathBuf>,
}

/// Writes `<label>.csv` and `<label>_summary.txt` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let label = result.config.label();
    let results = dir.join(format!("{label}.csv"));
    write_file(&results, |w| write_results(&result.rows(), w))?;
    let summary = match result.summary() {
        Ok(s) => {
            let path = dir.join(format!("{label}_summary.txt"));
            write_file(&path, |w| write_summary(&s, w))?;
            Some(path)
        }
        Err(Error::EmptyData) => None,
        Err(e) => return Err(e),
    };
    Ok(OutputFiles { results, summary })
}

pub(crate) fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_sim() -> SimParams {
        SimParams {
            motor_eccentricity: 1e-6,
            ..SimParams::default()
        }
    }

    fn quick(treatment: Treatment, replicates: usize, budget: usize) -> ExperimentConfig {
        ExperimentConfig {
            treatment,
            replicates,
            budget,
            base_seed: 5,
            sim: quick_sim(),
            episode: EpisodeOptions {
                duration: 0.2,
                ..EpisodeOptions::default()
            },
            optimizer: OptimizerSettings {
                acquisition: AcquisitionParams {
                    grid_per_dim: 11,
                    ..AcquisitionParams::default()
                },
                ..OptimizerSettings::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = ExperimentConfig::default();
        assert_eq!(config.replicates, 20);
        assert_eq!(config.budget, 30);
        assert_eq!(ExperimentConfig::from_toml(&config.to_toml()).unwrap(), config);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let config = ExperimentConfig::from_toml(
            "variant = \"damaged\"\ndamaged_spring = 4\ntreatment = \"bo_noprior\"\n\n[sim]\nmotor_eccentricity = 1e-6\n\n[optimizer.kernel]\nbeta = 0.2\n",
        )
        .unwrap();
        assert_eq!(config.variant(), Variant::Damaged(4));
        assert_eq!(config.treatment, Treatment::BoNoprior);
        assert_eq!(config.sim.motor_eccentricity, 1e-6);
        assert_eq!(config.sim.dt, SimParams::default().dt);
        assert_eq!(config.optimizer.kernel.beta, 0.2);
        assert_eq!(config.optimizer.kernel.noise_var, KernelParams::default().noise_var);
        assert_eq!(config.label(), "damaged4_bo_noprior");
        let bo = config.bo_config();
        assert_eq!(bo.n_init_random, 10);
        assert!(bo.prior.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "replicate = 3\n",
            "[sim]\nmotor_eccentricty = 1e-6\n",
            "[optimizer]\nkapa = 1.0\n",
            "[episode]\nlength = 2.0\n",
            "treatment = \"bo\"\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(ExperimentConfig::from_toml("replicates = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("budget = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("treatment = \"bo_noprior\"\nbudget = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("[sim]\ndt = -1.0\n").is_err());
    }

    #[test]
    fn prior_scale_reaches_the_anchors() {
        let config = ExperimentConfig::from_toml("[optimizer]\nprior_scale = 20.0\n").unwrap();
        let prior = config.bo_config().prior.unwrap();
        assert_eq!(prior.anchor_values[0], 6.0);
        assert_eq!(*prior.anchor_values.last().unwrap(), 0.0);
    }

    #[test]
    fn single_random_trial() {
        let result = run_experiment(&quick(Treatment::Random, 1, 1)).unwrap();
        assert_eq!(result.replicates.len(), 1);
        assert_eq!(result.replicates[0].trace.trials.len(), 1);
        assert_eq!(result.replicates[0].seed, 5);
        assert_eq!(result.final_performances().len(), 1);
    }

    #[test]
    fn observations_are_accounted_for() {
        let robot = Robot::build(Variant::Intact, &quick_sim()).unwrap();
        let mut total = 0;
        for treatment in Treatment::ALL {
            let result = run_experiment_on(&robot, &quick(treatment, 2, 10)).unwrap();
            assert_eq!(result.failed().count(), 0);
            let obs = result.observations();
            assert_eq!(obs.len(), 20);
            assert_eq!(result.rows().len(), 20);
            for curve in result.best_so_far_curves() {
                assert!(curve.windows(2).all(|w| w[1] >= w[0]));
            }
            total += obs.len();
        }
        assert_eq!(total, 3 * 2 * 10);
    }

    #[test]
    fn failing_replicates_are_recorded() {
        let mut config = quick(Treatment::Random, 3, 2);
        config.sim.motor_eccentricity = 1e306;
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.failed().count(), 3);
        assert!(result.final_performances().is_empty());
        assert!(result
            .failed()
            .all(|r| r.error.as_ref().unwrap().contains("non-finite")));
    }

    #[test]
    fn random_and_prior_free_runs_share_their_opening_trials() {
        let robot = Robot::build(Variant::Intact, &quick_sim()).unwrap();
        let random = run_experiment_on(&robot, &quick(Treatment::Random, 1, 10)).unwrap();
        let noprior = run_experiment_on(&robot, &quick(Treatment::BoNoprior, 1, 10)).unwrap();
        assert_eq!(random.rows(), noprior.rows());
    }

    #[test]
    fn results_round_trip_and_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let config = quick(Treatment::BoPrior, 2, 3);
        let first = write_outputs(&run_experiment(&config).unwrap(), &dir.path().join("a")).unwrap();
        let second = write_outputs(&run_experiment(&config).unwrap(), &dir.path().join("b")).unwrap();
        assert_eq!(first.results.file_name().unwrap(), "intact_bo_prior.csv");
        assert_eq!(fs::read(&first.results).unwrap(), fs::read(&second.results).unwrap());
        assert_eq!(
            fs::read(first.summary.as_ref().unwrap()).unwrap(),
            fs::read(second.summary.as_ref().unwrap()).unwrap()
        );

        let text = fs::read_to_string(&first.results).unwrap();
        assert!(text.starts_with("replicate,trial,chi1,chi2,chi3,performance,best_so_far,aborted\n"));
        let rows = read_results(&first.results).unwrap();
        assert_eq!(rows.len(), 6);
        let again = run_experiment(&config).unwrap();
        assert_eq!(rows, again.rows());
        assert_eq!(final_performances(&rows), again.final_performances());
    }

    #[test]
    fn malformed_results_name_the_line() {
        let path = Path::new("x.csv");
        let header = RESULT_COLUMNS.join(",");
        let cases = [
            ("a,b\n".to_string(), 1),
            (format!("{header}\n0,0,0.5,0.5,0.5,1.0,1.0,0\n0,1,0.5,0.5\n"), 3),
            (format!("{header}\n0,0,1.5,0.5,0.5,1.0,1.0,0\n"), 2),
            (format!("{header}\n0,0,0.5,0.5,0.5,x,1.0,0\n"), 2),
            (format!("{header}\n0,0,0.5,0.5,0.5,1.0,1.0,2\n"), 2),
        ];
        for (text, line) in cases {
            match parse_results(text.as_bytes(), path) {
                Err(Error::Csv { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn final_performance_is_the_last_trial() {
        let row = |replicate, trial, best| ResultRow {
            replicate,
            trial,
            chi: [0.5; 3],
            performance: 0.0,
            best_so_far: best,
            aborted: false,
        };
        let rows = [row(1, 0, 1.0), row(0, 0, 2.0), row(1, 1, 3.0), row(0, 1, 2.5)];
        assert_eq!(final_performances(&rows), [2.5, 3.0]);
    }

    #[test]
    fn cross_test_of_the_zero_gait() {
        let (a, b) = cross_test(&Policy::zero(), Variant::Intact, Variant::Damaged(0), &quick_sim(), 1).unwrap();
        assert!(a.performance.abs() < 0.4 && b.performance.abs() < 0.4);
        let gait = Policy::new([0.9, 0.1, 0.8]).unwrap();
        let (c, d) = cross_test(&gait, Variant::Intact, Variant::Intact, &quick_sim(), 1).unwrap();
        assert_eq!(c, d);
    }
}
