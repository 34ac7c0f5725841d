use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use tensegrity_core::harness::{self, OUTPUT_DIR_ENV};
use tensegrity_core::profiles::{self, ProfileGrid};
use tensegrity_core::sim::write_trajectory_csv;
use tensegrity_core::tasks::amplitude_study;
use tensegrity_core::{EpisodeOptions, ExperimentConfig, Policy, PriorSpec, Robot, StatsSummary, Treatment, Variant};

#[derive(Parser)]
#[command(
    name = "tensegrity",
    version,
    about = "Gait learning for a simulated six-strut tensegrity robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of an experiment and write its result tables.
    Run(RunArgs),
    /// Run one gait and print the trial outcome.
    Evaluate(EvaluateArgs),
    /// Build performance profiles from result tables or from the prior.
    Profiles(ProfilesArgs),
    /// Summaries and pairwise Mann-Whitney tests over result tables.
    Stats(StatsArgs),
    /// Marker amplitude of random gaits on several variants.
    Amplitude(AmplitudeArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory; overrides the config file.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    #[command(flatten)]
    out: OutDir,
    /// Override the configured treatment; repeat to run several.
    #[arg(long, value_parser = parse_treatment)]
    treatment: Vec<Treatment>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Policy in [0,1]^3, e.g. `0.9,0.1,1`.
    #[arg(long, value_parser = parse_triple, conflicts_with = "speeds", required_unless_present = "speeds")]
    chi: Option<[f64; 3]>,
    /// Motor commands in [-1,1]^3.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    speeds: Option<[f64; 3]>,
    /// Config supplying simulator and trial settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// intact, rigid, damaged or damaged:<spring>. Defaults to the config's.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the trajectory (time, 12 node positions, yaw) to this CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct ProfilesArgs {
    /// Result tables whose observations are pooled.
    results: Vec<PathBuf>,
    #[command(flatten)]
    out: OutDir,
    /// Profile the prior mean instead of observations.
    #[arg(long, conflicts_with = "results")]
    prior: bool,
    #[arg(long, default_value_t = 1.0, requires = "prior")]
    prior_scale: f64,
    /// File name prefix; defaults to `prior` or `profile`.
    #[arg(long)]
    name: Option<String>,
    /// Also write a graymap image per grid.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Result tables; each file stem names a group.
    #[arg(required = true)]
    results: Vec<PathBuf>,
}

#[derive(Args)]
struct AmplitudeArgs {
    /// Config supplying simulator and trial settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
    #[arg(long, default_value_t = 50)]
    gaits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_variant, value_delimiter = ',', default_value = "intact,rigid")]
    variants: Vec<Variant>,
    /// Stop trials at the yaw limit as the learning runs do.
    #[arg(long)]
    yaw_abort: bool,
}

fn parse_treatment(s: &str) -> Result<Treatment, String> {
    s.parse().map_err(|e: tensegrity_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: tensegrity_core::Error| e.to_string())
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 3 comma-separated values, got {}", v.len()))
}

fn main() -> ExitCode {
    match Cli::parse().command.run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

impl Command {
    fn run(self) -> Result<ExitCode> {
        match self {
            Command::Run(args) => run(args),
            Command::Evaluate(args) => evaluate(args).map(|_| ExitCode::SUCCESS),
            Command::Profiles(args) => profiles(args).map(|_| ExitCode::SUCCESS),
            Command::Stats(args) => stats(args).map(|_| ExitCode::SUCCESS),
            Command::Amplitude(args) => amplitude(args).map(|_| ExitCode::SUCCESS),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = load_config(Some(&args.config))?;
    if let Some(dir) = args.out.out_dir {
        config.output_dir = dir;
    }
    if let Some(n) = args.replicates {
        config.replicates = n;
    }
    if let Some(n) = args.budget {
        config.budget = n;
    }
    if let Some(s) = args.base_seed {
        config.base_seed = s;
    }
    let treatments = if args.treatment.is_empty() {
        vec![config.treatment]
    } else {
        args.treatment
    };

    let robot = Robot::build(config.variant(), &config.sim).context("building the robot")?;
    let mut failures = 0;
    for treatment in treatments {
        let config = ExperimentConfig {
            treatment,
            ..config.clone()
        };
        eprintln!(
            "{}: {} replicates x {} trials",
            config.label(),
            config.replicates,
            config.budget
        );
        let result = harness::run_experiment_on(&robot, &config)?;
        for r in result.failed() {
            eprintln!(
                "  replicate {} failed: {}",
                r.replicate,
                r.error.as_deref().unwrap_or("")
            );
            failures += 1;
        }
        let files = harness::write_outputs(&result, &config.output_dir)?;
        println!("{}", files.results.display());
        if let Ok(summary) = result.summary() {
            print_summary(&config.label(), &summary);
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} replicate(s) failed");
        ExitCode::from(2)
    })
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    config.episode.record_trajectory = args.trajectory.is_some();
    let variant = args.variant.unwrap_or_else(|| config.variant());
    let policy = match (args.chi, args.speeds) {
        (Some(chi), _) => Policy::new(chi)?,
        (None, Some(v)) => {
            ensure!(
                v.iter().all(|x| (-1.0..=1.0).contains(x)),
                "motor commands must lie in [-1, 1]"
            );
            Policy::from_commands(v)
        }
        (None, None) => bail!("give --chi or --speeds"),
    };
    let robot = Robot::build(variant, &config.sim)?;
    let result = robot.evaluate_with(&policy, args.seed, &config.episode)?;

    let chi = policy.chi();
    let v = policy.commands();
    let mut out = io::stdout().lock();
    writeln!(out, "variant             {variant}")?;
    writeln!(out, "chi                 {}, {}, {}", chi[0], chi[1], chi[2])?;
    writeln!(out, "commands            {}, {}, {}", v[0], v[1], v[2])?;
    writeln!(out, "performance_cm_s    {}", result.performance)?;
    writeln!(out, "distance_cm         {}", result.distance)?;
    writeln!(out, "duration_s          {}", result.duration_simulated)?;
    writeln!(out, "aborted_by_yaw      {}", result.aborted_by_yaw)?;
    writeln!(out, "yaw_final_rad       {}", result.yaw_final)?;
    writeln!(out, "marker_amplitude_cm {}", result.marker_amplitude() * 100.0)?;

    if let (Some(path), Some(samples)) = (&args.trajectory, &result.trajectory) {
        let mut w = create(path)?;
        write_trajectory_csv(&mut w, samples)?;
        w.flush()?;
        writeln!(out, "trajectory          {}", path.display())?;
    }
    Ok(())
}

fn profiles(args: ProfilesArgs) -> Result<()> {
    let dir = args.out.out_dir.unwrap_or_else(|| PathBuf::from("."));
    let grids = if args.prior {
        profiles::compute_prior_profile(&PriorSpec::corners_and_center(args.prior_scale))?
    } else {
        ensure!(!args.results.is_empty(), "give result tables or --prior");
        let mut observations = Vec::new();
        for path in &args.results {
            for row in harness::read_results(path)? {
                observations.push((row.policy()?, row.performance));
            }
        }
        eprintln!("{} observations", observations.len());
        profiles::compute_profiles(&observations)?
    };
    let name = args
        .name
        .unwrap_or_else(|| if args.prior { "prior" } else { "profile" }.to_string());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for grid in &grids {
        write_grid(grid, &dir, &name, args.pgm)?;
    }
    Ok(())
}

fn write_grid(grid: &ProfileGrid, dir: &Path, name: &str, pgm: bool) -> Result<()> {
    let stem = format!("{name}_{}", grid.pair());
    let csv = dir.join(format!("{stem}.csv"));
    let mut w = create(&csv)?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    println!("{}", csv.display());
    if pgm {
        let img = dir.join(format!("{stem}.pgm"));
        let mut w = create(&img)?;
        grid.write_pgm(&mut w)?;
        w.flush()?;
        println!("{}", img.display());
    }
    Ok(())
}

fn print_summary(label: &str, s: &StatsSummary) {
    let outliers: Vec<String> = s.outliers.iter().map(|v| format!("{v:.3}")).collect();
    println!(
        "{label}: n={} median={:.3} p25={:.3} p75={:.3} p5={:.3} p95={:.3} outliers=[{}]",
        s.n,
        s.median,
        s.p25,
        s.p75,
        s.p5,
        s.p95,
        outliers.join(", ")
    );
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut groups = Vec::new();
    for path in &args.results {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let finals = harness::final_performances(&harness::read_results(path)?);
        ensure!(!finals.is_empty(), "{} holds no trials", path.display());
        print_summary(&label, &StatsSummary::from_samples(&finals)?);
        groups.push((label, finals));
    }
    for t in harness::pairwise_tests(&groups)? {
        println!(
            "{} vs {}: U={} p={:.4} {} ({})",
            t.first,
            t.second,
            t.test.u,
            t.test.p,
            t.stars,
            if t.test.exact { "exact" } else { "normal" }
        );
    }
    Ok(())
}

fn amplitude(args: AmplitudeArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let dir = args.out.out_dir.unwrap_or(config.output_dir);
    let options = EpisodeOptions {
        abort_on_yaw: args.yaw_abort,
        record_trajectory: false,
        ..config.episode
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("amplitude.csv");
    let mut w = create(&path)?;
    writeln!(w, "variant,gait,amplitude_cm")?;
    let mut medians = Vec::new();
    for variant in &args.variants {
        let robot = Robot::build(*variant, &config.sim)?;
        let amps: Vec<f64> = amplitude_study(&robot, args.gaits, args.seed, &options)?
            .into_iter()
            .map(|a| a * 100.0)
            .collect();
        for (i, a) in amps.iter().enumerate() {
            writeln!(w, "{variant},{i},{a}")?;
        }
        let summary = StatsSummary::from_samples(&amps)?;
        print_summary(&format!("{variant} amplitude_cm"), &summary);
        medians.push((variant, summary.median));
    }
    w.flush()?;
    if let [(a, ma), (b, mb), ..] = medians[..] {
        println!("median ratio {a}/{b} = {:.3}", ma / mb);
    }
    println!("{}", path.display());
    Ok(())
}
