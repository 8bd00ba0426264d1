//! Command-line front end for the PWTAB toolkit.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.
//! `BANDIT_AB_THREADS` caps the worker pool.

use bandit_ab::baselines::{cuped_test, dim_test, zdml_test};
use bandit_ab::bandit_dist::{bandit_cdf, bandit_density, bandit_tail_prob, BanditParams};
use bandit_ab::dgp::{self, DgpConfig, FKind, GKind};
use bandit_ab::harness::config::{self, Settings};
use bandit_ab::harness::{self, Axis, ExperimentGrid};
use bandit_ab::learners::{LearnerKind, LearnerSpec};
use bandit_ab::meta_perm::{pwtab_with_pseudo, PwtabConfig};
use bandit_ab::{Error, LambdaConfig, NuisanceSource, Propensity, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_VAR: &str = "BANDIT_AB_THREADS";

#[derive(Parser)]
#[command(name = "bandit-ab", version, about = "Permuted weighted two-armed-bandit tests for A/B experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic experiment and write it as CSV.
    Generate(GenerateArgs),
    /// Run the PWTAB test and the baselines on a CSV dataset.
    Test(TestArgs),
    /// Replication study over a grid of synthetic experiments.
    Simulate(SimulateArgs),
    /// Compare the simulated WTAB statistic with its limiting distribution.
    ScltCheck(ScltArgs),
    /// Tabulate the bandit density, CDF and two-sided tail.
    Density(DensityArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "I")]
    f: FKind,
    #[arg(long, default_value = "I")]
    g: GKind,
    #[arg(long, default_value_t = 0.5)]
    sigma_eps: f64,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    p_treat: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value = "gbt_a")]
    learner: LearnerKind,
    #[arg(long, default_value_t = 0.03, conflicts_with = "lambda")]
    tau: f64,
    /// Fixed lambda instead of the threshold rule.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 25)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// `known:<p>` or `fit`.
    #[arg(long, default_value = "known:0.5")]
    propensity: Propensity,
    #[arg(long, default_value_t = 0.01)]
    clip_eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Every flag is optional so that values from `--config` survive unless overridden.
#[derive(Args)]
struct SimulateArgs {
    /// Flat `key = value` manifest; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    sigma_eps: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    propensity: Option<String>,
    #[arg(long)]
    clip_eps: Option<String>,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Emit power-curve CSV along this axis (f, g, sigma_eps, n).
    #[arg(long, requires = "curves_out")]
    curves_axis: Option<Axis>,
    #[arg(long)]
    curves_out: Option<PathBuf>,
}

impl SimulateArgs {
    fn overrides(&self) -> Settings {
        [
            ("f", &self.f),
            ("g", &self.g),
            ("sigma_eps", &self.sigma_eps),
            ("n", &self.n),
            ("methods", &self.methods),
            ("reps", &self.reps),
            ("alpha", &self.alpha),
            ("learner", &self.learner),
            ("k", &self.k),
            ("tau", &self.tau),
            ("lambda", &self.lambda),
            ("b", &self.b),
            ("seed", &self.seed),
            ("propensity", &self.propensity),
            ("clip_eps", &self.clip_eps),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect()
    }
}

#[derive(Args)]
struct ScltArgs {
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    omega: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    grid_min: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    grid_max: f64,
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = DgpConfig {
        p_treat: args.p_treat,
        ..DgpConfig::new(args.f, args.g, args.sigma_eps, args.n, args.seed)
    };
    let data = dgp::generate(&config)?;
    match args.out {
        Some(path) => harness::write_csv(&data, path),
        None => harness::write_dataset(&data, std::io::stdout().lock()),
    }
}

fn test(args: TestArgs) -> Result<()> {
    let data = harness::ingest_csv(&args.input)?;
    data.require_both_arms()?;
    let lambda = match args.lambda {
        Some(lambda) => LambdaConfig::Fixed { lambda },
        None => LambdaConfig::Threshold { tau: args.tau },
    };
    let mut levels = vec![0.01, 0.05, 0.1];
    if !levels.contains(&args.alpha) {
        levels.push(args.alpha);
    }
    let config = PwtabConfig {
        nuisance: NuisanceSource {
            learner: LearnerSpec::from_kind(args.learner),
            k: args.k,
            propensity: args.propensity,
        },
        clip_eps: args.clip_eps,
        lambda,
        b: args.b,
        levels,
    };
    let (report, pseudo) = pwtab_with_pseudo(&data, &config, args.seed)?;
    let columns: Vec<usize> = (0..data.n_covariates()).collect();
    let out = json!({
        "alpha": args.alpha,
        "reject": report.p_aggregated <= args.alpha,
        "config": config,
        "seed": args.seed,
        "report": report,
        "baselines": {
            "DIM": dim_test(&data)?,
            "CUPED": cuped_test(&data, &columns)?,
            "zDML": zdml_test(&pseudo)?,
        },
    });
    emit(args.out.as_ref(), &to_json(&out)?)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let base = match &args.config {
        Some(path) => config::load_settings(path)?,
        None => Settings::new(),
    };
    let grid = ExperimentGrid::from_settings(&config::merge(base, args.overrides()))?;
    let study = harness::run_study(&grid)?;
    if let Some(path) = &args.out_csv {
        std::fs::write(path, harness::study_csv(&study)?)?;
    }
    if let (Some(axis), Some(path)) = (args.curves_axis, &args.curves_out) {
        std::fs::write(path, harness::emit_power_curves(&study, axis)?)?;
    }
    emit(args.out_json.as_ref(), &to_json(&study)?)
}

fn sclt_check(args: ScltArgs) -> Result<()> {
    let report = harness::run_sclt_check(args.mu, args.sigma, args.lambda, args.n, args.reps, args.seed)?;
    emit(None, &to_json(&report)?)
}

fn density(args: DensityArgs) -> Result<()> {
    let params = BanditParams::new(args.omega, args.sigma0)?;
    if !(args.grid_step > 0.0) || !(args.grid_max >= args.grid_min) {
        return Err(Error::Config("need grid-step > 0 and grid-max >= grid-min".into()));
    }
    let steps = ((args.grid_max - args.grid_min) / args.grid_step + 1e-9).floor() as usize;
    let mut text = String::from("y,f,F,tail\n");
    for i in 0..=steps {
        let y = args.grid_min + i as f64 * args.grid_step;
        text.push_str(&format!(
            "{y},{},{},{}\n",
            bandit_density(y, params)?,
            bandit_cdf(y, params)?,
            bandit_tail_prob(y.abs(), params)?
        ));
    }
    emit(args.out.as_ref(), &text)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t >= 1)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure worker pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Test(a) => test(a),
        Command::Simulate(a) => simulate(a),
        Command::ScltCheck(a) => sclt_check(a),
        Command::Density(a) => density(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
