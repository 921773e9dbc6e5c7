//! Command line for training, evaluating, verifying, sweeping, and plotting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inertia_cli::config::{
    split_assignment, Algo, Complexity, EnvKind, EvalMode, ExperimentConfig,
};
use inertia_cli::error::{CliError, Result};
use inertia_cli::harness::{evaluate, run_training, TrainingSummary, EVAL_SEED_OFFSET};
use inertia_cli::plot::{emit_plots, DEFAULT_BAND, DEFAULT_METRICS};
use inertia_cli::run::{build_env, CheckpointFile, ExperimentAgent, Role};
use inertia_core::agent::substream_rng;
use inertia_core::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(
    name = "inertia",
    version,
    about = "Discrete-action RL with a learned policy inertia controller: \
             train, evaluate, verify, sweep, plot."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured seeds and write per-seed CSV logs, checkpoints,
    /// and the cross-seed aggregate.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint without learning.
    Evaluate(EvaluateArgs),
    /// Run verification suites and report per-check pass counts and worst
    /// violations.
    Verify(VerifyArgs),
    /// Shorthand for `verify gradcheck`.
    Gradcheck,
    /// Render SVG charts (mean line, std band) from a training log
    /// directory.
    Plot(PlotArgs),
    /// Train the cartesian product of hyperparameter assignments.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    complexity: Option<Complexity>,
    /// Number of independent seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Base-environment step budget per seed.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    eval_mode: Option<EvalMode>,
    /// Output directory for logs and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include replay buffers in checkpoints (large files).
    #[arg(long)]
    checkpoint_buffer: bool,
    /// Hyperparameter override, repeatable (e.g. --set mu0=0.2).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.algo {
            config.algo = v;
        }
        if let Some(v) = self.env {
            config.env = v;
        }
        if let Some(v) = self.complexity {
            config.complexity = v;
        }
        if let Some(v) = self.seeds {
            config.seeds = v;
        }
        if let Some(v) = self.seed_base {
            config.seed_base = v;
        }
        if let Some(v) = self.steps {
            config.total_steps = v;
        }
        if let Some(v) = self.eval_interval {
            config.eval_interval = v;
        }
        if let Some(v) = self.eval_episodes {
            config.eval_episodes = v;
        }
        if let Some(v) = self.eval_mode {
            config.eval_mode = v;
        }
        if let Some(v) = &self.out {
            config.out_dir = v.clone();
        }
        if self.checkpoint_buffer {
            config.checkpoint_buffer = true;
        }
        for assignment in &self.set {
            let (key, value) = split_assignment(assignment)?;
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint file written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_mode: Option<EvalMode>,
    /// Evaluation RNG seed; defaults to the checkpoint's training seed plus
    /// the fixed evaluation offset.
    #[arg(long)]
    eval_seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (default: all): tabular, gradcheck, reduction,
    /// theorem1, lemma1, npi-monotone.
    suites: Vec<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Directory holding seed_*.csv training logs.
    #[arg(long)]
    dir: PathBuf,
    /// Metric columns to chart, comma separated.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Band half-width in standard deviations.
    #[arg(long, default_value_t = DEFAULT_BAND)]
    band: f64,
    /// Output directory (default: the log directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Sweep axis, repeatable: KEY=V1,V2,... (cartesian product over axes).
    #[arg(long = "param", value_name = "KEY=V1,V2,...", required = true)]
    params: Vec<String>,
}

fn print_summary(summary: &TrainingSummary) {
    for outcome in &summary.seeds {
        match &outcome.error {
            None => println!("seed {}: ok, log {}", outcome.seed, outcome.csv_path.display()),
            Some(err) => println!("seed {}: FAILED: {err}", outcome.seed),
        }
    }
    println!("aggregate: {}", summary.aggregate_path.display());
}

fn cmd_train(args: &TrainArgs) -> Result<bool> {
    let config = args.resolve()?;
    let summary = run_training(&config)?;
    print_summary(&summary);
    Ok(summary.failures() == 0)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<bool> {
    let file = CheckpointFile::load(&args.checkpoint)?;
    let mut config = file.config.clone();
    if let Some(v) = args.eval_mode {
        config.eval_mode = v;
    }
    let episodes = args.episodes.unwrap_or(config.eval_episodes);
    let agent = ExperimentAgent::restore(file.agent)?;
    let mut env = build_env(&config, Role::Eval)?;
    let master = args
        .eval_seed
        .unwrap_or_else(|| file.seed.wrapping_add(EVAL_SEED_OFFSET));
    let mut rng = substream_rng(master, 0);
    let out = evaluate(&agent, &mut env, episodes, &mut rng, config.eval_mode.act_mode())?;
    println!(
        "episodes {episodes} mean_return {} std_return {} oscillation_ratio {} mean_mu {}",
        out.mean_return, out.std_return, out.oscillation_ratio, out.mean_mu
    );
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let suites: Vec<Suite> = if args.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suites
            .iter()
            .map(|name| {
                Suite::parse(name).ok_or_else(|| {
                    CliError::bad_arg(format!(
                        "unknown suite {name:?}; known suites: {}",
                        Suite::ALL.map(Suite::name).join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let mut all_ok = true;
    for suite in suites {
        let report = run_suite(suite);
        print!("{report}");
        all_ok &= report.ok();
    }
    Ok(all_ok)
}

fn cmd_plot(args: &PlotArgs) -> Result<bool> {
    let metrics: Vec<String> = if args.metrics.is_empty() {
        DEFAULT_METRICS.iter().map(|m| m.to_string()).collect()
    } else {
        args.metrics.clone()
    };
    let out_dir = args.out.clone().unwrap_or_else(|| args.dir.clone());
    let written = emit_plots(&args.dir, &metrics, args.band, &out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(true)
}

/// Expands `--param` axes into the cartesian product of assignments.
fn sweep_grid(params: &[String]) -> Result<Vec<Vec<(String, String)>>> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for raw in params {
        let (key, values) = split_assignment(raw)?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(CliError::bad_arg(format!("no values for sweep key {key:?}")));
        }
        axes.push((key.to_string(), values));
    }
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|combo| {
                values.iter().map(move |v| {
                    let mut next = combo.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    Ok(combos)
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let base = args.train.resolve()?;
    let combos = sweep_grid(&args.params)?;
    let mut all_ok = true;
    for combo in combos {
        let mut config = base.clone();
        let label: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let label = label.join("_");
        for (key, value) in &combo {
            config.set(key, value)?;
        }
        config.out_dir = base.out_dir.join(&label);
        config.validate()?;
        println!("sweep {label}");
        let summary = run_training(&config)?;
        print_summary(&summary);
        all_ok &= summary.failures() == 0;
    }
    Ok(all_ok)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Gradcheck => cmd_verify(&VerifyArgs {
            suites: vec!["gradcheck".to_string()],
        }),
        Command::Plot(args) => cmd_plot(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
