//! Training and evaluation loops: per-seed workers, the fixed metrics
//! schema, CSV files, and the cross-seed aggregate.
//!
//! Randomness layout: the master seed for seed index k is `seed_base + k`.
//! Training episode seeds come from the worker's own substream of that
//! master seed. Evaluation derives a separate master, `train seed +
//! EVAL_SEED_OFFSET`, with one substream per evaluation round, so evaluation
//! rollouts never touch any training stream and adding rounds never shifts
//! training draws.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use inertia_core::agent::{substream_rng, ActMode, Agent, LossRecord};
use inertia_core::envs::Env;
use inertia_core::math;
use inertia_core::metrics::oscillation_ratio_actions;
use inertia_core::replay::Transition;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::run::{build_agent, build_env, CheckpointFile, ExperimentAgent, ExperimentEnv, Role};

/// Evaluation RNG master = training seed + this offset ("some other seed",
/// pinned so runs are reproducible).
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

/// CLI-side substream labels; disjoint from the agent-internal labels in
/// `inertia_core::agent::stream` (1..=8), which hang off the same master
/// seed.
mod stream {
    /// Training episode seeds.
    pub const ENV: u64 = 101;
}

pub const CSV_HEADER: &str = "env_step,mean_return,std_return,oscillation_ratio,mean_mu_pic,loss_core_q,loss_core_pi,loss_mix_q,loss_pic,epsilon";

/// Column names after `env_step`, in schema order.
pub const METRIC_COLUMNS: [&str; 9] = [
    "mean_return",
    "std_return",
    "oscillation_ratio",
    "mean_mu_pic",
    "loss_core_q",
    "loss_core_pi",
    "loss_mix_q",
    "loss_pic",
    "epsilon",
];

/// One evaluation row. Fields an algorithm does not produce hold NaN and
/// render as `nan`; a row that is NaN in every metric marks a seed that
/// aborted at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub oscillation_ratio: f64,
    pub mean_mu_pic: f64,
    pub loss_core_q: f64,
    pub loss_core_pi: f64,
    pub loss_mix_q: f64,
    pub loss_pic: f64,
    pub epsilon: f64,
}

impl MetricsRecord {
    /// All-NaN marker row for an aborted seed.
    pub fn failure(env_step: u64) -> Self {
        MetricsRecord {
            env_step,
            mean_return: f64::NAN,
            std_return: f64::NAN,
            oscillation_ratio: f64::NAN,
            mean_mu_pic: f64::NAN,
            loss_core_q: f64::NAN,
            loss_core_pi: f64::NAN,
            loss_mix_q: f64::NAN,
            loss_pic: f64::NAN,
            epsilon: f64::NAN,
        }
    }

    pub fn metrics(&self) -> [f64; 9] {
        [
            self.mean_return,
            self.std_return,
            self.oscillation_ratio,
            self.mean_mu_pic,
            self.loss_core_q,
            self.loss_core_pi,
            self.loss_mix_q,
            self.loss_pic,
            self.epsilon,
        ]
    }

    /// Metric value by schema column name.
    pub fn metric(&self, column: &str) -> Option<f64> {
        METRIC_COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|i| self.metrics()[i])
    }
}

/// Shortest round-trip decimal; NaN spelled lowercase per the schema.
fn field(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_field(path: &Path, row: u64, name: &str, text: &str) -> Result<f64> {
    text.trim().parse().map_err(|_| CliError::Csv {
        path: path.to_path_buf(),
        row,
        detail: format!("column {name}: expected a number, got {text:?}"),
    })
}

/// Writes one CSV of rows under the fixed schema.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.env_step.to_string());
        for v in r.metrics() {
            out.push(',');
            out.push_str(&field(v));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Reads a metrics CSV back; errors name the offending row.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            row: 0,
            detail: e.to_string(),
        })?;
    {
        let got = reader
            .headers()
            .map_err(|e| CliError::Csv {
                path: path.to_path_buf(),
                row: 1,
                detail: e.to_string(),
            })?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if got != CSV_HEADER {
            return Err(CliError::Csv {
                path: path.to_path_buf(),
                row: 1,
                detail: format!("header {got:?} does not match the metrics schema"),
            });
        }
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        // line 1 is the header
        let row = idx as u64 + 2;
        let record = record.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            row,
            detail: e.to_string(),
        })?;
        if record.len() != 10 {
            return Err(CliError::Csv {
                path: path.to_path_buf(),
                row,
                detail: format!("expected 10 columns, got {}", record.len()),
            });
        }
        let env_step: u64 = record[0].trim().parse().map_err(|_| CliError::Csv {
            path: path.to_path_buf(),
            row,
            detail: format!("column env_step: expected an integer, got {:?}", &record[0]),
        })?;
        let mut vals = [0.0; 9];
        for (i, name) in METRIC_COLUMNS.iter().enumerate() {
            vals[i] = parse_field(path, row, name, &record[i + 1])?;
        }
        rows.push(MetricsRecord {
            env_step,
            mean_return: vals[0],
            std_return: vals[1],
            oscillation_ratio: vals[2],
            mean_mu_pic: vals[3],
            loss_core_q: vals[4],
            loss_core_pi: vals[5],
            loss_mix_q: vals[6],
            loss_pic: vals[7],
            epsilon: vals[8],
        });
    }
    Ok(rows)
}

/// Latest loss values seen during training; NaN until a network first
/// reports one. Snapshotted into each evaluation row.
#[derive(Debug, Clone, Copy)]
struct LossSnapshot {
    core_q: f64,
    core_pi: f64,
    mix_q: f64,
    pic: f64,
    epsilon: f64,
}

impl LossSnapshot {
    fn new() -> Self {
        LossSnapshot {
            core_q: f64::NAN,
            core_pi: f64::NAN,
            mix_q: f64::NAN,
            pic: f64::NAN,
            epsilon: f64::NAN,
        }
    }

    fn absorb(&mut self, record: &LossRecord) {
        if let Some(v) = record.core_q {
            self.core_q = v;
        }
        if let Some(v) = record.core_pi {
            self.core_pi = v;
        }
        if let Some(v) = record.mix_q {
            self.mix_q = v;
        }
        if let Some(v) = record.pic {
            self.pic = v;
        }
        if let Some(v) = record.epsilon {
            self.epsilon = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub mean_return: f64,
    pub std_return: f64,
    /// Mean over episodes of per-episode switch ratios, measured on the
    /// executed base-environment actions.
    pub oscillation_ratio: f64,
    /// Mean inertia weight over all evaluation steps; NaN for agents
    /// without a controller.
    pub mean_mu: f64,
}

/// Runs evaluation rollouts without learning. Actions come from
/// `policy_probs` and the caller's RNG, never from the agent's own streams,
/// so the agent is untouched: no parameter, buffer, or training-RNG
/// mutation.
pub fn evaluate<A: Agent>(
    agent: &A,
    env: &mut ExperimentEnv,
    episodes: usize,
    rng: &mut ChaCha8Rng,
    mode: ActMode,
) -> Result<EvalOutcome> {
    if episodes == 0 {
        return Err(CliError::bad_arg("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut ratios = Vec::with_capacity(episodes);
    let mut mu_sum = 0.0;
    let mut mu_steps = 0usize;
    for _ in 0..episodes {
        let mut state = env.reset(rng.gen());
        let mut prev: Option<usize> = None;
        let mut ep_return = 0.0;
        let mut executed: Vec<usize> = Vec::new();
        loop {
            let probs = agent.policy_probs(&state, prev)?;
            let action = match mode {
                ActMode::Sample => math::sample_categorical(&probs, rng.gen()),
                ActMode::Greedy => math::argmax_low(&probs),
            };
            if let Some(mu) = agent.pic_weight(&state, prev)? {
                mu_sum += mu;
                mu_steps += 1;
            }
            let outcome = env.step(action)?;
            ep_return += env.raw_reward(outcome.reward);
            match env.action_space() {
                Some(space) => {
                    let (base, _) = space.decode(action)?;
                    executed.extend(std::iter::repeat(base).take(env.last_step_cost()));
                }
                None => executed.push(action),
            }
            if outcome.terminal {
                break;
            }
            prev = Some(action);
            state = outcome.state;
        }
        returns.push(ep_return);
        if executed.len() >= 2 {
            ratios.push(oscillation_ratio_actions(&executed)?);
        }
    }
    let mean_return = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns
        .iter()
        .map(|r| (r - mean_return) * (r - mean_return))
        .sum::<f64>()
        / returns.len() as f64;
    let oscillation_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let mean_mu = if mu_steps == 0 {
        f64::NAN
    } else {
        mu_sum / mu_steps as f64
    };
    Ok(EvalOutcome {
        mean_return,
        std_return: math::sqrt(var),
        oscillation_ratio,
        mean_mu,
    })
}

/// What one seed produced.
#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub csv_path: PathBuf,
    pub checkpoint_path: Option<PathBuf>,
    /// Present when the seed aborted; its CSV then ends in a failure row.
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct TrainingSummary {
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate_path: PathBuf,
}

impl TrainingSummary {
    pub fn failures(&self) -> usize {
        self.seeds.iter().filter(|s| s.error.is_some()).count()
    }
}

struct SeedRun {
    rows: Vec<MetricsRecord>,
    checkpoint: Option<CheckpointFile>,
    error: Option<String>,
}

/// Trains one seed to the step budget, evaluating at step 0 and at every
/// multiple of the eval interval the budget crosses.
fn run_seed(config: &ExperimentConfig, seed: u64) -> SeedRun {
    let mut rows: Vec<MetricsRecord> = Vec::new();
    let mut eval_round: u64 = 0;
    let body = |rows: &mut Vec<MetricsRecord>,
                eval_round: &mut u64|
     -> Result<CheckpointFile> {
        let mut train_env = build_env(config, Role::Train)?;
        let mut eval_env = build_env(config, Role::Eval)?;
        let mut agent = build_agent(config, seed)?;
        let mut env_rng = substream_rng(seed, stream::ENV);
        let mut losses = LossSnapshot::new();

        let run_eval = |agent: &ExperimentAgent,
                            eval_env: &mut ExperimentEnv,
                            at: u64,
                            losses: &LossSnapshot,
                            round: &mut u64|
         -> Result<MetricsRecord> {
            let mut rng = substream_rng(seed.wrapping_add(EVAL_SEED_OFFSET), *round);
            *round += 1;
            let out = evaluate(
                agent,
                eval_env,
                config.eval_episodes,
                &mut rng,
                config.eval_mode.act_mode(),
            )?;
            Ok(MetricsRecord {
                env_step: at,
                mean_return: out.mean_return,
                std_return: out.std_return,
                oscillation_ratio: out.oscillation_ratio,
                mean_mu_pic: out.mean_mu,
                loss_core_q: losses.core_q,
                loss_core_pi: losses.core_pi,
                loss_mix_q: losses.mix_q,
                loss_pic: losses.pic,
                epsilon: losses.epsilon,
            })
        };

        let row = run_eval(&agent, &mut eval_env, 0, &losses, eval_round)?;
        rows.push(row);
        // base env steps consumed / agent decisions made (these differ under
        // macro-action wrappers; update schedules count decisions)
        let mut steps: u64 = 0;
        let mut decisions: u64 = 0;
        let mut next_eval = config.eval_interval;
        'training: while steps < config.total_steps {
            let mut state = train_env.reset(env_rng.gen());
            let mut prev: Option<usize> = None;
            loop {
                let action = agent.act(&state, prev, ActMode::Sample)?;
                let outcome = train_env.step(action)?;
                agent.record(Transition {
                    state: state.clone(),
                    prev_action: prev,
                    action,
                    reward: outcome.reward,
                    next_state: outcome.state.clone(),
                    terminal: outcome.terminal,
                })?;
                if let Some(record) = agent.train_step(decisions)? {
                    losses.absorb(&record);
                }
                decisions += 1;
                steps += train_env.last_step_cost() as u64;
                while next_eval <= steps && next_eval <= config.total_steps {
                    let row = run_eval(&agent, &mut eval_env, next_eval, &losses, eval_round)?;
                    rows.push(row);
                    next_eval += config.eval_interval;
                }
                if steps >= config.total_steps {
                    break 'training;
                }
                if outcome.terminal {
                    break;
                }
                prev = Some(action);
                state = outcome.state;
            }
        }
        Ok(CheckpointFile {
            config: config.clone(),
            seed,
            env_steps: steps,
            agent: agent.checkpoint(config.checkpoint_buffer),
        })
    };
    match body(&mut rows, &mut eval_round) {
        Ok(checkpoint) => SeedRun {
            rows,
            checkpoint: Some(checkpoint),
            error: None,
        },
        Err(err) => {
            let at = eval_round.saturating_sub(1) * config.eval_interval;
            rows.push(MetricsRecord::failure(at + config.eval_interval));
            SeedRun {
                rows,
                checkpoint: None,
                error: Some(err.to_string()),
            }
        }
    }
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn seed_checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.checkpoint.json"))
}

/// Trains every configured seed (independent workers), writes one CSV and
/// one checkpoint per seed plus the cross-seed aggregate, and returns where
/// everything went. Worker errors become failure rows and summary entries,
/// not process aborts.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainingSummary> {
    config.validate()?;
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let seeds: Vec<u64> = config.train_seeds().collect();
    let runs: Vec<(u64, SeedRun)> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || (seed, run_seed(config, seed))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });

    let mut outcomes = Vec::with_capacity(runs.len());
    for (seed, run) in runs {
        let csv_path = seed_csv_path(&dir, seed);
        write_metrics_csv(&csv_path, &run.rows)?;
        let checkpoint_path = match run.checkpoint {
            Some(file) => {
                let path = seed_checkpoint_path(&dir, seed);
                file.save(&path)?;
                Some(path)
            }
            None => None,
        };
        outcomes.push(SeedOutcome {
            seed,
            csv_path,
            checkpoint_path,
            error: run.error,
        });
    }

    let aggregate_path = dir.join("aggregate.csv");
    let per_seed: Vec<Vec<MetricsRecord>> = outcomes
        .iter()
        .map(|o| read_metrics_csv(&o.csv_path))
        .collect::<Result<_>>()?;
    write_aggregate_csv(&aggregate_path, &aggregate_rows(&per_seed))?;

    Ok(TrainingSummary {
        out_dir: dir,
        seeds: outcomes,
        aggregate_path,
    })
}

/// Cross-seed mean and population std per metric at one step. NaN entries
/// are out-of-band markers, not samples, so statistics run over the finite
/// values only and go NaN when a metric has none.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub env_step: u64,
    pub mean: [f64; 9],
    pub std: [f64; 9],
}

pub fn aggregate_rows(per_seed: &[Vec<MetricsRecord>]) -> Vec<AggregateRow> {
    let mut steps: Vec<u64> = per_seed
        .iter()
        .flat_map(|rows| rows.iter().map(|r| r.env_step))
        .collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|step| {
            let mut mean = [f64::NAN; 9];
            let mut std = [f64::NAN; 9];
            for col in 0..9 {
                let values: Vec<f64> = per_seed
                    .iter()
                    .flat_map(|rows| rows.iter().filter(|r| r.env_step == step))
                    .map(|r| r.metrics()[col])
                    .filter(|v| v.is_finite())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let m = values.iter().sum::<f64>() / values.len() as f64;
                let var =
                    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
                mean[col] = m;
                std[col] = math::sqrt(var);
            }
            AggregateRow {
                env_step: step,
                mean,
                std,
            }
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str("env_step");
    for name in METRIC_COLUMNS {
        out.push_str(&format!(",{name}_mean,{name}_std"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.env_step.to_string());
        for col in 0..9 {
            out.push(',');
            out.push_str(&field(row.mean[col]));
            out.push(',');
            out.push_str(&field(row.std[col]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let row = idx as u64 + 1;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 19 {
            return Err(CliError::Csv {
                path: path.to_path_buf(),
                row,
                detail: format!("expected 19 columns, got {}", parts.len()),
            });
        }
        let env_step: u64 = parts[0].trim().parse().map_err(|_| CliError::Csv {
            path: path.to_path_buf(),
            row,
            detail: format!("column env_step: expected an integer, got {:?}", parts[0]),
        })?;
        let mut mean = [0.0; 9];
        let mut std = [0.0; 9];
        for col in 0..9 {
            mean[col] = parse_field(path, row, METRIC_COLUMNS[col], parts[1 + 2 * col])?;
            std[col] = parse_field(path, row, METRIC_COLUMNS[col], parts[2 + 2 * col])?;
        }
        rows.push(AggregateRow {
            env_step,
            mean,
            std,
        });
    }
    Ok(rows)
}
