//! Experiment configuration: one JSON document carrying every knob, with
//! CLI flags layered on top of file values and `key=value` overrides layered
//! on top of both. The shipped defaults are the reference hyperparameters,
//! so an empty config trains the reference setup.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use inertia_core::agent::ActMode;
use inertia_core::baselines::{DqnConfig, SacConfig, SWITCH_PENALTY};
use inertia_core::envs::{LineTrackConfig, TwoWayMiniConfig};
use inertia_core::nsac::NsacConfig;

use crate::error::{CliError, Result};

/// Algorithm variants selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Algo {
    Dqn,
    Sac,
    Nsac,
    /// DQN over the repeated-action space.
    DqnRepeat,
    /// SAC over the repeated-action space.
    SacRepeat,
    /// DQN with the switch penalty added to training rewards.
    DqnIp,
    /// SAC with the switch penalty added to training rewards.
    SacIp,
    /// NSAC with the switch penalty added to training rewards.
    NsacIp,
}

/// Which learner an [`Algo`] trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Dqn,
    Sac,
    Nsac,
}

/// How an [`Algo`] wraps the base environment during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvWrapper {
    Plain,
    Repeat,
    Penalty,
}

impl Algo {
    pub fn family(self) -> Family {
        match self {
            Algo::Dqn | Algo::DqnRepeat | Algo::DqnIp => Family::Dqn,
            Algo::Sac | Algo::SacRepeat | Algo::SacIp => Family::Sac,
            Algo::Nsac | Algo::NsacIp => Family::Nsac,
        }
    }

    pub fn wrapper(self) -> EnvWrapper {
        match self {
            Algo::Dqn | Algo::Sac | Algo::Nsac => EnvWrapper::Plain,
            Algo::DqnRepeat | Algo::SacRepeat => EnvWrapper::Repeat,
            Algo::DqnIp | Algo::SacIp | Algo::NsacIp => EnvWrapper::Penalty,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Sac => "sac",
            Algo::Nsac => "nsac",
            Algo::DqnRepeat => "dqn-repeat",
            Algo::SacRepeat => "sac-repeat",
            Algo::DqnIp => "dqn-ip",
            Algo::SacIp => "sac-ip",
            Algo::NsacIp => "nsac-ip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum EnvKind {
    Linetrack,
    TwowayMini,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Linetrack => "linetrack",
            EnvKind::TwowayMini => "twoway-mini",
        }
    }
}

/// Traffic preset; only twoway-mini distinguishes the two (complex doubles
/// the spawn rates), linetrack uses its one configuration for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Complexity {
    Simple,
    Complex,
}

/// How evaluation turns the policy distribution into actions. Stochastic
/// policies are measured by sampling; `greedy` is the argmax override. DQN
/// reports a greedy one-hot distribution either way, so both modes evaluate
/// it greedily with exploration off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum EvalMode {
    Sample,
    Greedy,
}

impl EvalMode {
    pub fn act_mode(self) -> ActMode {
        match self {
            EvalMode::Sample => ActMode::Sample,
            EvalMode::Greedy => ActMode::Greedy,
        }
    }
}

/// Everything one training run needs. Serializes to JSON; absent fields
/// take the defaults below, unknown fields are rejected to catch typos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: EnvKind,
    pub complexity: Complexity,
    /// Number of independent seeds.
    pub seeds: u64,
    /// First master seed; seed k trains with `seed_base + k`.
    pub seed_base: u64,
    /// Base-environment step budget per seed. Macro-action wrappers consume
    /// several base steps per decision and budgets count the base steps.
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub eval_mode: EvalMode,
    pub out_dir: PathBuf,
    /// Include the replay buffer in the final checkpoint (large files).
    pub checkpoint_buffer: bool,
    pub nsac: NsacConfig,
    pub dqn: DqnConfig,
    pub sac: SacConfig,
    /// Explicit linetrack parameters; `None` uses the preset.
    pub linetrack: Option<LineTrackConfig>,
    /// Explicit twoway-mini parameters; `None` uses the complexity preset.
    pub twoway: Option<TwoWayMiniConfig>,
    /// Repeat counts for the repeated-action wrappers.
    pub repeats: Vec<usize>,
    /// Training-time reward added on each action switch by the -ip variants.
    pub switch_penalty: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algo: Algo::Nsac,
            env: EnvKind::Linetrack,
            complexity: Complexity::Simple,
            seeds: 5,
            seed_base: 0,
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 20,
            eval_mode: EvalMode::Sample,
            out_dir: PathBuf::from("runs"),
            checkpoint_buffer: false,
            nsac: NsacConfig::default(),
            dqn: DqnConfig::default(),
            sac: SacConfig::default(),
            linetrack: None,
            twoway: None,
            repeats: vec![1, 2, 4, 8],
            switch_penalty: SWITCH_PENALTY,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::json(path, e))?;
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(CliError::bad_arg("seeds must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(CliError::bad_arg("eval_interval must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(CliError::bad_arg("eval_episodes must be at least 1"));
        }
        self.nsac.validate()?;
        self.dqn.validate()?;
        self.sac.validate()?;
        if let Some(lt) = &self.linetrack {
            lt.validate()?;
        }
        if let Some(tw) = &self.twoway {
            tw.validate()?;
        }
        Ok(())
    }

    /// The master seeds this run trains, in order.
    pub fn train_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.seeds).map(|k| self.seed_base.wrapping_add(k))
    }

    /// Applies one `key=value` override. Cross-cutting keys (`gamma`, `lr`,
    /// `hidden`, `batch_size`, `buffer_capacity`, `sigma`) fan out to every
    /// agent config so a sweep moves the whole setup coherently.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn f64_of(key: &str, value: &str) -> Result<f64> {
            value
                .parse()
                .map_err(|_| CliError::bad_arg(format!("{key}: expected a number, got {value:?}")))
        }
        fn u64_of(key: &str, value: &str) -> Result<u64> {
            value.parse().map_err(|_| {
                CliError::bad_arg(format!("{key}: expected a nonnegative integer, got {value:?}"))
            })
        }
        match key {
            "mu0" => self.nsac.mu0 = f64_of(key, value)?,
            "alpha_core" => {
                let v = f64_of(key, value)?;
                self.nsac.alpha_core = v;
                self.sac.alpha = v;
            }
            "alpha_mix" => self.nsac.alpha_mix = f64_of(key, value)?,
            "gamma" => {
                let v = f64_of(key, value)?;
                self.nsac.gamma = v;
                self.sac.gamma = v;
                self.dqn.gamma = v;
            }
            "lr" => {
                let v = f64_of(key, value)?;
                self.nsac.lr_core_critic = v;
                self.nsac.lr_core_actor = v;
                self.nsac.lr_mix_critic = v;
                self.nsac.lr_pic = v;
                self.sac.lr_critic = v;
                self.sac.lr_actor = v;
                self.dqn.lr = v;
            }
            "sigma" => {
                let v = f64_of(key, value)?;
                self.nsac.sigma_core = v;
                self.nsac.sigma_mix = v;
                self.sac.sigma = v;
            }
            "hidden" => {
                let v = u64_of(key, value)? as usize;
                self.nsac.hidden = v;
                self.sac.hidden = v;
                self.dqn.hidden = v;
            }
            "batch_size" => {
                let v = u64_of(key, value)? as usize;
                self.nsac.batch_size = v;
                self.sac.batch_size = v;
                self.dqn.batch_size = v;
            }
            "buffer_capacity" => {
                let v = u64_of(key, value)? as usize;
                self.nsac.buffer_capacity = v;
                self.sac.buffer_capacity = v;
                self.dqn.buffer_capacity = v;
            }
            "epsilon_start" => self.dqn.epsilon.start = f64_of(key, value)?,
            "epsilon_floor" => self.dqn.epsilon.floor = f64_of(key, value)?,
            "epsilon_decay" => self.dqn.epsilon.decay_per_update = f64_of(key, value)?,
            "switch_penalty" => self.switch_penalty = f64_of(key, value)?,
            "seeds" => self.seeds = u64_of(key, value)?,
            "seed_base" => self.seed_base = u64_of(key, value)?,
            "total_steps" => self.total_steps = u64_of(key, value)?,
            "eval_interval" => self.eval_interval = u64_of(key, value)?,
            "eval_episodes" => self.eval_episodes = u64_of(key, value)? as usize,
            other => {
                return Err(CliError::bad_arg(format!(
                    "unknown override key {other:?}; known keys: mu0, alpha_core, alpha_mix, \
                     gamma, lr, sigma, hidden, batch_size, buffer_capacity, epsilon_start, \
                     epsilon_floor, epsilon_decay, switch_penalty, seeds, seed_base, \
                     total_steps, eval_interval, eval_episodes"
                )))
            }
        }
        Ok(())
    }
}

/// Splits a `key=value` argument.
pub fn split_assignment(raw: &str) -> Result<(&str, &str)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::bad_arg(format!("expected key=value, got {raw:?}")))
}
