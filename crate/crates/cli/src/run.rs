//! Binds algorithm and environment names to concrete instances: agent
//! construction with the right input/output sizes, environment wrapping per
//! variant, and the checkpoint file format that ties a trained agent back to
//! the configuration that produced it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use inertia_core::agent::{ActMode, Agent, LossRecord};
use inertia_core::baselines::{
    DqnAgent, DqnCheckpoint, RepetitionActionSpace, RepetitionEnv, SacAgent, SacCheckpoint,
    SwitchPenaltyEnv,
};
use inertia_core::envs::{Env, LineTrack, StepOutcome, TwoWayMini};
use inertia_core::envs::TwoWayMiniConfig;
use inertia_core::nsac::{NsacAgent, NsacCheckpoint};
use inertia_core::replay::Transition;

use crate::config::{Complexity, EnvKind, EnvWrapper, ExperimentConfig, Family};
use crate::error::{CliError, Result};

/// Whether an environment instance feeds training or evaluation. The switch
/// penalty shapes training rewards only, so evaluation instances deactivate
/// it; everything else is identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum BaseEnv {
    Line(LineTrack),
    TwoWay(TwoWayMini),
}

impl Env for BaseEnv {
    fn state_dim(&self) -> usize {
        match self {
            BaseEnv::Line(e) => e.state_dim(),
            BaseEnv::TwoWay(e) => e.state_dim(),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            BaseEnv::Line(e) => e.n_actions(),
            BaseEnv::TwoWay(e) => e.n_actions(),
        }
    }

    fn max_episode_len(&self) -> usize {
        match self {
            BaseEnv::Line(e) => e.max_episode_len(),
            BaseEnv::TwoWay(e) => e.max_episode_len(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            BaseEnv::Line(e) => e.reset(seed),
            BaseEnv::TwoWay(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: usize) -> inertia_core::Result<StepOutcome> {
        match self {
            BaseEnv::Line(e) => e.step(action),
            BaseEnv::TwoWay(e) => e.step(action),
        }
    }
}

/// A base environment behind whichever wrapper the algorithm variant needs.
#[derive(Debug, Clone)]
pub enum ExperimentEnv {
    Plain(BaseEnv),
    Repeat(RepetitionEnv<BaseEnv>),
    Penalty(SwitchPenaltyEnv<BaseEnv>),
}

impl Env for ExperimentEnv {
    fn state_dim(&self) -> usize {
        match self {
            ExperimentEnv::Plain(e) => e.state_dim(),
            ExperimentEnv::Repeat(e) => e.state_dim(),
            ExperimentEnv::Penalty(e) => e.state_dim(),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            ExperimentEnv::Plain(e) => e.n_actions(),
            ExperimentEnv::Repeat(e) => e.n_actions(),
            ExperimentEnv::Penalty(e) => e.n_actions(),
        }
    }

    fn max_episode_len(&self) -> usize {
        match self {
            ExperimentEnv::Plain(e) => e.max_episode_len(),
            ExperimentEnv::Repeat(e) => e.max_episode_len(),
            ExperimentEnv::Penalty(e) => e.max_episode_len(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            ExperimentEnv::Plain(e) => e.reset(seed),
            ExperimentEnv::Repeat(e) => e.reset(seed),
            ExperimentEnv::Penalty(e) => e.reset(seed),
        }
    }

    fn step(&mut self, action: usize) -> inertia_core::Result<StepOutcome> {
        match self {
            ExperimentEnv::Plain(e) => e.step(action),
            ExperimentEnv::Repeat(e) => e.step(action),
            ExperimentEnv::Penalty(e) => e.step(action),
        }
    }

    fn last_step_cost(&self) -> usize {
        match self {
            ExperimentEnv::Plain(e) => e.last_step_cost(),
            ExperimentEnv::Repeat(e) => e.last_step_cost(),
            ExperimentEnv::Penalty(e) => e.last_step_cost(),
        }
    }
}

impl ExperimentEnv {
    /// The augmented action space when this is a repetition environment.
    pub fn action_space(&self) -> Option<&RepetitionActionSpace> {
        match self {
            ExperimentEnv::Repeat(e) => Some(e.space()),
            _ => None,
        }
    }

    /// Undiscounted base-environment reward of the most recent step. Equal
    /// to `reported` except under the repetition wrapper, whose step reward
    /// is the discount-accumulated training target.
    pub fn raw_reward(&self, reported: f64) -> f64 {
        match self {
            ExperimentEnv::Repeat(e) => e.last_raw_reward(),
            _ => reported,
        }
    }
}

fn build_base(config: &ExperimentConfig) -> Result<BaseEnv> {
    Ok(match config.env {
        EnvKind::Linetrack => {
            let lt = config.linetrack.clone().unwrap_or_default();
            BaseEnv::Line(LineTrack::new(lt)?)
        }
        EnvKind::TwowayMini => {
            let tw = config.twoway.clone().unwrap_or_else(|| match config.complexity {
                Complexity::Simple => TwoWayMiniConfig::simple(),
                Complexity::Complex => TwoWayMiniConfig::complex(),
            });
            BaseEnv::TwoWay(TwoWayMini::new(tw)?)
        }
    })
}

/// Builds the wrapped environment for `config.algo` in the given role.
pub fn build_env(config: &ExperimentConfig, role: Role) -> Result<ExperimentEnv> {
    let base = build_base(config)?;
    Ok(match config.algo.wrapper() {
        EnvWrapper::Plain => ExperimentEnv::Plain(base),
        EnvWrapper::Repeat => {
            let space = RepetitionActionSpace::new(base.n_actions(), config.repeats.clone())?;
            let gamma = match config.algo.family() {
                Family::Dqn => config.dqn.gamma,
                Family::Sac => config.sac.gamma,
                Family::Nsac => config.nsac.gamma,
            };
            ExperimentEnv::Repeat(RepetitionEnv::new(base, space, gamma)?)
        }
        EnvWrapper::Penalty => {
            let mut env = SwitchPenaltyEnv::new(base, config.switch_penalty);
            if role == Role::Eval {
                env.set_active(false);
            }
            ExperimentEnv::Penalty(env)
        }
    })
}

/// One of the three learners, sized for the configured environment.
#[derive(Debug, Clone)]
pub enum ExperimentAgent {
    Dqn(DqnAgent),
    Sac(SacAgent),
    Nsac(NsacAgent),
}

impl Agent for ExperimentAgent {
    fn state_dim(&self) -> usize {
        match self {
            ExperimentAgent::Dqn(a) => a.state_dim(),
            ExperimentAgent::Sac(a) => a.state_dim(),
            ExperimentAgent::Nsac(a) => a.state_dim(),
        }
    }

    fn n_actions(&self) -> usize {
        match self {
            ExperimentAgent::Dqn(a) => a.n_actions(),
            ExperimentAgent::Sac(a) => a.n_actions(),
            ExperimentAgent::Nsac(a) => a.n_actions(),
        }
    }

    fn act(
        &mut self,
        state: &[f64],
        prev_action: Option<usize>,
        mode: ActMode,
    ) -> inertia_core::Result<usize> {
        match self {
            ExperimentAgent::Dqn(a) => a.act(state, prev_action, mode),
            ExperimentAgent::Sac(a) => a.act(state, prev_action, mode),
            ExperimentAgent::Nsac(a) => a.act(state, prev_action, mode),
        }
    }

    fn policy_probs(
        &self,
        state: &[f64],
        prev_action: Option<usize>,
    ) -> inertia_core::Result<Vec<f64>> {
        match self {
            ExperimentAgent::Dqn(a) => a.policy_probs(state, prev_action),
            ExperimentAgent::Sac(a) => a.policy_probs(state, prev_action),
            ExperimentAgent::Nsac(a) => a.policy_probs(state, prev_action),
        }
    }

    fn pic_weight(
        &self,
        state: &[f64],
        prev_action: Option<usize>,
    ) -> inertia_core::Result<Option<f64>> {
        match self {
            ExperimentAgent::Dqn(a) => a.pic_weight(state, prev_action),
            ExperimentAgent::Sac(a) => a.pic_weight(state, prev_action),
            ExperimentAgent::Nsac(a) => a.pic_weight(state, prev_action),
        }
    }

    fn record(&mut self, transition: Transition) -> inertia_core::Result<()> {
        match self {
            ExperimentAgent::Dqn(a) => a.record(transition),
            ExperimentAgent::Sac(a) => a.record(transition),
            ExperimentAgent::Nsac(a) => a.record(transition),
        }
    }

    fn train_step(&mut self, env_step: u64) -> inertia_core::Result<Option<LossRecord>> {
        match self {
            ExperimentAgent::Dqn(a) => a.train_step(env_step),
            ExperimentAgent::Sac(a) => a.train_step(env_step),
            ExperimentAgent::Nsac(a) => a.train_step(env_step),
        }
    }
}

/// Builds the learner for `config.algo`, sized against the wrapped
/// environment (macro-action variants act in the augmented space).
pub fn build_agent(config: &ExperimentConfig, master_seed: u64) -> Result<ExperimentAgent> {
    let probe = build_env(config, Role::Train)?;
    let (state_dim, n_actions) = (probe.state_dim(), probe.n_actions());
    Ok(match config.algo.family() {
        Family::Dqn => {
            ExperimentAgent::Dqn(DqnAgent::new(state_dim, n_actions, config.dqn, master_seed)?)
        }
        Family::Sac => {
            ExperimentAgent::Sac(SacAgent::new(state_dim, n_actions, config.sac, master_seed)?)
        }
        Family::Nsac => {
            ExperimentAgent::Nsac(NsacAgent::new(state_dim, n_actions, config.nsac, master_seed)?)
        }
    })
}

/// Serialized agent state, keyed by learner family. Externally tagged so
/// deserialization dispatches directly (the RNG states inside serialize a
/// u128 position, which serde's internal-tag buffering cannot carry).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentCheckpoint {
    Dqn(DqnCheckpoint),
    Sac(SacCheckpoint),
    Nsac(NsacCheckpoint),
}

impl ExperimentAgent {
    pub fn checkpoint(&self, include_buffer: bool) -> AgentCheckpoint {
        match self {
            ExperimentAgent::Dqn(a) => AgentCheckpoint::Dqn(a.checkpoint(include_buffer)),
            ExperimentAgent::Sac(a) => AgentCheckpoint::Sac(a.checkpoint(include_buffer)),
            ExperimentAgent::Nsac(a) => AgentCheckpoint::Nsac(a.checkpoint(include_buffer)),
        }
    }

    pub fn restore(snapshot: AgentCheckpoint) -> Result<Self> {
        Ok(match snapshot {
            AgentCheckpoint::Dqn(c) => ExperimentAgent::Dqn(DqnAgent::restore(c)?),
            AgentCheckpoint::Sac(c) => ExperimentAgent::Sac(SacAgent::restore(c)?),
            AgentCheckpoint::Nsac(c) => ExperimentAgent::Nsac(NsacAgent::restore(c)?),
        })
    }
}

/// A trained agent plus everything needed to rebuild its environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Base-environment steps consumed when the checkpoint was taken.
    pub env_steps: u64,
    pub agent: AgentCheckpoint,
}

impl CheckpointFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::json(path, e))?;
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
    }
}
