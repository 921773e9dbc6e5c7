//! Comparison agents and environment wrappers: vanilla DQN, discrete SAC,
//! action repetition over an augmented action space, and a train-time
//! action-switch penalty.
//!
//! Discrete SAC here is literally the nested agent's inner loop: it calls
//! the same update function on the same substream layout, so pinning the
//! nested agent's inertia weight to zero and disabling its outer loop
//! reproduces SAC bitwise. DQN is kept vanilla: experience replay and a
//! hard-copied target network, nothing else.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    sample_batch, stream, substream_rng, validate_transition, ActMode, Agent, LossRecord, OptNet,
    TwinCritic,
};
use crate::envs::{Env, StepOutcome};
use crate::error::CoreError;
use crate::math;
use crate::net::{adam_step, hard_update, Activation, DenseNet, Grads};
use crate::nsac::inner_update;
use crate::replay::{ReplayBuffer, Transition};
use crate::Result;

/// Linear exploration decay per optimizer update, clamped at a floor:
/// `epsilon(u) = max(floor, start - decay_per_update * u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub floor: f64,
    pub decay_per_update: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            floor: 0.1,
            decay_per_update: 5e-6,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.floor) || !(0.0..=1.0).contains(&self.start) {
            return Err(CoreError::invalid("EpsilonSchedule", "rates outside [0, 1]"));
        }
        if self.floor > self.start {
            return Err(CoreError::invalid("EpsilonSchedule", "floor above start"));
        }
        if !(self.decay_per_update >= 0.0 && self.decay_per_update.is_finite()) {
            return Err(CoreError::invalid(
                "EpsilonSchedule",
                "decay_per_update must be nonnegative and finite",
            ));
        }
        Ok(())
    }

    pub fn value(&self, updates: u64) -> f64 {
        (self.start - self.decay_per_update * updates as f64).max(self.floor)
    }
}

/// DQN hyperparameters. Defaults: learning rate 3e-4, batch 64, buffer 2e5,
/// hard target copy every 1e4 updates, one update per two environment steps,
/// exploration decaying linearly from 1 to 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub epsilon: EpsilonSchedule,
    /// Target network hard-copies when the update count is a multiple of this.
    pub hard_target_every: u64,
    /// Updates fire when `env_step % update_interval == 0`.
    pub update_interval: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.99,
            lr: 3e-4,
            epsilon: EpsilonSchedule::default(),
            hard_target_every: 10_000,
            update_interval: 2,
            batch_size: 64,
            buffer_capacity: 200_000,
            hidden: 64,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::invalid("DqnConfig", "gamma outside [0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CoreError::invalid("DqnConfig", "lr must be positive and finite"));
        }
        self.epsilon.validate()?;
        if self.hard_target_every == 0 || self.update_interval == 0 {
            return Err(CoreError::invalid("DqnConfig", "intervals must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("DqnConfig", "batch_size must be positive"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(CoreError::invalid(
                "DqnConfig",
                "buffer_capacity must be at least batch_size",
            ));
        }
        if self.hidden == 0 {
            return Err(CoreError::invalid("DqnConfig", "hidden width must be positive"));
        }
        Ok(())
    }
}

/// TD(0) loss with a frozen target network:
/// `E[ 1/2 (Q(s, a) - (r + gamma * (1 - done) * max_b Qbar(s', b)))^2 ]`.
pub fn dqn_td_loss(
    q: &DenseNet,
    target: &DenseNet,
    batch: &[Transition],
    gamma: f64,
    grads: &mut Grads,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::InsufficientData {
            context: "dqn_td_loss batch",
            need: 1,
            got: 0,
        });
    }
    let n_actions = q.output_dim();
    let inv = 1.0 / batch.len() as f64;
    let mut dout = vec![0.0; n_actions];
    let mut loss = 0.0;
    for transition in batch {
        if transition.action >= n_actions {
            return Err(CoreError::IndexOutOfRange {
                context: "dqn_td_loss action",
                index: transition.action,
                len: n_actions,
            });
        }
        let y = if transition.terminal {
            transition.reward
        } else {
            let next_q = target.infer(&transition.next_state)?;
            transition.reward + gamma * next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let cache = q.forward(&transition.state)?;
        let residual = cache.output()[transition.action] - y;
        loss += 0.5 * residual * residual * inv;
        dout.fill(0.0);
        dout[transition.action] = residual * inv;
        q.backward(&cache, &dout, grads)?;
    }
    if !loss.is_finite() {
        return Err(CoreError::invalid("dqn_td_loss", "non-finite loss"));
    }
    Ok(loss)
}

/// Vanilla DQN with epsilon-greedy behavior. The greedy policy (epsilon = 0)
/// is what `policy_probs` reports, matching the evaluation protocol.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    config: DqnConfig,
    state_dim: usize,
    n_actions: usize,
    q: OptNet,
    target: DenseNet,
    buffer: ReplayBuffer,
    action_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    updates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnCheckpoint {
    pub config: DqnConfig,
    pub state_dim: usize,
    pub n_actions: usize,
    pub q: OptNet,
    pub target: DenseNet,
    pub action_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
    pub updates: u64,
    #[serde(default)]
    pub buffer: Option<ReplayBuffer>,
}

impl DqnAgent {
    pub fn new(
        state_dim: usize,
        n_actions: usize,
        config: DqnConfig,
        master_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 {
            return Err(CoreError::invalid("DqnAgent", "state_dim must be positive"));
        }
        if n_actions == 0 {
            return Err(CoreError::invalid("DqnAgent", "n_actions must be positive"));
        }
        let h = config.hidden;
        let q = DenseNet::new(
            &[state_dim, h, h, n_actions],
            &[Activation::Relu, Activation::Relu, Activation::None],
            &mut substream_rng(master_seed, stream::CORE_CRITIC1_INIT),
        )?;
        let target = q.clone();
        Ok(DqnAgent {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            config,
            state_dim,
            n_actions,
            q: OptNet::new(q),
            target,
            action_rng: substream_rng(master_seed, stream::ACTION),
            replay_rng: substream_rng(master_seed, stream::REPLAY),
            updates: 0,
        })
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Exploration rate currently in force.
    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.updates)
    }

    pub fn checkpoint(&self, include_buffer: bool) -> DqnCheckpoint {
        DqnCheckpoint {
            config: self.config,
            state_dim: self.state_dim,
            n_actions: self.n_actions,
            q: self.q.clone(),
            target: self.target.clone(),
            action_rng: self.action_rng.clone(),
            replay_rng: self.replay_rng.clone(),
            updates: self.updates,
            buffer: include_buffer.then(|| self.buffer.clone()),
        }
    }

    pub fn restore(snapshot: DqnCheckpoint) -> Result<Self> {
        snapshot.config.validate()?;
        if snapshot.q.net.input_dim() != snapshot.state_dim
            || snapshot.q.net.output_dim() != snapshot.n_actions
            || !snapshot.q.net.same_architecture(&snapshot.target)
        {
            return Err(CoreError::invalid("DqnAgent::restore", "network shape mismatch"));
        }
        let buffer = match snapshot.buffer {
            Some(buffer) => buffer,
            None => ReplayBuffer::new(snapshot.config.buffer_capacity)?,
        };
        Ok(DqnAgent {
            config: snapshot.config,
            state_dim: snapshot.state_dim,
            n_actions: snapshot.n_actions,
            q: snapshot.q,
            target: snapshot.target,
            buffer,
            action_rng: snapshot.action_rng,
            replay_rng: snapshot.replay_rng,
            updates: snapshot.updates,
        })
    }
}

impl Agent for DqnAgent {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&mut self, state: &[f64], _prev_action: Option<usize>, mode: ActMode) -> Result<usize> {
        let values = self.q.net.infer(state)?;
        Ok(match mode {
            ActMode::Greedy => math::argmax_low(&values),
            ActMode::Sample => {
                if self.action_rng.gen::<f64>() < self.epsilon() {
                    self.action_rng.gen_range(0..self.n_actions)
                } else {
                    math::argmax_low(&values)
                }
            }
        })
    }

    fn policy_probs(&self, state: &[f64], _prev_action: Option<usize>) -> Result<Vec<f64>> {
        let values = self.q.net.infer(state)?;
        let mut probs = vec![0.0; self.n_actions];
        probs[math::argmax_low(&values)] = 1.0;
        Ok(probs)
    }

    fn pic_weight(&self, _state: &[f64], _prev_action: Option<usize>) -> Result<Option<f64>> {
        Ok(None)
    }

    fn record(&mut self, transition: Transition) -> Result<()> {
        validate_transition(&transition, self.state_dim, self.n_actions)?;
        self.buffer.push(transition);
        Ok(())
    }

    fn train_step(&mut self, env_step: u64) -> Result<Option<LossRecord>> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        if env_step % self.config.update_interval != 0 {
            return Ok(None);
        }
        let batch = sample_batch(&self.buffer, self.config.batch_size, &mut self.replay_rng)?;
        let mut grads = Grads::zeros_like(&self.q.net);
        let loss = dqn_td_loss(&self.q.net, &self.target, &batch, self.config.gamma, &mut grads)?;
        adam_step(&mut self.q.net, &grads, self.config.lr, &mut self.q.adam)?;
        self.updates += 1;
        if self.updates % self.config.hard_target_every == 0 {
            hard_update(&mut self.target, &self.q.net)?;
        }
        Ok(Some(LossRecord {
            core_q: Some(loss),
            epsilon: Some(self.epsilon()),
            ..LossRecord::default()
        }))
    }
}

/// Discrete SAC hyperparameters; the same fields the nested agent's inner
/// loop reads, under the same defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub sigma: f64,
    /// Updates fire when `env_step % update_interval == 0`.
    pub update_interval: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            alpha: 0.1,
            lr_critic: 3e-4,
            lr_actor: 3e-4,
            sigma: 0.002,
            update_interval: 2,
            batch_size: 64,
            buffer_capacity: 200_000,
            hidden: 64,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::invalid("SacConfig", "gamma outside [0, 1)"));
        }
        if self.alpha < 0.0 {
            return Err(CoreError::invalid("SacConfig", "alpha must be nonnegative"));
        }
        if !(self.lr_critic > 0.0 && self.lr_critic.is_finite())
            || !(self.lr_actor > 0.0 && self.lr_actor.is_finite())
        {
            return Err(CoreError::invalid("SacConfig", "learning rates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(CoreError::invalid("SacConfig", "sigma outside [0, 1]"));
        }
        if self.update_interval == 0 {
            return Err(CoreError::invalid("SacConfig", "update_interval must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("SacConfig", "batch_size must be positive"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(CoreError::invalid(
                "SacConfig",
                "buffer_capacity must be at least batch_size",
            ));
        }
        if self.hidden == 0 {
            return Err(CoreError::invalid("SacConfig", "hidden width must be positive"));
        }
        Ok(())
    }
}

/// Discrete soft actor-critic: a softmax actor and twin critics with soft
/// targets, trained by the shared inner update. Previous actions are
/// ignored; the policy conditions on state alone.
#[derive(Debug, Clone)]
pub struct SacAgent {
    config: SacConfig,
    state_dim: usize,
    n_actions: usize,
    actor: OptNet,
    core: TwinCritic,
    buffer: ReplayBuffer,
    action_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    train_events: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacCheckpoint {
    pub config: SacConfig,
    pub state_dim: usize,
    pub n_actions: usize,
    pub actor: OptNet,
    pub core: TwinCritic,
    pub action_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
    pub train_events: u64,
    #[serde(default)]
    pub buffer: Option<ReplayBuffer>,
}

impl SacAgent {
    pub fn new(
        state_dim: usize,
        n_actions: usize,
        config: SacConfig,
        master_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 {
            return Err(CoreError::invalid("SacAgent", "state_dim must be positive"));
        }
        if n_actions < 2 {
            return Err(CoreError::invalid("SacAgent", "need at least two actions"));
        }
        let h = config.hidden;
        let sizes = [state_dim, h, h, n_actions];
        let actor = DenseNet::new(
            &sizes,
            &[Activation::Relu, Activation::Relu, Activation::Softmax],
            &mut substream_rng(master_seed, stream::ACTOR_INIT),
        )?;
        let core = TwinCritic::new(
            &sizes,
            &[Activation::Relu, Activation::Relu, Activation::None],
            &mut substream_rng(master_seed, stream::CORE_CRITIC1_INIT),
            &mut substream_rng(master_seed, stream::CORE_CRITIC2_INIT),
        )?;
        Ok(SacAgent {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            config,
            state_dim,
            n_actions,
            actor: OptNet::new(actor),
            core,
            action_rng: substream_rng(master_seed, stream::ACTION),
            replay_rng: substream_rng(master_seed, stream::REPLAY),
            train_events: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn train_events(&self) -> u64 {
        self.train_events
    }

    pub fn checkpoint(&self, include_buffer: bool) -> SacCheckpoint {
        SacCheckpoint {
            config: self.config,
            state_dim: self.state_dim,
            n_actions: self.n_actions,
            actor: self.actor.clone(),
            core: self.core.clone(),
            action_rng: self.action_rng.clone(),
            replay_rng: self.replay_rng.clone(),
            train_events: self.train_events,
            buffer: include_buffer.then(|| self.buffer.clone()),
        }
    }

    pub fn restore(snapshot: SacCheckpoint) -> Result<Self> {
        snapshot.config.validate()?;
        let ok = snapshot.actor.net.input_dim() == snapshot.state_dim
            && snapshot.actor.net.output_dim() == snapshot.n_actions
            && snapshot.core.q1.net.input_dim() == snapshot.state_dim
            && snapshot.core.q1.net.output_dim() == snapshot.n_actions
            && snapshot.core.q1.net.same_architecture(&snapshot.core.target1)
            && snapshot.core.q2.net.same_architecture(&snapshot.core.target2);
        if !ok {
            return Err(CoreError::invalid("SacAgent::restore", "network shape mismatch"));
        }
        let buffer = match snapshot.buffer {
            Some(buffer) => buffer,
            None => ReplayBuffer::new(snapshot.config.buffer_capacity)?,
        };
        Ok(SacAgent {
            config: snapshot.config,
            state_dim: snapshot.state_dim,
            n_actions: snapshot.n_actions,
            actor: snapshot.actor,
            core: snapshot.core,
            buffer,
            action_rng: snapshot.action_rng,
            replay_rng: snapshot.replay_rng,
            train_events: snapshot.train_events,
        })
    }
}

impl Agent for SacAgent {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&mut self, state: &[f64], _prev_action: Option<usize>, mode: ActMode) -> Result<usize> {
        let probs = self.actor.net.infer(state)?;
        Ok(match mode {
            ActMode::Greedy => math::argmax_low(&probs),
            ActMode::Sample => math::sample_categorical(&probs, self.action_rng.gen::<f64>()),
        })
    }

    fn policy_probs(&self, state: &[f64], _prev_action: Option<usize>) -> Result<Vec<f64>> {
        self.actor.net.infer(state)
    }

    fn pic_weight(&self, _state: &[f64], _prev_action: Option<usize>) -> Result<Option<f64>> {
        Ok(None)
    }

    fn record(&mut self, transition: Transition) -> Result<()> {
        validate_transition(&transition, self.state_dim, self.n_actions)?;
        self.buffer.push(transition);
        Ok(())
    }

    fn train_step(&mut self, env_step: u64) -> Result<Option<LossRecord>> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        if env_step % self.config.update_interval != 0 {
            return Ok(None);
        }
        let batch = sample_batch(&self.buffer, self.config.batch_size, &mut self.replay_rng)?;
        let losses = inner_update(
            &mut self.actor,
            &mut self.core,
            &batch,
            self.config.gamma,
            self.config.alpha,
            self.config.lr_critic,
            self.config.lr_actor,
            self.config.sigma,
        )?;
        self.train_events += 1;
        Ok(Some(LossRecord {
            core_q: Some(0.5 * (losses.critic1 + losses.critic2)),
            core_pi: Some(losses.actor),
            ..LossRecord::default()
        }))
    }
}

/// The augmented action space A x Re: each augmented index names a base
/// action and a repeat count. Indices are base-major: augmented index
/// `a * |Re| + j` means base action `a` repeated `Re[j]` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionActionSpace {
    base_actions: usize,
    repeats: Vec<usize>,
}

impl RepetitionActionSpace {
    pub fn new(base_actions: usize, repeats: Vec<usize>) -> Result<Self> {
        if base_actions == 0 {
            return Err(CoreError::invalid(
                "RepetitionActionSpace",
                "base_actions must be positive",
            ));
        }
        if repeats.is_empty() {
            return Err(CoreError::invalid("RepetitionActionSpace", "empty repetition set"));
        }
        for (i, &k) in repeats.iter().enumerate() {
            if k == 0 {
                return Err(CoreError::invalid(
                    "RepetitionActionSpace",
                    alloc::format!("repeat count at position {i} is zero"),
                ));
            }
            if repeats[..i].contains(&k) {
                return Err(CoreError::invalid(
                    "RepetitionActionSpace",
                    alloc::format!("duplicate repeat count {k}"),
                ));
            }
        }
        Ok(RepetitionActionSpace {
            base_actions,
            repeats,
        })
    }

    /// The standard set {1, 2, 4, 8}.
    pub fn default_set(base_actions: usize) -> Result<Self> {
        RepetitionActionSpace::new(base_actions, vec![1, 2, 4, 8])
    }

    pub fn base_actions(&self) -> usize {
        self.base_actions
    }

    pub fn repeats(&self) -> &[usize] {
        &self.repeats
    }

    /// Number of augmented actions, |A| * |Re|.
    pub fn len(&self) -> usize {
        self.base_actions * self.repeats.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Augmented index for (base action, repeat count); the count must be a
    /// member of the repetition set.
    pub fn encode(&self, action: usize, repeat: usize) -> Result<usize> {
        if action >= self.base_actions {
            return Err(CoreError::IndexOutOfRange {
                context: "RepetitionActionSpace::encode action",
                index: action,
                len: self.base_actions,
            });
        }
        match self.repeats.iter().position(|&k| k == repeat) {
            Some(j) => Ok(action * self.repeats.len() + j),
            None => Err(CoreError::invalid(
                "RepetitionActionSpace::encode",
                alloc::format!("repeat count {repeat} not in the repetition set"),
            )),
        }
    }

    /// (base action, repeat count) for an augmented index.
    pub fn decode(&self, augmented: usize) -> Result<(usize, usize)> {
        if augmented >= self.len() {
            return Err(CoreError::IndexOutOfRange {
                context: "RepetitionActionSpace::decode",
                index: augmented,
                len: self.len(),
            });
        }
        let action = augmented / self.repeats.len();
        let repeat = self.repeats[augmented % self.repeats.len()];
        Ok((action, repeat))
    }
}

/// Wraps an environment with the augmented action space: one wrapped step
/// with (a, k) steps the base environment k times with action a, stopping
/// early at a terminal, and returns the discount-accumulated reward
/// `sum_j gamma^j r_j` with the final state. `last_step_cost` reports how
/// many base steps the wrapped step consumed, so environment-step budgets
/// stay honest.
#[derive(Debug, Clone)]
pub struct RepetitionEnv<E> {
    base: E,
    space: RepetitionActionSpace,
    gamma: f64,
    last_cost: usize,
    last_raw_reward: f64,
}

impl<E: Env> RepetitionEnv<E> {
    pub fn new(base: E, space: RepetitionActionSpace, gamma: f64) -> Result<Self> {
        if space.base_actions() != base.n_actions() {
            return Err(CoreError::DimensionMismatch {
                context: "RepetitionEnv action space",
                expected: base.n_actions(),
                got: space.base_actions(),
            });
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(CoreError::invalid("RepetitionEnv", "gamma outside [0, 1]"));
        }
        Ok(RepetitionEnv {
            base,
            space,
            gamma,
            last_cost: 1,
            last_raw_reward: 0.0,
        })
    }

    pub fn space(&self) -> &RepetitionActionSpace {
        &self.space
    }

    pub fn base(&self) -> &E {
        &self.base
    }

    /// Undiscounted sum of the base rewards consumed by the most recent
    /// `step`. Evaluation reports this so returns stay comparable with
    /// unwrapped agents; the discounted form is a training-target quantity.
    pub fn last_raw_reward(&self) -> f64 {
        self.last_raw_reward
    }
}

impl<E: Env> Env for RepetitionEnv<E> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn n_actions(&self) -> usize {
        self.space.len()
    }

    fn max_episode_len(&self) -> usize {
        self.base.max_episode_len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.last_cost = 1;
        self.last_raw_reward = 0.0;
        self.base.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let (base_action, repeat) = self.space.decode(action)?;
        let mut accumulated = 0.0;
        let mut raw = 0.0;
        let mut discount = 1.0;
        let mut consumed = 0;
        let mut outcome = None;
        for _ in 0..repeat {
            let step = self.base.step(base_action)?;
            accumulated += discount * step.reward;
            raw += step.reward;
            discount *= self.gamma;
            consumed += 1;
            let done = step.terminal;
            outcome = Some(step);
            if done {
                break;
            }
        }
        self.last_cost = consumed;
        self.last_raw_reward = raw;
        // repeat >= 1 is a space invariant, so the loop ran at least once
        let last = outcome.expect("repeat count is positive");
        Ok(StepOutcome {
            state: last.state,
            reward: accumulated,
            terminal: last.terminal,
        })
    }

    fn last_step_cost(&self) -> usize {
        self.last_cost
    }
}

/// Default train-time penalty per action switch.
pub const SWITCH_PENALTY: f64 = -0.05;

/// Adds `penalty` to the reward whenever the action differs from the
/// previous one within an episode; the first action of an episode is never
/// penalized. Deactivated (evaluation mode) it is the identity wrapper.
#[derive(Debug, Clone)]
pub struct SwitchPenaltyEnv<E> {
    base: E,
    penalty: f64,
    active: bool,
    prev: Option<usize>,
}

impl<E: Env> SwitchPenaltyEnv<E> {
    pub fn new(base: E, penalty: f64) -> Self {
        SwitchPenaltyEnv {
            base,
            penalty,
            active: true,
            prev: None,
        }
    }

    /// Toggles the penalty; evaluation runs with it off.
    pub fn set_active(&mut self, active: bool) {
        self.active = active;
    }

    pub fn base(&self) -> &E {
        &self.base
    }
}

impl<E: Env> Env for SwitchPenaltyEnv<E> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    fn max_episode_len(&self) -> usize {
        self.base.max_episode_len()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.prev = None;
        self.base.reset(seed)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let mut outcome = self.base.step(action)?;
        if self.active && self.prev.is_some_and(|p| p != action) {
            outcome.reward += self.penalty;
        }
        self.prev = Some(action);
        Ok(outcome)
    }

    fn last_step_cost(&self) -> usize {
        self.base.last_step_cost()
    }
}
