//! Nested soft actor-critic: discrete SAC on the policy core plus an outer
//! SAC-style improvement of the inertia controller.
//!
//! Two coupled learners share one replay stream. The inner loop is plain
//! discrete SAC on the core:
//!
//! ```text
//! L(theta_i) = E[ 1/2 (Q_core_i(s, a) - y_core)^2 ]
//! y_core     = r + gamma * (1 - done) * sum_a' pi_core(a'|s') *
//!              (min_i Qbar_core_i(s', a') - alpha_core * ln pi_core(a'|s'))
//! L(phi)     = E[ sum_a pi_core(a|s) * (alpha_core * ln pi_core(a|s) - min_i Q_core_i(s, a)) ]
//! ```
//!
//! The outer loop trains the controller mu(s, a_prev) and twin mixed critics
//! Q(s, a_prev, a) against the mixed policy
//! `mu * onehot(a_prev) + (1 - mu) * pi_core`, with the core frozen:
//!
//! ```text
//! L(vartheta_i) = E[ 1/2 (Q_i(s, a_prev, a) - y_mix)^2 ]
//! y_mix         = r + gamma * (1 - done) * sum_b mix(b|s', a) *
//!                 (min_i Qbar_i(s', a, b) - alpha_mix * ln mix(b|s', a))
//! L(psi)        = E[ sum_b mix(b|s, a_prev) * (alpha_mix * ln mix(b|s, a_prev) - min_i Q_i(s, a_prev, b)) ]
//! ```
//!
//! Note the previous-action slot of the next state is the action just taken.
//! Targets are semi-gradients: every `y` is a constant to the optimizer, and
//! the controller loss differentiates only the controller (the core
//! distribution and the mixed critics enter as constants).
//!
//! Update schedule per training step `t`: when `t mod m_core == 0`, the twin
//! core critics step (gradients for both computed before either moves), then
//! the actor against the updated critics, then the core targets soft-update.
//! When `t mod m_mix == 0`, the same order runs for the mixed critics, the
//! controller, and the mixed targets. Both loops consume the same minibatch
//! when they fire on the same step.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    append_one_hot, sample_batch, stream, substream_rng, validate_transition, ActMode, Agent,
    LossRecord, OptNet, TwinCritic,
};
use crate::error::CoreError;
use crate::math;
use crate::mixed::{apply_lower_bound, mix_into};
use crate::net::{adam_step, Activation, DenseNet, Grads};
use crate::replay::{ReplayBuffer, Transition};
use crate::Result;

/// Hyperparameters. Defaults are the fully-connected/vector-observation
/// configuration: two hidden layers of 64, learning rate 3e-4 on every
/// network, batch 64, buffer 2e5, target rate 0.002, updates every second
/// environment step for both loops, temperatures 0.1 (core) and 0.01
/// (mixed), no controller lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsacConfig {
    pub gamma: f64,
    /// Entropy temperature of the core objective.
    pub alpha_core: f64,
    /// Entropy temperature of the mixed-policy objective.
    pub alpha_mix: f64,
    pub lr_core_critic: f64,
    pub lr_core_actor: f64,
    pub lr_mix_critic: f64,
    pub lr_pic: f64,
    /// Soft target rate for the core critics.
    pub sigma_core: f64,
    /// Soft target rate for the mixed critics.
    pub sigma_mix: f64,
    /// Inner updates fire when `env_step % m_core == 0`.
    pub m_core: u64,
    /// Outer updates fire when `env_step % m_mix == 0`.
    pub m_mix: u64,
    /// Lower bound on the controller output; 0 leaves it unconstrained.
    pub mu0: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Width of both hidden layers.
    pub hidden: usize,
    /// Train the outer loop at all. Off, together with `force_zero_mu`,
    /// reduces the agent to plain discrete SAC.
    pub outer_updates: bool,
    /// Pin the inertia weight to zero everywhere (reduction mode); the
    /// controller network is never evaluated.
    pub force_zero_mu: bool,
}

impl Default for NsacConfig {
    fn default() -> Self {
        NsacConfig {
            gamma: 0.99,
            alpha_core: 0.1,
            alpha_mix: 0.01,
            lr_core_critic: 3e-4,
            lr_core_actor: 3e-4,
            lr_mix_critic: 3e-4,
            lr_pic: 3e-4,
            sigma_core: 0.002,
            sigma_mix: 0.002,
            m_core: 2,
            m_mix: 2,
            mu0: 0.0,
            batch_size: 64,
            buffer_capacity: 200_000,
            hidden: 64,
            outer_updates: true,
            force_zero_mu: false,
        }
    }
}

impl NsacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CoreError::invalid("NsacConfig", "gamma outside [0, 1)"));
        }
        if self.alpha_core < 0.0 || self.alpha_mix < 0.0 {
            return Err(CoreError::invalid("NsacConfig", "temperatures must be nonnegative"));
        }
        for (name, lr) in [
            ("lr_core_critic", self.lr_core_critic),
            ("lr_core_actor", self.lr_core_actor),
            ("lr_mix_critic", self.lr_mix_critic),
            ("lr_pic", self.lr_pic),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(CoreError::invalid(
                    "NsacConfig",
                    alloc::format!("{name} must be positive and finite"),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.sigma_core) || !(0.0..=1.0).contains(&self.sigma_mix) {
            return Err(CoreError::invalid("NsacConfig", "target rates outside [0, 1]"));
        }
        if self.m_core == 0 || self.m_mix == 0 {
            return Err(CoreError::invalid("NsacConfig", "train intervals must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.mu0) {
            return Err(CoreError::invalid("NsacConfig", "mu0 outside [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(CoreError::invalid("NsacConfig", "batch_size must be positive"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(CoreError::invalid(
                "NsacConfig",
                "buffer_capacity must be at least batch_size",
            ));
        }
        if self.hidden == 0 {
            return Err(CoreError::invalid("NsacConfig", "hidden width must be positive"));
        }
        Ok(())
    }
}

/// `sum_a probs[a] * (min(q1[a], q2[a]) - alpha * ln probs[a])` with the
/// floored logarithm; the twin-min soft state value under `probs`.
pub fn soft_value_min_twin(probs: &[f64], q1: &[f64], q2: &[f64], alpha: f64) -> f64 {
    let mut v = 0.0;
    for a in 0..probs.len() {
        v += probs[a] * (q1[a].min(q2[a]) - alpha * math::ln_floored(probs[a]));
    }
    v
}

/// Inertia weight at (`state`, `prev`) from a controller network whose tanh
/// output is mapped onto [mu0, 1]; `None` pins the weight to zero.
fn controller_weight(
    pic: Option<&DenseNet>,
    mu0: f64,
    state: &[f64],
    prev: usize,
    n_actions: usize,
) -> Result<f64> {
    match pic {
        None => Ok(0.0),
        Some(net) => {
            let x = append_one_hot(state, Some(prev), n_actions);
            let raw = (net.infer(&x)?[0] + 1.0) / 2.0;
            Ok(apply_lower_bound(raw, mu0).value)
        }
    }
}

/// Core Bellman target `y = r + gamma * (1 - done) * V_core(s')`.
fn core_target_value(
    actor: &DenseNet,
    target1: &DenseNet,
    target2: &DenseNet,
    transition: &Transition,
    gamma: f64,
    alpha_core: f64,
) -> Result<f64> {
    if transition.terminal {
        return Ok(transition.reward);
    }
    let probs = actor.infer(&transition.next_state)?;
    let q1 = target1.infer(&transition.next_state)?;
    let q2 = target2.infer(&transition.next_state)?;
    Ok(transition.reward + gamma * soft_value_min_twin(&probs, &q1, &q2, alpha_core))
}

/// Mixed Bellman target; the next state's previous-action slot carries the
/// action just taken.
fn mixed_target_value(
    actor: &DenseNet,
    pic: Option<&DenseNet>,
    mu0: f64,
    target1: &DenseNet,
    target2: &DenseNet,
    transition: &Transition,
    gamma: f64,
    alpha_mix: f64,
) -> Result<f64> {
    if transition.terminal {
        return Ok(transition.reward);
    }
    let core = actor.infer(&transition.next_state)?;
    let n_actions = core.len();
    let mu = controller_weight(pic, mu0, &transition.next_state, transition.action, n_actions)?;
    let mut mixed = vec![0.0; n_actions];
    mix_into(&core, Some(transition.action), mu, &mut mixed);
    let x = append_one_hot(&transition.next_state, Some(transition.action), n_actions);
    let q1 = target1.infer(&x)?;
    let q2 = target2.infer(&x)?;
    Ok(transition.reward + gamma * soft_value_min_twin(&mixed, &q1, &q2, alpha_mix))
}

fn require_nonempty(batch: &[Transition], context: &'static str) -> Result<()> {
    if batch.is_empty() {
        return Err(CoreError::InsufficientData {
            context,
            need: 1,
            got: 0,
        });
    }
    Ok(())
}

fn require_finite(loss: f64, context: &'static str) -> Result<f64> {
    if !loss.is_finite() {
        return Err(CoreError::invalid(context, "non-finite loss"));
    }
    Ok(loss)
}

/// Soft Bellman residual of both twin core critics on one minibatch.
/// Gradients for each twin accumulate into its `Grads`; the target `y` is a
/// constant. Returns the two mean losses.
#[allow(clippy::too_many_arguments)]
pub fn core_critic_loss(
    actor: &DenseNet,
    critic1: &DenseNet,
    critic2: &DenseNet,
    target1: &DenseNet,
    target2: &DenseNet,
    batch: &[Transition],
    gamma: f64,
    alpha_core: f64,
    grads1: &mut Grads,
    grads2: &mut Grads,
) -> Result<(f64, f64)> {
    require_nonempty(batch, "core_critic_loss batch")?;
    let n_actions = critic1.output_dim();
    let inv = 1.0 / batch.len() as f64;
    let mut dout = vec![0.0; n_actions];
    let (mut l1, mut l2) = (0.0, 0.0);
    for transition in batch {
        if transition.action >= n_actions {
            return Err(CoreError::IndexOutOfRange {
                context: "core_critic_loss action",
                index: transition.action,
                len: n_actions,
            });
        }
        let y = core_target_value(actor, target1, target2, transition, gamma, alpha_core)?;
        for (critic, grads, loss) in [
            (critic1, &mut *grads1, &mut l1),
            (critic2, &mut *grads2, &mut l2),
        ] {
            let cache = critic.forward(&transition.state)?;
            let residual = cache.output()[transition.action] - y;
            *loss += 0.5 * residual * residual * inv;
            dout.fill(0.0);
            dout[transition.action] = residual * inv;
            critic.backward(&cache, &dout, grads)?;
        }
    }
    require_finite(l1, "core_critic_loss")?;
    require_finite(l2, "core_critic_loss")?;
    Ok((l1, l2))
}

/// Expected KL-shaped actor objective
/// `E[ pi(a|s) * (alpha * ln pi(a|s) - min_i Q_i(s, a)) ]`; the critics are
/// constants, gradients flow through the actor alone.
pub fn core_actor_loss(
    actor: &DenseNet,
    critic1: &DenseNet,
    critic2: &DenseNet,
    batch: &[Transition],
    alpha_core: f64,
    grads: &mut Grads,
) -> Result<f64> {
    require_nonempty(batch, "core_actor_loss batch")?;
    let n_actions = critic1.output_dim();
    let inv = 1.0 / batch.len() as f64;
    let mut dout = vec![0.0; n_actions];
    let mut loss = 0.0;
    for transition in batch {
        let cache = actor.forward(&transition.state)?;
        let probs = cache.output();
        let q1 = critic1.infer(&transition.state)?;
        let q2 = critic2.infer(&transition.state)?;
        let mut sample_loss = 0.0;
        for a in 0..n_actions {
            let q_min = q1[a].min(q2[a]);
            let log_p = math::ln_floored(probs[a]);
            sample_loss += probs[a] * (alpha_core * log_p - q_min);
            dout[a] = (alpha_core * (log_p + 1.0) - q_min) * inv;
        }
        loss += sample_loss * inv;
        actor.backward(&cache, &dout, grads)?;
    }
    require_finite(loss, "core_actor_loss")
}

/// Soft Bellman residual of both twin mixed critics. `pic = None` pins the
/// inertia weight to zero (the reduction mode). The target mixes the frozen
/// core with the controller at the next state and is a constant.
#[allow(clippy::too_many_arguments)]
pub fn mix_critic_loss(
    actor: &DenseNet,
    pic: Option<&DenseNet>,
    mu0: f64,
    critic1: &DenseNet,
    critic2: &DenseNet,
    target1: &DenseNet,
    target2: &DenseNet,
    batch: &[Transition],
    gamma: f64,
    alpha_mix: f64,
    grads1: &mut Grads,
    grads2: &mut Grads,
) -> Result<(f64, f64)> {
    require_nonempty(batch, "mix_critic_loss batch")?;
    let n_actions = critic1.output_dim();
    let inv = 1.0 / batch.len() as f64;
    let mut dout = vec![0.0; n_actions];
    let (mut l1, mut l2) = (0.0, 0.0);
    for transition in batch {
        if transition.action >= n_actions {
            return Err(CoreError::IndexOutOfRange {
                context: "mix_critic_loss action",
                index: transition.action,
                len: n_actions,
            });
        }
        let y = mixed_target_value(actor, pic, mu0, target1, target2, transition, gamma, alpha_mix)?;
        let x = append_one_hot(&transition.state, transition.prev_action, n_actions);
        for (critic, grads, loss) in [
            (critic1, &mut *grads1, &mut l1),
            (critic2, &mut *grads2, &mut l2),
        ] {
            let cache = critic.forward(&x)?;
            let residual = cache.output()[transition.action] - y;
            *loss += 0.5 * residual * residual * inv;
            dout.fill(0.0);
            dout[transition.action] = residual * inv;
            critic.backward(&cache, &dout, grads)?;
        }
    }
    require_finite(l1, "mix_critic_loss")?;
    require_finite(l2, "mix_critic_loss")?;
    Ok((l1, l2))
}

/// Policy-improvement objective of the mixed policy with the core frozen:
/// `E[ mix(b) * (alpha * ln mix(b) - min_i Q_i(s, a_prev, b)) ]`.
///
/// Gradients flow only through the controller; the core distribution and
/// the online mixed critics are constants. Samples at an episode start
/// contribute their loss value (the mixture collapses to the core there)
/// but no gradient, since the controller plays no part in them.
pub fn pic_loss(
    pic: &DenseNet,
    actor: &DenseNet,
    critic1: &DenseNet,
    critic2: &DenseNet,
    batch: &[Transition],
    alpha_mix: f64,
    mu0: f64,
    grads: &mut Grads,
) -> Result<f64> {
    require_nonempty(batch, "pic_loss batch")?;
    let n_actions = critic1.output_dim();
    let inv = 1.0 / batch.len() as f64;
    let mut mixed = vec![0.0; n_actions];
    let mut loss = 0.0;
    for transition in batch {
        let core = actor.infer(&transition.state)?;
        let x = append_one_hot(&transition.state, transition.prev_action, n_actions);
        let q1 = critic1.infer(&x)?;
        let q2 = critic2.infer(&x)?;
        match transition.prev_action {
            None => {
                for a in 0..n_actions {
                    let q_min = q1[a].min(q2[a]);
                    loss += core[a] * (alpha_mix * math::ln_floored(core[a]) - q_min) * inv;
                }
            }
            Some(prev) => {
                if prev >= n_actions {
                    return Err(CoreError::IndexOutOfRange {
                        context: "pic_loss prev_action",
                        index: prev,
                        len: n_actions,
                    });
                }
                let cache = pic.forward(&x)?;
                let raw = (cache.output()[0] + 1.0) / 2.0;
                let mu = apply_lower_bound(raw, mu0).value;
                mix_into(&core, Some(prev), mu, &mut mixed);
                let mut sample_loss = 0.0;
                let mut d_mu = 0.0;
                for a in 0..n_actions {
                    let q_min = q1[a].min(q2[a]);
                    let log_m = math::ln_floored(mixed[a]);
                    sample_loss += mixed[a] * (alpha_mix * log_m - q_min);
                    // d mixed[a] / d mu: +(1 - core) on the reused action,
                    // -core elsewhere
                    let d_mixed = if a == prev { 1.0 - core[a] } else { -core[a] };
                    d_mu += d_mixed * (alpha_mix * (log_m + 1.0) - q_min);
                }
                loss += sample_loss * inv;
                // mu = mu0 + (1 - mu0) * (tanh + 1) / 2
                let d_raw = d_mu * (1.0 - mu0) * 0.5 * inv;
                pic.backward(&cache, &[d_raw], grads)?;
            }
        }
    }
    require_finite(loss, "pic_loss")
}

/// Losses from one inner (core) update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLosses {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
}

/// Losses from one outer (controller) update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterLosses {
    pub critic1: f64,
    pub critic2: f64,
    pub pic: f64,
}

/// One scheduled inner update: both twin critics step on jointly computed
/// gradients, the actor steps against the updated critics, the targets
/// soft-update last. The SAC baseline runs exactly this function, which is
/// what makes the zero-inertia reduction bitwise.
pub fn inner_update(
    actor: &mut OptNet,
    core: &mut TwinCritic,
    batch: &[Transition],
    gamma: f64,
    alpha_core: f64,
    lr_critic: f64,
    lr_actor: f64,
    sigma: f64,
) -> Result<InnerLosses> {
    let mut grads1 = Grads::zeros_like(&core.q1.net);
    let mut grads2 = Grads::zeros_like(&core.q2.net);
    let (critic1, critic2) = core_critic_loss(
        &actor.net,
        &core.q1.net,
        &core.q2.net,
        &core.target1,
        &core.target2,
        batch,
        gamma,
        alpha_core,
        &mut grads1,
        &mut grads2,
    )?;
    adam_step(&mut core.q1.net, &grads1, lr_critic, &mut core.q1.adam)?;
    adam_step(&mut core.q2.net, &grads2, lr_critic, &mut core.q2.adam)?;

    let mut actor_grads = Grads::zeros_like(&actor.net);
    let actor_loss = core_actor_loss(
        &actor.net,
        &core.q1.net,
        &core.q2.net,
        batch,
        alpha_core,
        &mut actor_grads,
    )?;
    adam_step(&mut actor.net, &actor_grads, lr_actor, &mut actor.adam)?;

    core.track_targets(sigma)?;
    Ok(InnerLosses {
        critic1,
        critic2,
        actor: actor_loss,
    })
}

/// One scheduled outer update, mirroring [`inner_update`] for the mixed
/// critics and the controller; the core actor is read-only here.
#[allow(clippy::too_many_arguments)]
pub fn outer_update(
    pic: &mut OptNet,
    mix: &mut TwinCritic,
    actor: &DenseNet,
    mu0: f64,
    batch: &[Transition],
    gamma: f64,
    alpha_mix: f64,
    lr_critic: f64,
    lr_pic: f64,
    sigma: f64,
) -> Result<OuterLosses> {
    let mut grads1 = Grads::zeros_like(&mix.q1.net);
    let mut grads2 = Grads::zeros_like(&mix.q2.net);
    let (critic1, critic2) = mix_critic_loss(
        actor,
        Some(&pic.net),
        mu0,
        &mix.q1.net,
        &mix.q2.net,
        &mix.target1,
        &mix.target2,
        batch,
        gamma,
        alpha_mix,
        &mut grads1,
        &mut grads2,
    )?;
    adam_step(&mut mix.q1.net, &grads1, lr_critic, &mut mix.q1.adam)?;
    adam_step(&mut mix.q2.net, &grads2, lr_critic, &mut mix.q2.adam)?;

    let mut pic_grads = Grads::zeros_like(&pic.net);
    let pic_loss_value = pic_loss(
        &pic.net,
        actor,
        &mix.q1.net,
        &mix.q2.net,
        batch,
        alpha_mix,
        mu0,
        &mut pic_grads,
    )?;
    adam_step(&mut pic.net, &pic_grads, lr_pic, &mut pic.adam)?;

    mix.track_targets(sigma)?;
    Ok(OuterLosses {
        critic1,
        critic2,
        pic: pic_loss_value,
    })
}

/// The nested agent: core actor, twin core critics, inertia controller,
/// twin mixed critics, their targets, and one shared replay buffer.
#[derive(Debug, Clone)]
pub struct NsacAgent {
    config: NsacConfig,
    state_dim: usize,
    n_actions: usize,
    actor: OptNet,
    core: TwinCritic,
    pic: OptNet,
    mix: TwinCritic,
    buffer: ReplayBuffer,
    action_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    /// Steps on which at least one update fired.
    train_events: u64,
}

/// Serialized agent state. Everything that determines future behavior is
/// here; the replay buffer is optional because it dominates the file size,
/// but an exact resume requires it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NsacCheckpoint {
    pub config: NsacConfig,
    pub state_dim: usize,
    pub n_actions: usize,
    pub actor: OptNet,
    pub core: TwinCritic,
    pub pic: OptNet,
    pub mix: TwinCritic,
    pub action_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
    pub train_events: u64,
    #[serde(default)]
    pub buffer: Option<ReplayBuffer>,
}

impl NsacAgent {
    pub fn new(
        state_dim: usize,
        n_actions: usize,
        config: NsacConfig,
        master_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 {
            return Err(CoreError::invalid("NsacAgent", "state_dim must be positive"));
        }
        if n_actions < 2 {
            return Err(CoreError::invalid("NsacAgent", "need at least two actions"));
        }
        let h = config.hidden;
        let core_sizes = [state_dim, h, h, n_actions];
        let aug_sizes = [state_dim + n_actions, h, h, n_actions];
        let pic_sizes = [state_dim + n_actions, h, h, 1];
        let actor = DenseNet::new(
            &core_sizes,
            &[Activation::Relu, Activation::Relu, Activation::Softmax],
            &mut substream_rng(master_seed, stream::ACTOR_INIT),
        )?;
        let critic_acts = [Activation::Relu, Activation::Relu, Activation::None];
        let core = TwinCritic::new(
            &core_sizes,
            &critic_acts,
            &mut substream_rng(master_seed, stream::CORE_CRITIC1_INIT),
            &mut substream_rng(master_seed, stream::CORE_CRITIC2_INIT),
        )?;
        let pic = DenseNet::new(
            &pic_sizes,
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
            &mut substream_rng(master_seed, stream::PIC_INIT),
        )?;
        let mix = TwinCritic::new(
            &aug_sizes,
            &critic_acts,
            &mut substream_rng(master_seed, stream::MIX_CRITIC1_INIT),
            &mut substream_rng(master_seed, stream::MIX_CRITIC2_INIT),
        )?;
        Ok(NsacAgent {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            config,
            state_dim,
            n_actions,
            actor: OptNet::new(actor),
            core,
            pic: OptNet::new(pic),
            mix,
            action_rng: substream_rng(master_seed, stream::ACTION),
            replay_rng: substream_rng(master_seed, stream::REPLAY),
            train_events: 0,
        })
    }

    pub fn config(&self) -> &NsacConfig {
        &self.config
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn train_events(&self) -> u64 {
        self.train_events
    }

    /// Inertia weight at (`state`, `prev`), honoring the reduction pin.
    fn inertia_weight(&self, state: &[f64], prev: usize) -> Result<f64> {
        let pic = if self.config.force_zero_mu {
            None
        } else {
            Some(&self.pic.net)
        };
        controller_weight(pic, self.config.mu0, state, prev, self.n_actions)
    }

    /// Full agent state for serialization. Skipping the buffer keeps the
    /// checkpoint small; including it makes a resume bitwise-exact.
    pub fn checkpoint(&self, include_buffer: bool) -> NsacCheckpoint {
        NsacCheckpoint {
            config: self.config,
            state_dim: self.state_dim,
            n_actions: self.n_actions,
            actor: self.actor.clone(),
            core: self.core.clone(),
            pic: self.pic.clone(),
            mix: self.mix.clone(),
            action_rng: self.action_rng.clone(),
            replay_rng: self.replay_rng.clone(),
            train_events: self.train_events,
            buffer: include_buffer.then(|| self.buffer.clone()),
        }
    }

    /// Rebuilds an agent from a checkpoint; a missing buffer comes back
    /// empty at the configured capacity.
    pub fn restore(snapshot: NsacCheckpoint) -> Result<Self> {
        snapshot.config.validate()?;
        let expect = |cond: bool, what: &'static str| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(CoreError::invalid("NsacAgent::restore", what))
            }
        };
        let (s, n) = (snapshot.state_dim, snapshot.n_actions);
        expect(snapshot.actor.net.input_dim() == s, "actor input dim mismatch")?;
        expect(snapshot.actor.net.output_dim() == n, "actor output dim mismatch")?;
        expect(snapshot.core.q1.net.input_dim() == s, "core critic input dim mismatch")?;
        expect(snapshot.core.q1.net.output_dim() == n, "core critic output dim mismatch")?;
        expect(snapshot.pic.net.input_dim() == s + n, "controller input dim mismatch")?;
        expect(snapshot.pic.net.output_dim() == 1, "controller output dim mismatch")?;
        expect(snapshot.mix.q1.net.input_dim() == s + n, "mixed critic input dim mismatch")?;
        expect(snapshot.mix.q1.net.output_dim() == n, "mixed critic output dim mismatch")?;
        expect(
            snapshot.core.q1.net.same_architecture(&snapshot.core.target1)
                && snapshot.core.q2.net.same_architecture(&snapshot.core.target2)
                && snapshot.mix.q1.net.same_architecture(&snapshot.mix.target1)
                && snapshot.mix.q2.net.same_architecture(&snapshot.mix.target2),
            "target architecture mismatch",
        )?;
        let buffer = match snapshot.buffer {
            Some(buffer) => buffer,
            None => ReplayBuffer::new(snapshot.config.buffer_capacity)?,
        };
        Ok(NsacAgent {
            config: snapshot.config,
            state_dim: s,
            n_actions: n,
            actor: snapshot.actor,
            core: snapshot.core,
            pic: snapshot.pic,
            mix: snapshot.mix,
            buffer,
            action_rng: snapshot.action_rng,
            replay_rng: snapshot.replay_rng,
            train_events: snapshot.train_events,
        })
    }
}

impl Agent for NsacAgent {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&mut self, state: &[f64], prev_action: Option<usize>, mode: ActMode) -> Result<usize> {
        let probs = self.policy_probs(state, prev_action)?;
        Ok(match mode {
            ActMode::Greedy => math::argmax_low(&probs),
            ActMode::Sample => math::sample_categorical(&probs, self.action_rng.gen::<f64>()),
        })
    }

    fn policy_probs(&self, state: &[f64], prev_action: Option<usize>) -> Result<Vec<f64>> {
        let core = self.actor.net.infer(state)?;
        match prev_action {
            None => Ok(core),
            Some(prev) => {
                if prev >= self.n_actions {
                    return Err(CoreError::IndexOutOfRange {
                        context: "policy_probs prev_action",
                        index: prev,
                        len: self.n_actions,
                    });
                }
                let mu = self.inertia_weight(state, prev)?;
                let mut probs = vec![0.0; self.n_actions];
                mix_into(&core, Some(prev), mu, &mut probs);
                Ok(probs)
            }
        }
    }

    fn pic_weight(&self, state: &[f64], prev_action: Option<usize>) -> Result<Option<f64>> {
        match prev_action {
            None => Ok(None),
            Some(prev) => {
                if prev >= self.n_actions {
                    return Err(CoreError::IndexOutOfRange {
                        context: "pic_weight prev_action",
                        index: prev,
                        len: self.n_actions,
                    });
                }
                self.inertia_weight(state, prev).map(Some)
            }
        }
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
        let inner_due = env_step % self.config.m_core == 0;
        let outer_due = self.config.outer_updates && env_step % self.config.m_mix == 0;
        if !inner_due && !outer_due {
            return Ok(None);
        }
        let batch = sample_batch(&self.buffer, self.config.batch_size, &mut self.replay_rng)?;
        let mut record = LossRecord::default();
        if inner_due {
            let losses = inner_update(
                &mut self.actor,
                &mut self.core,
                &batch,
                self.config.gamma,
                self.config.alpha_core,
                self.config.lr_core_critic,
                self.config.lr_core_actor,
                self.config.sigma_core,
            )?;
            record.core_q = Some(0.5 * (losses.critic1 + losses.critic2));
            record.core_pi = Some(losses.actor);
        }
        if outer_due {
            let losses = outer_update(
                &mut self.pic,
                &mut self.mix,
                &self.actor.net,
                self.config.mu0,
                &batch,
                self.config.gamma,
                self.config.alpha_mix,
                self.config.lr_mix_critic,
                self.config.lr_pic,
                self.config.sigma_mix,
            )?;
            record.mix_q = Some(0.5 * (losses.critic1 + losses.critic2));
            record.pic = Some(losses.pic);
        }
        self.train_events += 1;
        Ok(Some(record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    /// Sets the final-layer biases, which are the last parameters in flat
    /// order; on an all-zero net this pins the outputs exactly.
    fn set_final_bias(net: &mut DenseNet, values: &[f64]) {
        let total = net.param_count();
        let out = net.output_dim();
        assert_eq!(values.len(), out);
        for (k, &v) in values.iter().enumerate() {
            *net.param_mut(total - out + k) = v;
        }
    }

    fn zeros_critic(state_dim: usize, n_actions: usize, bias: &[f64]) -> DenseNet {
        let mut net = DenseNet::zeros(
            &[state_dim, 3, 3, n_actions],
            &[Activation::Relu, Activation::Relu, Activation::None],
        )
        .unwrap();
        set_final_bias(&mut net, bias);
        net
    }

    fn zeros_actor(state_dim: usize, n_actions: usize) -> DenseNet {
        DenseNet::zeros(
            &[state_dim, 3, 3, n_actions],
            &[Activation::Relu, Activation::Relu, Activation::Softmax],
        )
        .unwrap()
    }

    fn transition(
        state: &[f64],
        prev: Option<usize>,
        action: usize,
        reward: f64,
        next: &[f64],
        terminal: bool,
    ) -> Transition {
        Transition {
            state: state.to_vec(),
            prev_action: prev,
            action,
            reward,
            next_state: next.to_vec(),
            terminal,
        }
    }

    fn tiny_config() -> NsacConfig {
        NsacConfig {
            hidden: 4,
            batch_size: 8,
            buffer_capacity: 64,
            ..NsacConfig::default()
        }
    }

    /// Feeds a fixed synthetic stream of states and rewards; the agent's own
    /// actions close the loop. Returns the per-step loss records and the
    /// carried previous action, so a run can be resumed mid-stream.
    fn drive(
        agent: &mut NsacAgent,
        start: u64,
        steps: u64,
        mut prev: Option<usize>,
    ) -> (Vec<Option<LossRecord>>, Option<usize>) {
        let mut records = Vec::new();
        for t in start..start + steps {
            let phase = t as f64 * 0.37;
            let state = vec![math::cos(phase), math::cos(1.7 * phase + 0.5), 0.1];
            let next_phase = (t + 1) as f64 * 0.37;
            let next = vec![math::cos(next_phase), math::cos(1.7 * next_phase + 0.5), 0.1];
            let action = agent.act(&state, prev, ActMode::Sample).unwrap();
            let reward = if action == 0 { 0.3 } else { -0.1 } + 0.05 * state[0];
            let terminal = t % 17 == 16;
            agent
                .record(transition(&state, prev, action, reward, &next, terminal))
                .unwrap();
            records.push(agent.train_step(t).unwrap());
            prev = if terminal { None } else { Some(action) };
        }
        (records, prev)
    }

    #[test]
    fn config_defaults_match_the_reference_table() {
        let c = NsacConfig::default();
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.alpha_core, 0.1);
        assert_eq!(c.alpha_mix, 0.01);
        assert_eq!(c.lr_core_critic, 3e-4);
        assert_eq!(c.lr_core_actor, 3e-4);
        assert_eq!(c.lr_mix_critic, 3e-4);
        assert_eq!(c.lr_pic, 3e-4);
        assert_eq!(c.sigma_core, 0.002);
        assert_eq!(c.sigma_mix, 0.002);
        assert_eq!(c.m_core, 2);
        assert_eq!(c.m_mix, 2);
        assert_eq!(c.mu0, 0.0);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.buffer_capacity, 200_000);
        assert_eq!(c.hidden, 64);
        assert!(c.outer_updates);
        assert!(!c.force_zero_mu);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn config_validation_rejects_out_of_range_fields() {
        let base = NsacConfig::default();
        assert!(NsacConfig { gamma: 1.0, ..base }.validate().is_err());
        assert!(NsacConfig { alpha_core: -0.1, ..base }.validate().is_err());
        assert!(NsacConfig { lr_pic: 0.0, ..base }.validate().is_err());
        assert!(NsacConfig { sigma_mix: 1.5, ..base }.validate().is_err());
        assert!(NsacConfig { m_core: 0, ..base }.validate().is_err());
        assert!(NsacConfig { mu0: 1.01, ..base }.validate().is_err());
        assert!(NsacConfig { batch_size: 0, ..base }.validate().is_err());
        assert!(NsacConfig { buffer_capacity: 63, ..base }.validate().is_err());
        assert!(NsacConfig { hidden: 0, ..base }.validate().is_err());
    }

    #[test]
    fn new_agent_wires_dimensions_and_equal_targets() {
        let agent = NsacAgent::new(3, 2, tiny_config(), 11).unwrap();
        assert_eq!(agent.actor.net.input_dim(), 3);
        assert_eq!(agent.actor.net.output_dim(), 2);
        assert_eq!(agent.core.q1.net.input_dim(), 3);
        assert_eq!(agent.pic.net.input_dim(), 5);
        assert_eq!(agent.pic.net.output_dim(), 1);
        assert_eq!(agent.mix.q1.net.input_dim(), 5);
        assert_eq!(agent.mix.q1.net.output_dim(), 2);
        assert_eq!(agent.core.q1.net, agent.core.target1);
        assert_eq!(agent.mix.q2.net, agent.mix.target2);
        assert!(NsacAgent::new(0, 2, tiny_config(), 0).is_err());
        assert!(NsacAgent::new(3, 1, tiny_config(), 0).is_err());
    }

    #[test]
    fn saturated_controller_always_repeats_the_previous_action() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 5).unwrap();
        agent.pic.net = DenseNet::zeros(
            &[5, 4, 4, 1],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        set_final_bias(&mut agent.pic.net, &[20.0]);
        let state = [0.2, -0.4, 0.9];
        assert_eq!(agent.pic_weight(&state, Some(1)).unwrap(), Some(1.0));
        for _ in 0..50 {
            assert_eq!(agent.act(&state, Some(1), ActMode::Sample).unwrap(), 1);
        }
        let probs = agent.policy_probs(&state, Some(1)).unwrap();
        assert_eq!(probs, vec![0.0, 1.0]);
    }

    #[test]
    fn null_previous_action_short_circuits_to_the_core() {
        let agent = NsacAgent::new(3, 2, tiny_config(), 6).unwrap();
        let state = [0.3, 0.1, -0.7];
        let core = agent.actor.net.infer(&state).unwrap();
        assert_eq!(agent.policy_probs(&state, None).unwrap(), core);
        assert_eq!(agent.pic_weight(&state, None).unwrap(), None);
    }

    #[test]
    fn greedy_mode_takes_the_lowest_index_argmax() {
        let mut agent = NsacAgent::new(3, 3, tiny_config(), 7).unwrap();
        agent.actor.net = zeros_actor(3, 3);
        agent.config.force_zero_mu = true;
        // uniform probabilities: tie breaks to action 0
        assert_eq!(agent.act(&[0.0; 3], Some(2), ActMode::Greedy).unwrap(), 0);
    }

    #[test]
    fn pinned_inertia_reports_zero_and_skips_the_controller() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 8).unwrap();
        agent.config.force_zero_mu = true;
        // saturate the controller; the pin must still win
        set_final_bias(&mut agent.pic.net, &[20.0]);
        let state = [0.1, 0.2, 0.3];
        assert_eq!(agent.pic_weight(&state, Some(0)).unwrap(), Some(0.0));
        let core = agent.actor.net.infer(&state).unwrap();
        assert_eq!(agent.policy_probs(&state, Some(0)).unwrap(), core);
    }

    #[test]
    fn core_critic_terminal_with_exact_prediction_has_zero_loss() {
        let actor = zeros_actor(2, 2);
        let critic = zeros_critic(2, 2, &[1.0, -3.0]);
        let target = zeros_critic(2, 2, &[9.9, 9.9]);
        let batch = [transition(&[0.4, 0.6], None, 0, 1.0, &[0.0, 0.0], true)];
        let mut g1 = Grads::zeros_like(&critic);
        let mut g2 = Grads::zeros_like(&critic);
        let (l1, _) = core_critic_loss(
            &actor, &critic, &critic, &target, &target, &batch, 0.99, 0.1, &mut g1, &mut g2,
        )
        .unwrap();
        assert_eq!(l1, 0.0);
        assert_eq!(g1.max_abs(), 0.0);
    }

    #[test]
    fn core_critic_zero_gamma_regresses_to_the_reward() {
        let actor = zeros_actor(2, 2);
        let critic = zeros_critic(2, 2, &[0.25, 0.0]);
        let target = zeros_critic(2, 2, &[7.0, -7.0]);
        let batch = [transition(&[0.4, 0.6], None, 0, 1.0, &[0.2, 0.2], false)];
        let mut g1 = Grads::zeros_like(&critic);
        let mut g2 = Grads::zeros_like(&critic);
        let (l1, _) = core_critic_loss(
            &actor, &critic, &critic, &target, &target, &batch, 0.0, 0.1, &mut g1, &mut g2,
        )
        .unwrap();
        // y = r = 1, prediction 0.25: loss = (0.75)^2 / 2
        assert!((l1 - 0.28125).abs() < 1e-15);
    }

    #[test]
    fn core_critic_target_matches_the_hand_calculation() {
        let actor = zeros_actor(2, 2);
        let critic1 = zeros_critic(2, 2, &[2.0, 0.0]);
        let critic2 = zeros_critic(2, 2, &[0.0, 0.0]);
        let target1 = zeros_critic(2, 2, &[0.8, 0.2]);
        let target2 = zeros_critic(2, 2, &[0.5, 0.6]);
        let batch = [transition(&[0.4, 0.6], None, 0, 1.0, &[0.1, 0.9], false)];
        let mut g1 = Grads::zeros_like(&critic1);
        let mut g2 = Grads::zeros_like(&critic2);
        let (l1, l2) = core_critic_loss(
            &actor, &critic1, &critic2, &target1, &target2, &batch, 0.99, 0.1, &mut g1, &mut g2,
        )
        .unwrap();
        // uniform core over twin-min targets [0.5, 0.2]:
        // v = 0.5 * 0.5 + 0.5 * 0.2 + 0.1 * ln 2, y = 1 + 0.99 * v
        let v = 0.35 + 0.1 * core::f64::consts::LN_2;
        let y = 1.0 + 0.99 * v;
        assert!((l1 - 0.5 * (2.0 - y) * (2.0 - y)).abs() < 1e-10);
        assert!((l2 - 0.5 * y * y).abs() < 1e-10);
    }

    #[test]
    fn core_actor_flat_value_under_zero_temperature_has_zero_gradient() {
        let actor = zeros_actor(2, 3);
        let critic = zeros_critic(2, 3, &[0.7, 0.7, 0.7]);
        let batch = [transition(&[0.4, 0.6], None, 0, 0.0, &[0.0, 0.0], false)];
        let mut grads = Grads::zeros_like(&actor);
        let loss =
            core_actor_loss(&actor, &critic, &critic, &batch, 0.0, &mut grads).unwrap();
        assert!((loss + 0.7).abs() < 1e-15);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn core_actor_gradient_lifts_the_favored_logit() {
        let actor = zeros_actor(2, 3);
        let critic = zeros_critic(2, 3, &[0.0, 5.0, 0.0]);
        let batch = [transition(&[0.4, 0.6], None, 0, 0.0, &[0.0, 0.0], false)];
        let mut grads = Grads::zeros_like(&actor);
        core_actor_loss(&actor, &critic, &critic, &batch, 0.01, &mut grads).unwrap();
        // descent on a negative bias gradient raises the favored action's
        // logit and nothing else rises with it
        assert!(grads.b[2][1] < 0.0);
        assert!(grads.b[2][0] > 0.0);
        assert!(grads.b[2][2] > 0.0);
    }

    #[test]
    fn mix_critic_terminal_with_exact_prediction_has_zero_loss() {
        let actor = zeros_actor(2, 2);
        let pic = DenseNet::zeros(
            &[4, 3, 1],
            &[Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        let critic = zeros_critic(4, 2, &[-0.5, 2.0]);
        let target = zeros_critic(4, 2, &[1.0, 1.0]);
        let batch = [transition(&[0.4, 0.6], Some(1), 1, 2.0, &[0.0, 0.0], true)];
        let mut g1 = Grads::zeros_like(&critic);
        let mut g2 = Grads::zeros_like(&critic);
        let (l1, _) = mix_critic_loss(
            &actor,
            Some(&pic),
            0.0,
            &critic,
            &critic,
            &target,
            &target,
            &batch,
            0.99,
            0.01,
            &mut g1,
            &mut g2,
        )
        .unwrap();
        assert_eq!(l1, 0.0);
        assert_eq!(g1.max_abs(), 0.0);
    }

    #[test]
    fn mix_critic_with_pinned_inertia_reproduces_the_core_target() {
        // critics built from biases only, so the extra one-hot inputs are
        // inert and the mixed target arithmetic can be compared head-on
        let actor = zeros_actor(2, 2);
        let core_t1 = zeros_critic(2, 2, &[0.8, 0.2]);
        let core_t2 = zeros_critic(2, 2, &[0.5, 0.6]);
        let mix_t1 = zeros_critic(4, 2, &[0.8, 0.2]);
        let mix_t2 = zeros_critic(4, 2, &[0.5, 0.6]);
        let core_online = zeros_critic(2, 2, &[1.5, 0.0]);
        let mix_online = zeros_critic(4, 2, &[1.5, 0.0]);
        let alpha = 0.1;
        let batch_core = [transition(&[0.4, 0.6], Some(1), 0, 1.0, &[0.1, 0.9], false)];
        let mut g1 = Grads::zeros_like(&core_online);
        let mut g2 = Grads::zeros_like(&core_online);
        let (core_l1, core_l2) = core_critic_loss(
            &actor, &core_online, &core_online, &core_t1, &core_t2, &batch_core, 0.99, alpha,
            &mut g1, &mut g2,
        )
        .unwrap();
        let mut g1 = Grads::zeros_like(&mix_online);
        let mut g2 = Grads::zeros_like(&mix_online);
        let (mix_l1, mix_l2) = mix_critic_loss(
            &actor,
            None,
            0.0,
            &mix_online,
            &mix_online,
            &mix_t1,
            &mix_t2,
            &batch_core,
            0.99,
            alpha,
            &mut g1,
            &mut g2,
        )
        .unwrap();
        assert_eq!(mix_l1, core_l1);
        assert_eq!(mix_l2, core_l2);
    }

    #[test]
    fn pic_gradient_seeks_entropy_when_values_are_flat() {
        // uniform core and flat Q: the mixture is most entropic at mu = 0,
        // so the objective increases in mu and the bias gradient is positive
        let actor = zeros_actor(2, 2);
        let mut pic = DenseNet::zeros(
            &[4, 3, 3, 1],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        set_final_bias(&mut pic, &[0.0]);
        let critic = zeros_critic(4, 2, &[0.3, 0.3]);
        let batch = [transition(&[0.4, 0.6], Some(0), 0, 0.0, &[0.0, 0.0], false)];
        let mut grads = Grads::zeros_like(&pic);
        pic_loss(&pic, &actor, &critic, &critic, &batch, 0.5, 0.0, &mut grads).unwrap();
        assert!(grads.b[2][0] > 0.0);
    }

    #[test]
    fn pic_gradient_raises_mu_when_the_previous_action_dominates() {
        let actor = zeros_actor(2, 2);
        let pic = DenseNet::zeros(
            &[4, 3, 3, 1],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        let critic = zeros_critic(4, 2, &[5.0, 0.0]);
        let batch = [transition(&[0.4, 0.6], Some(0), 0, 0.0, &[0.0, 0.0], false)];
        let mut grads = Grads::zeros_like(&pic);
        pic_loss(&pic, &actor, &critic, &critic, &batch, 1e-6, 0.0, &mut grads).unwrap();
        // descent lowers the loss by raising mu toward the reused action
        assert!(grads.b[2][0] < 0.0);
    }

    #[test]
    fn pic_loss_at_episode_starts_reduces_to_the_core_and_has_no_gradient() {
        let actor = zeros_actor(2, 2);
        let pic = DenseNet::zeros(
            &[4, 3, 3, 1],
            &[Activation::Relu, Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        let critic = zeros_critic(4, 2, &[0.9, 0.1]);
        let batch = [transition(&[0.4, 0.6], None, 0, 0.0, &[0.0, 0.0], false)];
        let mut grads = Grads::zeros_like(&pic);
        let loss = pic_loss(&pic, &actor, &critic, &critic, &batch, 0.01, 0.0, &mut grads).unwrap();
        // uniform core, q = [0.9, 0.1]: loss = 0.01 ln(1/2) - 0.5
        let expect = 0.01 * math::ln(0.5) - 0.5;
        assert!((loss - expect).abs() < 1e-15);
        assert_eq!(grads.max_abs(), 0.0);
    }

    fn random_net(sizes: &[usize], acts: &[Activation], seed: u64) -> DenseNet {
        DenseNet::new(sizes, acts, &mut substream_rng(seed, 99)).unwrap()
    }

    fn random_batch(seed: u64) -> Vec<Transition> {
        let mut rng = substream_rng(seed, 98);
        let draw_state = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let mut batch = Vec::new();
        for k in 0..4 {
            let state = draw_state(&mut rng);
            let next = draw_state(&mut rng);
            batch.push(Transition {
                state,
                prev_action: if k == 0 { None } else { Some(k % 2) },
                action: (k + 1) % 2,
                reward: rng.gen_range(-1.0..1.0),
                next_state: next,
                terminal: k == 2,
            });
        }
        batch
    }

    /// Central finite differences on `loss` over every parameter of `net`,
    /// compared against the analytic `grads`.
    fn assert_matches_finite_differences(
        net: &DenseNet,
        grads: &Grads,
        loss: impl Fn(&DenseNet) -> f64,
    ) {
        let h = 1e-5;
        for idx in 0..net.param_count() {
            let mut plus = net.clone();
            *plus.param_mut(idx) += h;
            let mut minus = net.clone();
            *minus.param_mut(idx) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = DenseNet::grad_entry(grads, net, idx);
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {idx}: analytic {an} vs fd {fd}");
        }
    }

    #[test]
    fn core_critic_gradients_match_finite_differences() {
        let acts = [Activation::Relu, Activation::Relu, Activation::None];
        let actor = random_net(&[3, 4, 4, 2], &[Activation::Relu, Activation::Relu, Activation::Softmax], 1);
        let critic1 = random_net(&[3, 4, 4, 2], &acts, 2);
        let critic2 = random_net(&[3, 4, 4, 2], &acts, 3);
        let target1 = random_net(&[3, 4, 4, 2], &acts, 4);
        let target2 = random_net(&[3, 4, 4, 2], &acts, 5);
        let batch = random_batch(6);
        let mut g1 = Grads::zeros_like(&critic1);
        let mut g2 = Grads::zeros_like(&critic2);
        core_critic_loss(
            &actor, &critic1, &critic2, &target1, &target2, &batch, 0.99, 0.1, &mut g1, &mut g2,
        )
        .unwrap();
        let loss_of = |which: usize, candidate: &DenseNet| -> f64 {
            let mut d1 = Grads::zeros_like(&critic1);
            let mut d2 = Grads::zeros_like(&critic2);
            let (l1, l2) = core_critic_loss(
                &actor,
                if which == 1 { candidate } else { &critic1 },
                if which == 2 { candidate } else { &critic2 },
                &target1,
                &target2,
                &batch,
                0.99,
                0.1,
                &mut d1,
                &mut d2,
            )
            .unwrap();
            if which == 1 {
                l1
            } else {
                l2
            }
        };
        assert_matches_finite_differences(&critic1, &g1, |net| loss_of(1, net));
        assert_matches_finite_differences(&critic2, &g2, |net| loss_of(2, net));
    }

    #[test]
    fn core_actor_gradients_match_finite_differences() {
        let acts = [Activation::Relu, Activation::Relu, Activation::None];
        let actor = random_net(&[3, 4, 4, 2], &[Activation::Relu, Activation::Relu, Activation::Softmax], 11);
        let critic1 = random_net(&[3, 4, 4, 2], &acts, 12);
        let critic2 = random_net(&[3, 4, 4, 2], &acts, 13);
        let batch = random_batch(14);
        let mut grads = Grads::zeros_like(&actor);
        core_actor_loss(&actor, &critic1, &critic2, &batch, 0.1, &mut grads).unwrap();
        assert_matches_finite_differences(&actor, &grads, |candidate| {
            let mut d = Grads::zeros_like(candidate);
            core_actor_loss(candidate, &critic1, &critic2, &batch, 0.1, &mut d).unwrap()
        });
    }

    #[test]
    fn mix_critic_gradients_match_finite_differences() {
        let acts = [Activation::Relu, Activation::Relu, Activation::None];
        let actor = random_net(&[3, 4, 4, 2], &[Activation::Relu, Activation::Relu, Activation::Softmax], 21);
        let pic = random_net(&[5, 4, 4, 1], &[Activation::Relu, Activation::Relu, Activation::Tanh], 22);
        let critic1 = random_net(&[5, 4, 4, 2], &acts, 23);
        let critic2 = random_net(&[5, 4, 4, 2], &acts, 24);
        let target1 = random_net(&[5, 4, 4, 2], &acts, 25);
        let target2 = random_net(&[5, 4, 4, 2], &acts, 26);
        let batch = random_batch(27);
        let mut g1 = Grads::zeros_like(&critic1);
        let mut g2 = Grads::zeros_like(&critic2);
        mix_critic_loss(
            &actor,
            Some(&pic),
            0.1,
            &critic1,
            &critic2,
            &target1,
            &target2,
            &batch,
            0.99,
            0.01,
            &mut g1,
            &mut g2,
        )
        .unwrap();
        let loss_of = |which: usize, candidate: &DenseNet| -> f64 {
            let mut d1 = Grads::zeros_like(&critic1);
            let mut d2 = Grads::zeros_like(&critic2);
            let (l1, l2) = mix_critic_loss(
                &actor,
                Some(&pic),
                0.1,
                if which == 1 { candidate } else { &critic1 },
                if which == 2 { candidate } else { &critic2 },
                &target1,
                &target2,
                &batch,
                0.99,
                0.01,
                &mut d1,
                &mut d2,
            )
            .unwrap();
            if which == 1 {
                l1
            } else {
                l2
            }
        };
        assert_matches_finite_differences(&critic1, &g1, |net| loss_of(1, net));
        assert_matches_finite_differences(&critic2, &g2, |net| loss_of(2, net));
    }

    #[test]
    fn pic_gradients_match_finite_differences() {
        let acts = [Activation::Relu, Activation::Relu, Activation::None];
        let actor = random_net(&[3, 4, 4, 2], &[Activation::Relu, Activation::Relu, Activation::Softmax], 31);
        let pic = random_net(&[5, 4, 4, 1], &[Activation::Relu, Activation::Relu, Activation::Tanh], 32);
        let critic1 = random_net(&[5, 4, 4, 2], &acts, 33);
        let critic2 = random_net(&[5, 4, 4, 2], &acts, 34);
        let batch = random_batch(35);
        let mut grads = Grads::zeros_like(&pic);
        pic_loss(&pic, &actor, &critic1, &critic2, &batch, 0.01, 0.2, &mut grads).unwrap();
        assert_matches_finite_differences(&pic, &grads, |candidate| {
            let mut d = Grads::zeros_like(candidate);
            pic_loss(candidate, &actor, &critic1, &critic2, &batch, 0.01, 0.2, &mut d).unwrap()
        });
    }

    #[test]
    fn losses_stay_finite_under_saturated_policies() {
        // exp(-2000) underflows to zero mass; the floored log keeps every
        // objective finite
        let mut actor = zeros_actor(2, 2);
        set_final_bias(&mut actor, &[1000.0, -1000.0]);
        let mut pic = DenseNet::zeros(
            &[4, 3, 1],
            &[Activation::Relu, Activation::Tanh],
        )
        .unwrap();
        set_final_bias(&mut pic, &[100.0]);
        let critic = zeros_critic(2, 2, &[1.0, -1.0]);
        let aug_critic = zeros_critic(4, 2, &[1.0, -1.0]);
        let batch = [
            transition(&[0.4, 0.6], Some(1), 0, 1.0, &[0.1, 0.9], false),
            transition(&[0.4, 0.6], None, 1, -1.0, &[0.1, 0.9], false),
        ];
        let probs = actor.infer(&[0.4, 0.6]).unwrap();
        assert_eq!(probs[1], 0.0);

        let mut g1 = Grads::zeros_like(&critic);
        let mut g2 = Grads::zeros_like(&critic);
        let (l1, l2) = core_critic_loss(
            &actor, &critic, &critic, &critic, &critic, &batch, 0.99, 0.1, &mut g1, &mut g2,
        )
        .unwrap();
        assert!(l1.is_finite() && l2.is_finite());

        let mut ga = Grads::zeros_like(&actor);
        let la = core_actor_loss(&actor, &critic, &critic, &batch, 0.1, &mut ga).unwrap();
        assert!(la.is_finite() && ga.max_abs().is_finite());

        let mut g1 = Grads::zeros_like(&aug_critic);
        let mut g2 = Grads::zeros_like(&aug_critic);
        let (m1, m2) = mix_critic_loss(
            &actor,
            Some(&pic),
            0.0,
            &aug_critic,
            &aug_critic,
            &aug_critic,
            &aug_critic,
            &batch,
            0.99,
            0.01,
            &mut g1,
            &mut g2,
        )
        .unwrap();
        assert!(m1.is_finite() && m2.is_finite());

        let mut gp = Grads::zeros_like(&pic);
        let lp = pic_loss(&pic, &actor, &aug_critic, &aug_critic, &batch, 0.01, 0.0, &mut gp)
            .unwrap();
        assert!(lp.is_finite() && gp.max_abs().is_finite());
    }

    #[test]
    fn empty_batches_are_rejected() {
        let actor = zeros_actor(2, 2);
        let critic = zeros_critic(2, 2, &[0.0, 0.0]);
        let mut g1 = Grads::zeros_like(&critic);
        let mut g2 = Grads::zeros_like(&critic);
        assert!(core_critic_loss(
            &actor, &critic, &critic, &critic, &critic, &[], 0.99, 0.1, &mut g1, &mut g2
        )
        .is_err());
        assert!(core_actor_loss(&actor, &critic, &critic, &[], 0.1, &mut g1).is_err());
    }

    #[test]
    fn warmup_gate_defers_updates_until_one_batch_is_stored() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 40).unwrap();
        let before = agent.checkpoint(false);
        for t in 0..agent.config.batch_size as u64 - 1 {
            agent
                .record(transition(&[0.1, 0.2, 0.3], None, 0, 0.5, &[0.1, 0.2, 0.3], false))
                .unwrap();
            assert_eq!(agent.train_step(t).unwrap(), None);
        }
        assert_eq!(agent.train_events(), 0);
        // parameters untouched during warm-up
        assert_eq!(
            serde_json::to_string(&before.actor).unwrap(),
            serde_json::to_string(&agent.actor).unwrap()
        );
        agent
            .record(transition(&[0.1, 0.2, 0.3], None, 1, 0.5, &[0.1, 0.2, 0.3], false))
            .unwrap();
        let record = agent.train_step(8).unwrap().expect("full batch fires");
        assert!(record.core_q.is_some());
        assert!(record.mix_q.is_some());
        assert!(record.epsilon.is_none());
        assert_eq!(agent.train_events(), 1);
    }

    #[test]
    fn schedule_fires_both_loops_on_even_steps_only() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 41).unwrap();
        for _ in 0..agent.config.batch_size {
            agent
                .record(transition(&[0.1, 0.2, 0.3], Some(0), 1, 0.5, &[0.3, 0.2, 0.1], false))
                .unwrap();
        }
        assert_eq!(agent.train_step(3).unwrap(), None);
        let record = agent.train_step(4).unwrap().unwrap();
        assert!(record.core_q.is_some() && record.core_pi.is_some());
        assert!(record.mix_q.is_some() && record.pic.is_some());

        let mut inner_only = NsacAgent::new(3, 2, NsacConfig {
            m_mix: 5,
            ..tiny_config()
        }, 41)
        .unwrap();
        for _ in 0..inner_only.config.batch_size {
            inner_only
                .record(transition(&[0.1, 0.2, 0.3], Some(0), 1, 0.5, &[0.3, 0.2, 0.1], false))
                .unwrap();
        }
        let record = inner_only.train_step(4).unwrap().unwrap();
        assert!(record.core_q.is_some());
        assert!(record.mix_q.is_none());
    }

    #[test]
    fn outer_only_training_leaves_core_parameters_untouched() {
        let config = NsacConfig {
            m_core: 1 << 40,
            m_mix: 2,
            ..tiny_config()
        };
        let mut agent = NsacAgent::new(3, 2, config, 42).unwrap();
        let actor_before = serde_json::to_string(&agent.actor).unwrap();
        let core_before = serde_json::to_string(&agent.core).unwrap();
        let pic_before = serde_json::to_string(&agent.pic).unwrap();
        let (_, _) = drive(&mut agent, 1, 60, None);
        assert!(agent.train_events() > 0);
        assert_eq!(serde_json::to_string(&agent.actor).unwrap(), actor_before);
        assert_eq!(serde_json::to_string(&agent.core).unwrap(), core_before);
        assert_ne!(serde_json::to_string(&agent.pic).unwrap(), pic_before);
    }

    #[test]
    fn inner_only_training_leaves_controller_parameters_untouched() {
        let config = NsacConfig {
            m_core: 2,
            m_mix: 1 << 40,
            ..tiny_config()
        };
        let mut agent = NsacAgent::new(3, 2, config, 43).unwrap();
        let pic_before = serde_json::to_string(&agent.pic).unwrap();
        let mix_before = serde_json::to_string(&agent.mix).unwrap();
        let actor_before = serde_json::to_string(&agent.actor).unwrap();
        let (_, _) = drive(&mut agent, 1, 60, None);
        assert!(agent.train_events() > 0);
        assert_eq!(serde_json::to_string(&agent.pic).unwrap(), pic_before);
        assert_eq!(serde_json::to_string(&agent.mix).unwrap(), mix_before);
        assert_ne!(serde_json::to_string(&agent.actor).unwrap(), actor_before);
    }

    #[test]
    fn target_networks_move_only_through_scheduled_soft_updates() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 44).unwrap();
        let t1_before = agent.core.target1.clone();
        // records alone never move targets
        for _ in 0..agent.config.batch_size {
            agent
                .record(transition(&[0.1, 0.2, 0.3], Some(0), 1, 0.5, &[0.3, 0.2, 0.1], false))
                .unwrap();
        }
        assert_eq!(agent.core.target1, t1_before);
        agent.train_step(2).unwrap().unwrap();
        assert_ne!(agent.core.target1, t1_before);
        // and the move is tiny: sigma-weighted toward the online net
        let gap: f64 = (0..agent.core.target1.param_count())
            .map(|i| (agent.core.target1.param(i) - t1_before.param(i)).abs())
            .fold(0.0, f64::max);
        assert!(gap < 0.05);
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let mut a = NsacAgent::new(3, 2, tiny_config(), 77).unwrap();
        let mut b = NsacAgent::new(3, 2, tiny_config(), 77).unwrap();
        let (ra, _) = drive(&mut a, 0, 120, None);
        let (rb, _) = drive(&mut b, 0, 120, None);
        assert_eq!(ra, rb);
        let ja: String = serde_json::to_string(&a.checkpoint(true)).unwrap();
        let jb: String = serde_json::to_string(&b.checkpoint(true)).unwrap();
        assert_eq!(ja, jb);

        let mut c = NsacAgent::new(3, 2, tiny_config(), 78).unwrap();
        let (rc, _) = drive(&mut c, 0, 120, None);
        assert_ne!(ra, rc);
    }

    #[test]
    fn checkpoint_with_buffer_resumes_bitwise() {
        let mut original = NsacAgent::new(3, 2, tiny_config(), 55).unwrap();
        let (_, prev) = drive(&mut original, 0, 90, None);

        let json = serde_json::to_string(&original.checkpoint(true)).unwrap();
        let snapshot: NsacCheckpoint = serde_json::from_str(&json).unwrap();
        let mut restored = NsacAgent::restore(snapshot).unwrap();

        let (ra, _) = drive(&mut original, 90, 40, prev);
        let (rb, _) = drive(&mut restored, 90, 40, prev);
        assert_eq!(ra, rb);
        assert!(ra.iter().any(|r| r.is_some()));
    }

    #[test]
    fn checkpoint_without_buffer_restores_parameters_but_not_experience() {
        let mut original = NsacAgent::new(3, 2, tiny_config(), 56).unwrap();
        drive(&mut original, 0, 30, None);
        assert!(original.buffer_len() > 0);
        let restored = NsacAgent::restore(original.checkpoint(false)).unwrap();
        assert_eq!(restored.buffer_len(), 0);
        assert_eq!(
            serde_json::to_string(&restored.actor).unwrap(),
            serde_json::to_string(&original.actor).unwrap()
        );
    }

    #[test]
    fn restore_rejects_mismatched_shapes() {
        let agent = NsacAgent::new(3, 2, tiny_config(), 57).unwrap();
        let mut snapshot = agent.checkpoint(false);
        snapshot.state_dim = 4;
        assert!(NsacAgent::restore(snapshot).is_err());
    }

    #[test]
    fn record_validates_dimensions_and_indices() {
        let mut agent = NsacAgent::new(3, 2, tiny_config(), 58).unwrap();
        assert!(agent
            .record(transition(&[0.0, 0.0], None, 0, 0.0, &[0.0; 3], false))
            .is_err());
        assert!(agent
            .record(transition(&[0.0; 3], None, 5, 0.0, &[0.0; 3], false))
            .is_err());
        assert!(agent
            .record(transition(&[0.0; 3], Some(2), 0, 0.0, &[0.0; 3], false))
            .is_err());
        assert!(agent.policy_probs(&[0.0; 3], Some(7)).is_err());
    }
}
