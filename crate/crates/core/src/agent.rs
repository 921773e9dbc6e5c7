//! Common contract for learning agents, plus the plumbing they share:
//! seeded substreams, network-with-optimizer bundles, and twin critics.
//!
//! The trait splits the behavior path from the evaluation path. `act`
//! consumes the agent's internal action stream and may explore;
//! `policy_probs` is the distribution the agent is evaluated on and never
//! mutates anything, so an evaluation rollout can sample it with its own RNG
//! and leave the training state untouched.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::net::{soft_update, AdamState, Activation, DenseNet};
use crate::replay::{ReplayBuffer, Transition};
use crate::Result;

/// Substream labels for [`math::substream_seed`]. Every consumer of
/// randomness gets its own stream off the master seed, so adding or removing
/// one consumer never shifts the draws seen by another.
///
/// SAC and NSAC use the same labels for the streams they have in common
/// (actor and core-critic init, action sampling, replay sampling); that is
/// what makes NSAC with the controller pinned to zero and outer updates
/// disabled reproduce SAC draw for draw.
pub mod stream {
    pub const ACTOR_INIT: u64 = 1;
    pub const CORE_CRITIC1_INIT: u64 = 2;
    pub const CORE_CRITIC2_INIT: u64 = 3;
    pub const PIC_INIT: u64 = 4;
    pub const MIX_CRITIC1_INIT: u64 = 5;
    pub const MIX_CRITIC2_INIT: u64 = 6;
    pub const ACTION: u64 = 7;
    pub const REPLAY: u64 = 8;
}

/// RNG for one named substream of `master`.
pub fn substream_rng(master: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(math::substream_seed(master, label))
}

/// How an agent turns a distribution into an action.
///
/// `Sample` is the training/behavior path (stochastic policies sample their
/// distribution; DQN follows its epsilon-greedy exploration rule). `Greedy`
/// takes the argmax with low-index tie-breaking and consumes no randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Losses produced by one training step. Fields an agent does not compute
/// stay `None` (the log layer renders those as `nan`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossRecord {
    /// Mean of the twin core-critic losses.
    pub core_q: Option<f64>,
    /// Core actor loss.
    pub core_pi: Option<f64>,
    /// Mean of the twin mixed-critic losses.
    pub mix_q: Option<f64>,
    /// Inertia-controller loss.
    pub pic: Option<f64>,
    /// Exploration rate after the update (epsilon-greedy agents only).
    pub epsilon: Option<f64>,
}

/// A discrete-action learner driven by the experiment loop.
pub trait Agent {
    fn state_dim(&self) -> usize;

    fn n_actions(&self) -> usize;

    /// Behavior action at `state` given the previous action (`None` at an
    /// episode start). `Sample` draws from the agent's internal action
    /// stream; `Greedy` is deterministic.
    fn act(&mut self, state: &[f64], prev_action: Option<usize>, mode: ActMode) -> Result<usize>;

    /// The distribution the agent is evaluated on. Never mutates the agent;
    /// exploration schedules do not apply (DQN reports its greedy one-hot).
    fn policy_probs(&self, state: &[f64], prev_action: Option<usize>) -> Result<Vec<f64>>;

    /// Inertia weight mu(state, prev_action) for agents that learn one;
    /// `None` for agents without a controller and at episode starts.
    fn pic_weight(&self, state: &[f64], prev_action: Option<usize>) -> Result<Option<f64>>;

    /// Stores one transition in the replay buffer.
    fn record(&mut self, transition: Transition) -> Result<()>;

    /// Runs whatever updates are scheduled at `env_step`. Returns `None`
    /// when nothing fired (off-schedule step or warm-up: buffer still below
    /// one batch).
    fn train_step(&mut self, env_step: u64) -> Result<Option<LossRecord>>;
}

/// A network bundled with its Adam accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptNet {
    pub net: DenseNet,
    pub adam: AdamState,
}

impl OptNet {
    pub fn new(net: DenseNet) -> Self {
        let adam = AdamState::new(&net);
        OptNet { net, adam }
    }
}

/// Twin critics with their target copies. Targets start equal to the
/// onlines and track them by soft updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinCritic {
    pub q1: OptNet,
    pub q2: OptNet,
    pub target1: DenseNet,
    pub target2: DenseNet,
}

impl TwinCritic {
    /// Two independently initialized critics of the same architecture.
    pub fn new(
        sizes: &[usize],
        activations: &[Activation],
        rng1: &mut impl Rng,
        rng2: &mut impl Rng,
    ) -> Result<Self> {
        let q1 = DenseNet::new(sizes, activations, rng1)?;
        let q2 = DenseNet::new(sizes, activations, rng2)?;
        let target1 = q1.clone();
        let target2 = q2.clone();
        Ok(TwinCritic {
            q1: OptNet::new(q1),
            q2: OptNet::new(q2),
            target1,
            target2,
        })
    }

    /// Soft-updates both targets toward their onlines at rate `sigma`.
    pub fn track_targets(&mut self, sigma: f64) -> Result<()> {
        soft_update(&mut self.target1, &self.q1.net, sigma)?;
        soft_update(&mut self.target2, &self.q2.net, sigma)
    }
}

/// `state` followed by a one-hot of the previous action; the null action
/// (episode start) encodes as all zeros.
pub fn append_one_hot(state: &[f64], prev_action: Option<usize>, n_actions: usize) -> Vec<f64> {
    debug_assert!(prev_action.map_or(true, |p| p < n_actions));
    let mut x = Vec::with_capacity(state.len() + n_actions);
    x.extend_from_slice(state);
    let base = x.len();
    x.resize(base + n_actions, 0.0);
    if let Some(p) = prev_action {
        x[base + p] = 1.0;
    }
    x
}

/// Clones a uniform minibatch out of the buffer. All agents draw through
/// this one helper so their replay streams advance identically.
pub fn sample_batch(
    buffer: &ReplayBuffer,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Transition>> {
    Ok(buffer
        .sample_indices(n, rng)?
        .into_iter()
        .map(|i| buffer.get(i).clone())
        .collect())
}

/// Dimension and index checks shared by every agent's `record`.
pub fn validate_transition(
    transition: &Transition,
    state_dim: usize,
    n_actions: usize,
) -> Result<()> {
    if transition.state.len() != state_dim {
        return Err(CoreError::DimensionMismatch {
            context: "transition state",
            expected: state_dim,
            got: transition.state.len(),
        });
    }
    if transition.next_state.len() != state_dim {
        return Err(CoreError::DimensionMismatch {
            context: "transition next_state",
            expected: state_dim,
            got: transition.next_state.len(),
        });
    }
    if transition.action >= n_actions {
        return Err(CoreError::IndexOutOfRange {
            context: "transition action",
            index: transition.action,
            len: n_actions,
        });
    }
    if let Some(p) = transition.prev_action {
        if p >= n_actions {
            return Err(CoreError::IndexOutOfRange {
                context: "transition prev_action",
                index: p,
                len: n_actions,
            });
        }
    }
    Ok(())
}
