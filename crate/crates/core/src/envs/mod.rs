//! Desk-scale episodic environments with vector observations.
//!
//! Both environments are built to make action oscillation the interesting
//! failure mode: near-symmetric optima plus stochasticity keep naive
//! policies flipping between closely-valued actions. An environment owns its
//! RNG, seeded at reset, so a seed plus an action sequence fixes the whole
//! trajectory.

mod linetrack;
mod twoway;

pub use linetrack::{LineTrack, LineTrackConfig};
pub use twoway::{TwoWayMini, TwoWayMiniConfig};

use alloc::vec::Vec;

use crate::Result;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic environment contract. Stepping a finished episode is an error;
/// reset first.
pub trait Env {
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn max_episode_len(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepOutcome>;

    /// Base environment steps the most recent `step` consumed: 1 unless a
    /// wrapper aggregates several, in which case step budgets must advance
    /// by this amount to stay comparable.
    fn last_step_cost(&self) -> usize {
        1
    }
}
