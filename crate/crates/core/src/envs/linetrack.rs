//! A 1-D tracking task: follow a drifting target along a line.
//!
//! The agent and target sit on integer cells of a line. Reward falls off
//! linearly with tracking distance, so cells adjacent to the target are
//! worth almost as much as the target cell itself, and the observation is
//! corrupted by Gaussian noise. Those two ingredients make jittery policies
//! score nearly as well as calm ones, which is exactly the regime where
//! action oscillation shows up.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, StepOutcome};
use crate::error::CoreError;
use crate::math;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineTrackConfig {
    /// Number of cells minus one; positions live in `[0, track_length]`.
    pub track_length: i64,
    /// Probability per step that the target moves one cell.
    pub drift_prob: f64,
    /// Std of the Gaussian noise added to each normalized observation entry.
    pub noise_std: f64,
    /// Multiplier on the proximity reward.
    pub reward_scale: f64,
    pub episode_len: usize,
}

impl Default for LineTrackConfig {
    fn default() -> Self {
        LineTrackConfig {
            track_length: 10,
            drift_prob: 0.35,
            noise_std: 0.1,
            reward_scale: 1.0,
            episode_len: 100,
        }
    }
}

impl LineTrackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.track_length < 1 {
            return Err(CoreError::invalid("LineTrackConfig", "track_length must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.drift_prob) {
            return Err(CoreError::invalid("LineTrackConfig", "drift_prob outside [0, 1]"));
        }
        if self.noise_std < 0.0 {
            return Err(CoreError::invalid("LineTrackConfig", "noise_std must be nonnegative"));
        }
        if self.episode_len == 0 {
            return Err(CoreError::invalid("LineTrackConfig", "episode_len must be positive"));
        }
        Ok(())
    }
}

/// Actions: 0 = down, 1 = stay, 2 = up.
#[derive(Debug, Clone)]
pub struct LineTrack {
    config: LineTrackConfig,
    rng: ChaCha8Rng,
    agent: i64,
    target: i64,
    steps: usize,
    done: bool,
}

impl LineTrack {
    pub fn new(config: LineTrackConfig) -> Result<Self> {
        config.validate()?;
        Ok(LineTrack {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            agent: 0,
            target: 0,
            steps: 0,
            done: true,
        })
    }

    fn observe(&mut self) -> Vec<f64> {
        let l = self.config.track_length as f64;
        let mut obs = vec![self.agent as f64 / l, self.target as f64 / l];
        if self.config.noise_std > 0.0 {
            for x in &mut obs {
                *x += self.config.noise_std * math::sample_standard_normal(&mut self.rng);
            }
        }
        obs
    }
}

impl Env for LineTrack {
    fn state_dim(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn max_episode_len(&self) -> usize {
        self.config.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = self.rng.gen_range(0..=self.config.track_length);
        self.target = self.rng.gen_range(0..=self.config.track_length);
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(CoreError::StepAfterTerminal);
        }
        if action >= 3 {
            return Err(CoreError::IndexOutOfRange {
                context: "linetrack action",
                index: action,
                len: 3,
            });
        }
        let l = self.config.track_length;
        self.agent = (self.agent + action as i64 - 1).clamp(0, l);
        if self.config.drift_prob > 0.0 && self.rng.gen::<f64>() < self.config.drift_prob {
            let dir = if self.rng.gen::<bool>() { 1 } else { -1 };
            self.target = (self.target + dir).clamp(0, l);
        }
        let dist = (self.agent - self.target).abs() as f64 / l as f64;
        let reward = self.config.reward_scale * (1.0 - dist).clamp(0.0, 1.0);
        self.steps += 1;
        // the time limit is part of the task: running out of budget ends the
        // episode with no bootstrap
        self.done = self.steps >= self.config.episode_len;
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            terminal: self.done,
        })
    }
}
