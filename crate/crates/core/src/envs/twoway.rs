//! A two-lane road with oncoming traffic, in the spirit of two-way
//! overtaking tasks.
//!
//! The ego car drives on the right lane of a two-way road. Slow traffic
//! ahead shares the right lane; oncoming traffic occupies the left lane.
//! Speed pays (0.8 at top speed), the left lane pays a 0.2 overtaking bonus,
//! and collisions end the episode with zero reward. "keep" is a genuine
//! no-op, so at the optimum several actions tie in value and oscillation is
//! driven by how the policy resolves those ties.
//!
//! Coordinates are relative to the ego car: a traffic car's position moves
//! by (its speed - ego speed) each step, and a collision is a same-lane car
//! crossing the origin during the step.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Env, StepOutcome};
use crate::error::CoreError;
use crate::Result;

pub const ACTION_KEEP: usize = 0;
pub const ACTION_LEFT: usize = 1;
pub const ACTION_RIGHT: usize = 2;
pub const ACTION_ACCEL: usize = 3;
pub const ACTION_DECEL: usize = 4;

const RIGHT_LANE: u8 = 0;
const LEFT_LANE: u8 = 1;
const SLOW_CAR_SPEED: f64 = 1.0;
const ONCOMING_SPEED: f64 = -2.0;
/// No second spawn while another car is within this gap of the spawn point.
const SPAWN_GAP: f64 = 8.0;
/// Cars this far outside the window are dropped.
const DESPAWN_MARGIN: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoWayMiniConfig {
    /// Spawn horizon: traffic appears this many cells ahead.
    pub lattice_length: i64,
    /// Per-step probability of an oncoming car appearing (left lane).
    pub oncoming_spawn_rate: f64,
    /// Per-step probability of a slow car appearing (right lane).
    pub slow_spawn_rate: f64,
    pub high_velocity_reward: f64,
    pub left_lane_reward: f64,
    pub collision_reward: f64,
    /// Fraction of the episode during which left-lane occupancy still pays;
    /// 1 means the budget never runs out.
    pub left_lane_constraint: f64,
    pub episode_len: usize,
    /// Closest traffic cars encoded into the observation.
    pub k_nearest: usize,
}

impl Default for TwoWayMiniConfig {
    fn default() -> Self {
        TwoWayMiniConfig {
            lattice_length: 40,
            oncoming_spawn_rate: 0.08,
            slow_spawn_rate: 0.08,
            high_velocity_reward: 0.8,
            left_lane_reward: 0.2,
            collision_reward: 0.0,
            left_lane_constraint: 1.0,
            episode_len: 100,
            k_nearest: 4,
        }
    }
}

impl TwoWayMiniConfig {
    pub fn simple() -> Self {
        Self::default()
    }

    /// Twice the traffic of [`TwoWayMiniConfig::simple`].
    pub fn complex() -> Self {
        let base = Self::default();
        TwoWayMiniConfig {
            oncoming_spawn_rate: 2.0 * base.oncoming_spawn_rate,
            slow_spawn_rate: 2.0 * base.slow_spawn_rate,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lattice_length < 10 {
            return Err(CoreError::invalid("TwoWayMiniConfig", "lattice_length must be at least 10"));
        }
        for (name, rate) in [
            ("oncoming_spawn_rate", self.oncoming_spawn_rate),
            ("slow_spawn_rate", self.slow_spawn_rate),
            ("left_lane_constraint", self.left_lane_constraint),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(CoreError::invalid(
                    "TwoWayMiniConfig",
                    alloc::format!("{name} outside [0, 1]"),
                ));
            }
        }
        if self.episode_len == 0 {
            return Err(CoreError::invalid("TwoWayMiniConfig", "episode_len must be positive"));
        }
        if self.k_nearest == 0 {
            return Err(CoreError::invalid("TwoWayMiniConfig", "k_nearest must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Car {
    /// Position relative to the ego car, in cells; positive is ahead.
    x: f64,
    lane: u8,
    /// Signed absolute speed; negative drives toward the ego car.
    speed: f64,
}

/// Actions: 0 = keep, 1 = left, 2 = right, 3 = accelerate, 4 = decelerate.
#[derive(Debug, Clone)]
pub struct TwoWayMini {
    config: TwoWayMiniConfig,
    rng: ChaCha8Rng,
    lane: u8,
    /// Ego speed in {1, 2, 3}.
    speed: i64,
    cars: Vec<Car>,
    steps: usize,
    left_lane_steps_used: usize,
    done: bool,
}

impl TwoWayMini {
    pub fn new(config: TwoWayMiniConfig) -> Result<Self> {
        config.validate()?;
        Ok(TwoWayMini {
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            lane: RIGHT_LANE,
            speed: 1,
            cars: Vec::new(),
            steps: 0,
            left_lane_steps_used: 0,
            done: true,
        })
    }

    fn left_lane_budget(&self) -> usize {
        // round() is unavailable without std; adding 0.5 before truncation
        // is fine for nonnegative budgets
        (self.config.left_lane_constraint * self.config.episode_len as f64 + 0.5) as usize
    }

    fn spawn_point_clear(&self, lane: u8) -> bool {
        let horizon = self.config.lattice_length as f64;
        self.cars
            .iter()
            .all(|c| c.lane != lane || (c.x - horizon).abs() >= SPAWN_GAP)
    }

    fn observe(&self) -> Vec<f64> {
        let l = self.config.lattice_length as f64;
        let mut obs = Vec::with_capacity(self.state_dim());
        obs.push(self.lane as f64);
        obs.push((self.speed - 1) as f64 / 2.0);
        let mut order: Vec<usize> = (0..self.cars.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            self.cars[a]
                .x
                .abs()
                .total_cmp(&self.cars[b].x.abs())
                .then(a.cmp(&b))
        });
        for slot in 0..self.config.k_nearest {
            match order.get(slot) {
                Some(&i) => {
                    let car = self.cars[i];
                    obs.push(car.x / l);
                    obs.push(car.lane as f64);
                    obs.push(car.speed / 3.0);
                }
                None => obs.extend_from_slice(&[0.0, 0.0, 0.0]),
            }
        }
        obs
    }
}

impl Env for TwoWayMini {
    fn state_dim(&self) -> usize {
        2 + 3 * self.config.k_nearest
    }

    fn n_actions(&self) -> usize {
        5
    }

    fn max_episode_len(&self) -> usize {
        self.config.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.lane = RIGHT_LANE;
        self.speed = 1;
        self.cars.clear();
        self.steps = 0;
        self.left_lane_steps_used = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(CoreError::StepAfterTerminal);
        }
        match action {
            ACTION_KEEP => {}
            // an impossible lane change is a no-op, not an error
            ACTION_LEFT => self.lane = LEFT_LANE,
            ACTION_RIGHT => self.lane = RIGHT_LANE,
            ACTION_ACCEL => self.speed = (self.speed + 1).min(3),
            ACTION_DECEL => self.speed = (self.speed - 1).max(1),
            _ => {
                return Err(CoreError::IndexOutOfRange {
                    context: "twoway action",
                    index: action,
                    len: 5,
                })
            }
        }

        let mut collided = false;
        for car in &mut self.cars {
            let before = car.x;
            car.x += car.speed - self.speed as f64;
            if car.lane == self.lane && before >= 0.0 && car.x <= 0.0 {
                collided = true;
            }
        }
        self.cars
            .retain(|c| (-DESPAWN_MARGIN..=self.config.lattice_length as f64 + DESPAWN_MARGIN).contains(&c.x));

        let horizon = self.config.lattice_length as f64;
        if self.rng.gen::<f64>() < self.config.oncoming_spawn_rate && self.spawn_point_clear(LEFT_LANE) {
            self.cars.push(Car {
                x: horizon,
                lane: LEFT_LANE,
                speed: ONCOMING_SPEED,
            });
        }
        if self.rng.gen::<f64>() < self.config.slow_spawn_rate && self.spawn_point_clear(RIGHT_LANE) {
            self.cars.push(Car {
                x: horizon,
                lane: RIGHT_LANE,
                speed: SLOW_CAR_SPEED,
            });
        }

        self.steps += 1;
        let reward;
        if collided {
            self.done = true;
            reward = self.config.collision_reward;
        } else {
            let mut r = self.config.high_velocity_reward * (self.speed - 1) as f64 / 2.0;
            if self.lane == LEFT_LANE {
                if self.left_lane_steps_used < self.left_lane_budget() {
                    r += self.config.left_lane_reward;
                }
                self.left_lane_steps_used += 1;
            }
            reward = r;
            self.done = self.steps >= self.config.episode_len;
        }
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            terminal: self.done,
        })
    }
}
