//! Finite-MDP representation, tabular policies, and trajectory machinery.
//!
//! An MDP is the tuple (S, A, r, P, rho0, gamma, T) with discrete states and
//! actions. Policies come in two tabular flavors: state-conditioned rows, and
//! rows conditioned on (state, previous action) with a distinguished null slot
//! for the first step of an episode.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::Result;

/// Probability rows must sum to 1 within this tolerance.
pub const DIST_TOL: f64 = 1e-12;

/// Table row index for the null previous action: real actions occupy
/// `0..n_actions`, the null slot sits at `n_actions`.
#[inline]
pub fn prev_slot(n_actions: usize, prev: Option<usize>) -> usize {
    match prev {
        Some(a) => a,
        None => n_actions,
    }
}

/// Checks one probability row; `index` only feeds the error message.
fn check_row(context: &'static str, index: usize, row: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(CoreError::InvalidDistribution {
                context,
                index,
                sum: p,
                tol: DIST_TOL,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(CoreError::InvalidDistribution {
            context,
            index,
            sum,
            tol: DIST_TOL,
        });
    }
    Ok(())
}

/// A finite Markov decision process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Transition probabilities indexed `[state][action][next_state]`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Rewards indexed `[state][action]`.
    pub reward: Vec<Vec<f64>>,
    /// Initial state distribution.
    pub rho0: Vec<f64>,
    /// Discount factor in `[0, 1)`.
    pub gamma: f64,
    /// Episode horizon `T` (a trajectory holds at most `T + 1` actions);
    /// `None` marks the unbounded case.
    pub horizon: Option<usize>,
}

impl MdpSpec {
    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(CoreError::invalid(
                "MdpSpec",
                "n_states and n_actions must be positive",
            ));
        }
        if self.transition.len() != self.n_states {
            return Err(CoreError::DimensionMismatch {
                context: "MdpSpec transition states",
                expected: self.n_states,
                got: self.transition.len(),
            });
        }
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != self.n_actions {
                return Err(CoreError::DimensionMismatch {
                    context: "MdpSpec transition actions",
                    expected: self.n_actions,
                    got: per_action.len(),
                });
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n_states {
                    return Err(CoreError::DimensionMismatch {
                        context: "MdpSpec transition row",
                        expected: self.n_states,
                        got: row.len(),
                    });
                }
                // flat index keeps the offending (s, a) recoverable
                check_row("MdpSpec transition", s * self.n_actions + a, row)?;
            }
        }
        if self.reward.len() != self.n_states {
            return Err(CoreError::DimensionMismatch {
                context: "MdpSpec reward states",
                expected: self.n_states,
                got: self.reward.len(),
            });
        }
        for (s, row) in self.reward.iter().enumerate() {
            if row.len() != self.n_actions {
                return Err(CoreError::DimensionMismatch {
                    context: "MdpSpec reward row",
                    expected: self.n_actions,
                    got: row.len(),
                });
            }
            for (a, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    return Err(CoreError::invalid(
                        "MdpSpec reward",
                        alloc::format!("reward[{s}][{a}] is not finite"),
                    ));
                }
            }
        }
        if self.rho0.len() != self.n_states {
            return Err(CoreError::DimensionMismatch {
                context: "MdpSpec rho0",
                expected: self.n_states,
                got: self.rho0.len(),
            });
        }
        check_row("MdpSpec rho0", 0, &self.rho0)?;
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(CoreError::invalid(
                "MdpSpec",
                alloc::format!("gamma {} outside [0, 1)", self.gamma),
            ));
        }
        if self.horizon == Some(0) {
            return Err(CoreError::invalid("MdpSpec", "horizon must be >= 1"));
        }
        Ok(())
    }

    /// Number of switch opportunities per full-length episode.
    pub fn finite_horizon(&self, context: &'static str) -> Result<usize> {
        self.horizon
            .ok_or(CoreError::UnboundedHorizon { context })
    }
}

/// Validates and returns the spec unchanged.
pub fn validate_mdp(spec: MdpSpec) -> Result<MdpSpec> {
    spec.validate()?;
    Ok(spec)
}

/// Anything that yields an action distribution given (state, previous action).
///
/// The null previous action marks the first decision of an episode.
pub trait DecisionRule {
    fn n_actions(&self) -> usize;
    /// Writes the action distribution for `(state, prev)` into `out`
    /// (length `n_actions`).
    fn write_probs(&self, state: usize, prev: Option<usize>, out: &mut [f64]);
}

/// A policy conditioned on state only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    /// Rows indexed `[state][action]`.
    pub probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    /// Uniform policy over `n_actions` in every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        TabularPolicy {
            probs: vec![vec![p; n_actions]; n_states],
        }
    }

    /// Deterministic policy selecting `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        TabularPolicy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.probs.len() != n_states {
            return Err(CoreError::DimensionMismatch {
                context: "TabularPolicy states",
                expected: n_states,
                got: self.probs.len(),
            });
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(CoreError::DimensionMismatch {
                    context: "TabularPolicy row",
                    expected: n_actions,
                    got: row.len(),
                });
            }
            check_row("TabularPolicy", s, row)?;
        }
        Ok(())
    }
}

impl DecisionRule for TabularPolicy {
    fn n_actions(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    fn write_probs(&self, state: usize, _prev: Option<usize>, out: &mut [f64]) {
        out.copy_from_slice(&self.probs[state]);
    }
}

/// A policy conditioned on (state, previous action), including the null slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTabularPolicy {
    pub n_actions: usize,
    /// Rows indexed `[state][prev_slot][action]` with `n_actions + 1`
    /// previous-action slots; the last slot is the null previous action.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl AugmentedTabularPolicy {
    /// Lifts a state-conditioned policy: every previous-action slot shares
    /// the same row.
    pub fn from_core(core: &TabularPolicy) -> Self {
        let n_actions = core.n_actions();
        let probs = core
            .probs
            .iter()
            .map(|row| vec![row.clone(); n_actions + 1])
            .collect();
        AugmentedTabularPolicy { n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn row(&self, state: usize, prev: Option<usize>) -> &[f64] {
        &self.probs[state][prev_slot(self.n_actions, prev)]
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_actions != n_actions {
            return Err(CoreError::DimensionMismatch {
                context: "AugmentedTabularPolicy n_actions",
                expected: n_actions,
                got: self.n_actions,
            });
        }
        if self.probs.len() != n_states {
            return Err(CoreError::DimensionMismatch {
                context: "AugmentedTabularPolicy states",
                expected: n_states,
                got: self.probs.len(),
            });
        }
        for (s, slots) in self.probs.iter().enumerate() {
            if slots.len() != n_actions + 1 {
                return Err(CoreError::DimensionMismatch {
                    context: "AugmentedTabularPolicy prev slots",
                    expected: n_actions + 1,
                    got: slots.len(),
                });
            }
            for (p, row) in slots.iter().enumerate() {
                if row.len() != n_actions {
                    return Err(CoreError::DimensionMismatch {
                        context: "AugmentedTabularPolicy row",
                        expected: n_actions,
                        got: row.len(),
                    });
                }
                check_row("AugmentedTabularPolicy", s * (n_actions + 1) + p, row)?;
            }
        }
        Ok(())
    }
}

impl DecisionRule for AugmentedTabularPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn write_probs(&self, state: usize, prev: Option<usize>, out: &mut [f64]) {
        out.copy_from_slice(self.row(state, prev));
    }
}

/// One sampled episode as parallel step arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    /// Number of steps (= actions taken).
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Samples one episode of `policy` on `spec`.
///
/// The episode length is `horizon + 1` steps when the spec has a finite
/// horizon, else `max_steps`; passing both takes the smaller. Absorbing
/// states keep sampling actions until the bound, which matters for the
/// oscillation metric.
pub fn sample_trajectory<P: DecisionRule, R: Rng>(
    spec: &MdpSpec,
    policy: &P,
    rng: &mut R,
    max_steps: Option<usize>,
) -> Result<Trajectory> {
    let bound = match (spec.horizon, max_steps) {
        (Some(t), Some(m)) => (t + 1).min(m),
        (Some(t), None) => t + 1,
        (None, Some(m)) => m,
        (None, None) => {
            return Err(CoreError::UnboundedHorizon {
                context: "sample_trajectory",
            })
        }
    };
    let mut probs = vec![0.0; spec.n_actions];
    let mut states = Vec::with_capacity(bound);
    let mut actions = Vec::with_capacity(bound);
    let mut rewards = Vec::with_capacity(bound);

    let mut s = math::sample_categorical(&spec.rho0, rng.gen::<f64>());
    let mut prev: Option<usize> = None;
    for _ in 0..bound {
        policy.write_probs(s, prev, &mut probs);
        let a = math::sample_categorical(&probs, rng.gen::<f64>());
        states.push(s);
        actions.push(a);
        rewards.push(spec.reward[s][a]);
        s = math::sample_categorical(&spec.transition[s][a], rng.gen::<f64>());
        prev = Some(a);
    }
    Ok(Trajectory {
        states,
        actions,
        rewards,
    })
}

/// Discounted return of one trajectory, `sum_t gamma^t r_t`.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut scale = 1.0;
    for &r in &traj.rewards {
        acc += scale * r;
        scale *= gamma;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-state chain: action 0 stays, action 1 swaps states.
    pub(crate) fn two_state_chain() -> MdpSpec {
        MdpSpec {
            n_states: 2,
            n_actions: 2,
            transition: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ],
            reward: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            rho0: vec![0.5, 0.5],
            gamma: 0.9,
            horizon: Some(10),
        }
    }

    #[test]
    fn validate_accepts_well_formed_specs() {
        assert!(two_state_chain().validate().is_ok());
        // degenerate but valid initial distribution
        let mut spec = two_state_chain();
        spec.rho0 = vec![1.0, 0.0];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn validate_names_the_bad_transition_row() {
        let mut spec = two_state_chain();
        spec.transition[1][0] = vec![0.5, 0.49]; // sums to 0.99
        let err = spec.validate().unwrap_err();
        match err {
            CoreError::InvalidDistribution { context, index, sum, .. } => {
                assert_eq!(context, "MdpSpec transition");
                assert_eq!(index, 1 * 2 + 0);
                assert!((sum - 0.99).abs() < 1e-15);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_negative_probability_and_bad_gamma() {
        let mut spec = two_state_chain();
        spec.transition[0][0] = vec![1.5, -0.5];
        assert!(spec.validate().is_err());

        let mut spec = two_state_chain();
        spec.gamma = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn deterministic_policy_repeats_one_action() {
        let mut spec = two_state_chain();
        spec.n_states = 1;
        spec.transition = vec![vec![vec![1.0], vec![1.0]]];
        spec.reward = vec![vec![0.0, 1.0]];
        spec.rho0 = vec![1.0];
        let policy = TabularPolicy::deterministic(2, &[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = sample_trajectory(&spec, &policy, &mut rng, None).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.actions.iter().all(|&a| a == 1));
        assert!(traj.rewards.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let spec = two_state_chain();
        let policy = TabularPolicy::uniform(2, 2);
        let a = sample_trajectory(&spec, &policy, &mut ChaCha8Rng::seed_from_u64(7), None).unwrap();
        let b = sample_trajectory(&spec, &policy, &mut ChaCha8Rng::seed_from_u64(7), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_length_respects_horizon_and_cap() {
        let spec = two_state_chain();
        let policy = TabularPolicy::uniform(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = sample_trajectory(&spec, &policy, &mut rng, Some(4)).unwrap();
        assert_eq!(traj.len(), 4);

        let mut unbounded = spec.clone();
        unbounded.horizon = None;
        let traj = sample_trajectory(&unbounded, &policy, &mut rng, Some(6)).unwrap();
        assert_eq!(traj.len(), 6);
        assert!(sample_trajectory(&unbounded, &policy, &mut rng, None).is_err());
    }

    #[test]
    fn discounted_return_closed_forms() {
        let traj = Trajectory {
            states: vec![0, 0, 0],
            actions: vec![0, 0, 0],
            rewards: vec![1.0, 1.0, 1.0],
        };
        assert_eq!(discounted_return(&traj, 0.0), 1.0);
        assert_eq!(discounted_return(&traj, 1.0), 3.0);

        let long = Trajectory {
            states: vec![0; 200],
            actions: vec![0; 200],
            rewards: vec![1.0; 200],
        };
        assert!((discounted_return(&long, 0.9) - 10.0).abs() < 1e-7);
    }

    #[test]
    fn augmented_policy_round_trips_core_rows() {
        let core = TabularPolicy::uniform(2, 3);
        let aug = AugmentedTabularPolicy::from_core(&core);
        aug.validate(2, 3).unwrap();
        assert_eq!(aug.row(0, None), &[1.0 / 3.0; 3]);
        assert_eq!(aug.row(1, Some(2)), &[1.0 / 3.0; 3]);
        assert_eq!(prev_slot(3, None), 3);
        assert_eq!(prev_slot(3, Some(1)), 1);
    }

    #[test]
    fn empirical_visitation_matches_power_iteration() {
        let spec = crate::garnet::garnet(5, 3, 2, 0.0, 99).unwrap();
        let policy = TabularPolicy::uniform(5, 3);
        let horizon = spec.horizon.unwrap();

        // exact state-visitation frequency averaged over steps 0..=horizon
        let mut d = spec.rho0.clone();
        let mut occupancy = d.clone();
        for _ in 0..horizon {
            let mut next = vec![0.0; 5];
            for s in 0..5 {
                for a in 0..3 {
                    for s2 in 0..5 {
                        next[s2] += d[s] * policy.probs[s][a] * spec.transition[s][a][s2];
                    }
                }
            }
            for s in 0..5 {
                occupancy[s] += next[s];
            }
            d = next;
        }
        let total = (horizon + 1) as f64;
        for o in &mut occupancy {
            *o /= total;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0u64; 5];
        let n_traj = 10_000;
        for _ in 0..n_traj {
            let traj = sample_trajectory(&spec, &policy, &mut rng, None).unwrap();
            for &s in &traj.states {
                counts[s] += 1;
            }
        }
        let visits: f64 = counts.iter().sum::<u64>() as f64;
        for s in 0..5 {
            let empirical = counts[s] as f64 / visits;
            assert!(
                (empirical - occupancy[s]).abs() < 0.02,
                "state {s}: empirical {empirical} vs exact {}",
                occupancy[s]
            );
        }
    }

    #[test]
    fn mdp_spec_json_round_trip_is_lossless() {
        let mut spec = two_state_chain();
        spec.transition[0][0] = vec![1.0 / 3.0, 2.0 / 3.0];
        spec.reward[0][1] = 0.123456789012345678;
        spec.gamma = 0.99;
        let json = serde_json::to_string(&spec).unwrap();
        let back: MdpSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);

        let mut unbounded = spec;
        unbounded.horizon = None;
        let json = serde_json::to_string(&unbounded).unwrap();
        assert!(json.contains("\"horizon\":null"));
        let back: MdpSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(unbounded, back);
    }
}
