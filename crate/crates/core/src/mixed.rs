//! Mixed-policy composition: inertia-weighted reuse of the previous action.
//!
//! Given a core distribution pi_core(.|s) and an inertia weight
//! mu = mu(s, a_prev) in [0, 1], the mixed policy is
//!
//! ```text
//! pi(. | s, a_prev) = mu * onehot(a_prev) + (1 - mu) * pi_core(. | s)
//! ```
//!
//! At the first step of an episode there is no previous action and the mixed
//! policy falls back to the core distribution regardless of mu.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::mdp::{AugmentedTabularPolicy, DecisionRule, TabularPolicy};
use crate::Result;

/// An inertia weight together with the lower bound that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicWeight {
    /// Effective weight in `[mu0, 1]`.
    pub value: f64,
    /// Configured lower bound.
    pub mu0: f64,
}

impl PicWeight {
    /// A weight with no lower bound.
    pub fn new(value: f64) -> Self {
        PicWeight { value, mu0: 0.0 }
    }
}

/// Maps a raw controller output in [0, 1] onto `[mu0, 1]`:
/// `value = mu0 + (1 - mu0) * raw`.
pub fn apply_lower_bound(raw: f64, mu0: f64) -> PicWeight {
    PicWeight {
        value: mu0 + (1.0 - mu0) * raw,
        mu0,
    }
}

/// One mixed action distribution, keeping its ingredients for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDistribution {
    pub probs: Vec<f64>,
    pub core: Vec<f64>,
    pub prev_action: Option<usize>,
}

/// Builds the mixed distribution. A null `prev_action` short-circuits to the
/// core distribution bitwise; `mu = 0` likewise leaves the core untouched.
pub fn mix_distribution(
    core: &[f64],
    prev_action: Option<usize>,
    mu: PicWeight,
) -> Result<MixedDistribution> {
    if !(0.0..=1.0).contains(&mu.value) {
        return Err(CoreError::invalid(
            "mix_distribution",
            alloc::format!("mu {} outside [0, 1]", mu.value),
        ));
    }
    let probs = match prev_action {
        None => core.to_vec(),
        Some(prev) => {
            if prev >= core.len() {
                return Err(CoreError::IndexOutOfRange {
                    context: "mix_distribution prev_action",
                    index: prev,
                    len: core.len(),
                });
            }
            let keep = 1.0 - mu.value;
            let mut probs: Vec<f64> = core.iter().map(|&p| keep * p).collect();
            probs[prev] += mu.value;
            probs
        }
    };
    Ok(MixedDistribution {
        probs,
        core: core.to_vec(),
        prev_action,
    })
}

/// Writes the mixed probabilities straight into `out` without allocating;
/// same arithmetic as [`mix_distribution`], preconditions unchecked.
#[inline]
pub fn mix_into(core: &[f64], prev_action: Option<usize>, mu: f64, out: &mut [f64]) {
    match prev_action {
        None => out.copy_from_slice(core),
        Some(prev) => {
            let keep = 1.0 - mu;
            for (o, &p) in out.iter_mut().zip(core) {
                *o = keep * p;
            }
            out[prev] += mu;
        }
    }
}

/// Samples an action index from the mixed distribution.
pub fn sample_mixed<R: Rng>(dist: &MixedDistribution, rng: &mut R) -> usize {
    math::sample_categorical(&dist.probs, rng.gen::<f64>())
}

/// Floored elementwise log-probabilities and the entropy of the mixture.
///
/// Probabilities are clamped to 1e-12 before the log; zero-mass entries
/// still contribute exactly zero to the entropy.
pub fn mixed_log_prob_and_entropy(dist: &MixedDistribution) -> (Vec<f64>, f64) {
    let logs: Vec<f64> = dist.probs.iter().map(|&p| math::ln_floored(p)).collect();
    let mut entropy = 0.0;
    for (&p, &lp) in dist.probs.iter().zip(&logs) {
        entropy -= p * lp;
    }
    (logs, entropy)
}

/// A tabular core policy paired with a per-(state, prev_action) inertia
/// table; the tabular counterpart of the learned controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedTabularPolicy {
    pub core: TabularPolicy,
    /// `mu[s][p]` for real previous actions `p`; the null slot needs no
    /// entry because it short-circuits to the core.
    pub mu: Vec<Vec<f64>>,
}

impl MixedTabularPolicy {
    /// Zero-inertia wrapper around a core policy.
    pub fn from_core(core: TabularPolicy) -> Self {
        let n_states = core.n_states();
        let n_actions = core.n_actions();
        MixedTabularPolicy {
            core,
            mu: vec![vec![0.0; n_actions]; n_states],
        }
    }

    /// Constant inertia `mu` at every (state, prev_action).
    pub fn with_constant_mu(core: TabularPolicy, mu: f64) -> Self {
        let n_states = core.n_states();
        let n_actions = core.n_actions();
        MixedTabularPolicy {
            core,
            mu: vec![vec![mu; n_actions]; n_states],
        }
    }

    /// Materializes the full augmented probability table.
    pub fn to_augmented(&self) -> AugmentedTabularPolicy {
        let n_actions = self.core.n_actions();
        let probs = self
            .core
            .probs
            .iter()
            .enumerate()
            .map(|(s, core_row)| {
                let mut slots = Vec::with_capacity(n_actions + 1);
                for p in 0..n_actions {
                    let mut row = vec![0.0; n_actions];
                    mix_into(core_row, Some(p), self.mu[s][p], &mut row);
                    slots.push(row);
                }
                slots.push(core_row.clone());
                slots
            })
            .collect();
        AugmentedTabularPolicy { n_actions, probs }
    }
}

impl DecisionRule for MixedTabularPolicy {
    fn n_actions(&self) -> usize {
        self.core.n_actions()
    }

    fn write_probs(&self, state: usize, prev: Option<usize>, out: &mut [f64]) {
        let mu = match prev {
            Some(p) => self.mu[state][p],
            None => 0.0,
        };
        mix_into(&self.core.probs[state], prev, mu, out);
    }
}
