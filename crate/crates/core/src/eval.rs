//! Exact soft policy evaluation on finite MDPs.
//!
//! The soft Bellman backup for a fixed policy is
//!
//! ```text
//! Q(s, a) = r(s, a) + gamma * E_{s'}[ V(s') ]
//! V(s)    = E_{a ~ pi}[ Q(s, a) - alpha * ln pi(a|s) ]
//! ```
//!
//! With `alpha = 0` this is standard policy evaluation. For policies
//! conditioned on the previous action the chain is augmented to states
//! `(s, a_prev)`; the action value `Q(s, a_prev, a)` then only depends on
//! `a_prev` through the successor value `V(s', a)`, so the solver iterates a
//! flat `Q[s][a]` table against the augmented `V[s][a_prev]` table.
//!
//! Fixed-point iteration stops once the value residual implies a sup-norm
//! error below the caller's tolerance (the operator is a gamma-contraction).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;
use crate::mdp::{AugmentedTabularPolicy, MdpSpec, TabularPolicy};
use crate::Result;

/// Sweep cap for all fixed-point solves.
pub const MAX_SWEEPS: usize = 100_000;

/// Default sup-norm tolerance on the returned values.
pub const DEFAULT_EVAL_TOL: f64 = 1e-10;

/// Values of a state-conditioned policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreValues {
    /// `q[s][a]`
    pub q: Vec<Vec<f64>>,
    /// `v[s]`
    pub v: Vec<f64>,
}

/// Values of a previous-action-conditioned policy on the augmented chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AugValues {
    /// `q[s][prev_slot][a]`; the previous action influences only the policy,
    /// so rows are equal across slots and kept for table-shaped access.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `v[s][prev_slot]`
    pub v: Vec<Vec<f64>>,
}

impl AugValues {
    /// `V(s, null)`, the value at an episode start.
    pub fn v_null(&self, s: usize) -> f64 {
        *self.v[s].last().expect("value table has a null slot")
    }
}

/// Soft state value of one row: `sum_a p_a (q_a - alpha ln p_a)`.
/// Zero-probability actions contribute nothing.
///
/// The sum is centered on the first supported action, so a convex
/// combination of equal action values returns that value exactly whatever
/// the weights; a point mass likewise returns its action value exactly.
#[inline]
pub fn soft_state_value(q_row: &[f64], probs: &[f64], alpha: f64) -> f64 {
    let anchor = match q_row
        .iter()
        .zip(probs)
        .find(|&(_, &p)| p > 0.0)
        .map(|(&q, _)| q)
    {
        Some(q) => q,
        None => return 0.0,
    };
    let mut acc = 0.0;
    for (&q, &p) in q_row.iter().zip(probs) {
        if p > 0.0 {
            acc += p * ((q - anchor) - alpha * math::ln_floored(p));
        }
    }
    anchor + acc
}

fn residual_target(gamma: f64, tol: f64) -> f64 {
    if gamma > 0.0 {
        tol * (1.0 - gamma) / gamma
    } else {
        tol
    }
}

/// Exact soft evaluation of an augmented policy. `alpha = 0` recovers plain
/// policy evaluation.
pub fn exact_policy_evaluation(
    spec: &MdpSpec,
    policy: &AugmentedTabularPolicy,
    alpha: f64,
    tol: f64,
) -> Result<AugValues> {
    if tol <= 0.0 {
        return Err(CoreError::invalid("exact_policy_evaluation", "tol must be positive"));
    }
    let (ns, na) = (spec.n_states, spec.n_actions);
    let slots = na + 1;
    let target = residual_target(spec.gamma, tol);

    let mut v = vec![vec![0.0; slots]; ns];
    let mut q = vec![vec![0.0; na]; ns];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        // Q from the previous V...
        for s in 0..ns {
            for a in 0..na {
                let mut acc = 0.0;
                for (s2, &p) in spec.transition[s][a].iter().enumerate() {
                    if p > 0.0 {
                        acc += p * v[s2][a];
                    }
                }
                q[s][a] = spec.reward[s][a] + spec.gamma * acc;
            }
        }
        // ...then V from the fresh Q; the composition is a gamma-contraction in V.
        residual = 0.0;
        for s in 0..ns {
            for slot in 0..slots {
                let prev = if slot == na { None } else { Some(slot) };
                let new_v = soft_state_value(&q[s], policy.row(s, prev), alpha);
                let delta = (new_v - v[s][slot]).abs();
                if delta > residual {
                    residual = delta;
                }
                v[s][slot] = new_v;
            }
        }
        if residual <= target {
            let q_aug = q
                .iter()
                .map(|row| vec![row.clone(); slots])
                .collect();
            return Ok(AugValues { q: q_aug, v });
        }
    }
    Err(CoreError::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
        tol: target,
    })
}

/// Exact soft evaluation of a state-conditioned policy.
pub fn exact_policy_evaluation_core(
    spec: &MdpSpec,
    policy: &TabularPolicy,
    alpha: f64,
    tol: f64,
) -> Result<CoreValues> {
    if tol <= 0.0 {
        return Err(CoreError::invalid("exact_policy_evaluation_core", "tol must be positive"));
    }
    let (ns, na) = (spec.n_states, spec.n_actions);
    let target = residual_target(spec.gamma, tol);

    let mut v = vec![0.0; ns];
    let mut q = vec![vec![0.0; na]; ns];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        for s in 0..ns {
            for a in 0..na {
                let mut acc = 0.0;
                for (s2, &p) in spec.transition[s][a].iter().enumerate() {
                    if p > 0.0 {
                        acc += p * v[s2];
                    }
                }
                q[s][a] = spec.reward[s][a] + spec.gamma * acc;
            }
        }
        residual = 0.0;
        for s in 0..ns {
            let new_v = soft_state_value(&q[s], &policy.probs[s], alpha);
            let delta = (new_v - v[s]).abs();
            if delta > residual {
                residual = delta;
            }
            v[s] = new_v;
        }
        if residual <= target {
            return Ok(CoreValues { q, v });
        }
    }
    Err(CoreError::NonConvergence {
        sweeps: MAX_SWEEPS,
        residual,
        tol: target,
    })
}

/// Tight tolerance used when a scalar objective feeds a comparison test.
pub const RETURN_TOL: f64 = 1e-12;

/// Expected plain discounted return `J = sum_s rho0(s) V(s, null)`.
pub fn exact_return(spec: &MdpSpec, policy: &AugmentedTabularPolicy) -> Result<f64> {
    let values = exact_policy_evaluation(spec, policy, 0.0, RETURN_TOL)?;
    Ok(weighted_start_value(spec, &values))
}

/// Maximum-entropy objective `J_ent` at temperature `alpha`.
pub fn exact_soft_return(spec: &MdpSpec, policy: &AugmentedTabularPolicy, alpha: f64) -> Result<f64> {
    let values = exact_policy_evaluation(spec, policy, alpha, RETURN_TOL)?;
    Ok(weighted_start_value(spec, &values))
}

fn weighted_start_value(spec: &MdpSpec, values: &AugValues) -> f64 {
    spec.rho0
        .iter()
        .enumerate()
        .map(|(s, &p)| p * values.v_null(s))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garnet::garnet;
    use crate::mdp::{prev_slot, sample_trajectory, discounted_return};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: assemble the soft Bellman equations as the dense
    /// linear system (I - gamma M) q = c over the flat (s, a) space and solve
    /// directly. The entropy of each successor row enters the constant term.
    fn linear_solve_oracle(
        spec: &MdpSpec,
        policy: &AugmentedTabularPolicy,
        alpha: f64,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (ns, na) = (spec.n_states, spec.n_actions);
        let n = ns * na;
        let mut m = alloc::vec![0.0; n * n];
        let mut c = alloc::vec![0.0; n];
        for s in 0..ns {
            for a in 0..na {
                let row = s * na + a;
                m[row * n + row] += 1.0;
                let mut constant = spec.reward[s][a];
                for (s2, &p) in spec.transition[s][a].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let pi = policy.row(s2, Some(a));
                    for (b, &pb) in pi.iter().enumerate() {
                        if pb > 0.0 {
                            m[row * n + s2 * na + b] -= spec.gamma * p * pb;
                            constant -= spec.gamma * p * alpha * pb * crate::math::ln_floored(pb);
                        }
                    }
                }
                c[row] = constant;
            }
        }
        crate::math::solve_dense(&mut m, &mut c).unwrap();
        let q: Vec<Vec<f64>> = (0..ns).map(|s| c[s * na..(s + 1) * na].to_vec()).collect();
        let mut v = alloc::vec![alloc::vec![0.0; na + 1]; ns];
        for s in 0..ns {
            for slot in 0..=na {
                let prev = if slot == na { None } else { Some(slot) };
                v[s][slot] = soft_state_value(&q[s], policy.row(s, prev), alpha);
            }
        }
        (q, v)
    }

    fn single_state_spec(n_actions: usize, rewards: Vec<f64>, gamma: f64) -> MdpSpec {
        MdpSpec {
            n_states: 1,
            n_actions,
            transition: alloc::vec![alloc::vec![alloc::vec![1.0]; n_actions]],
            reward: alloc::vec![rewards],
            rho0: alloc::vec![1.0],
            gamma,
            horizon: Some(100),
        }
    }

    #[test]
    fn geometric_series_single_state() {
        let spec = single_state_spec(1, alloc::vec![1.0], 0.9);
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(1, 1));
        let values = exact_policy_evaluation(&spec, &policy, 0.0, 1e-10).unwrap();
        assert!((values.q[0][0][0] - 10.0).abs() < 1e-9);
        assert!((values.v_null(0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_bonus_closed_form() {
        // gamma = 0 makes every Q equal its reward of 1; the soft V adds
        // alpha * ln 2 on a uniform two-action row.
        let mut spec = single_state_spec(2, alloc::vec![1.0, 1.0], 0.9);
        spec.gamma = 0.0;
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(1, 2));
        let values = exact_policy_evaluation(&spec, &policy, 0.1, 1e-10).unwrap();
        assert!((values.q[0][0][0] - 1.0).abs() < 1e-12);
        assert!((values.v_null(0) - 1.0693147180559945).abs() < 1e-12);
    }

    #[test]
    fn matches_linear_solve_on_garnets() {
        for seed in 0..5 {
            let spec = garnet(5, 3, 2, 0.3, seed).unwrap();
            let mut policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(5, 3));
            // perturb rows so prev-action slots genuinely differ
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            for slots in &mut policy.probs {
                for row in slots.iter_mut() {
                    let mut total = 0.0;
                    for p in row.iter_mut() {
                        *p = 0.05 + rand::Rng::gen::<f64>(&mut rng);
                        total += *p;
                    }
                    for p in row.iter_mut() {
                        *p /= total;
                    }
                }
            }
            for &alpha in &[0.0, 0.1] {
                let values = exact_policy_evaluation(&spec, &policy, alpha, 1e-10).unwrap();
                let (q_oracle, v_oracle) = linear_solve_oracle(&spec, &policy, alpha);
                for s in 0..5 {
                    for slot in 0..4 {
                        assert!(
                            (values.v[s][slot] - v_oracle[s][slot]).abs() < 1e-8,
                            "seed {seed} alpha {alpha} v[{s}][{slot}]"
                        );
                        for a in 0..3 {
                            assert!(
                                (values.q[s][slot][a] - q_oracle[s][a]).abs() < 1e-8,
                                "seed {seed} alpha {alpha} q[{s}][{slot}][{a}]"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn value_table_is_consistent_with_q() {
        let spec = garnet(4, 2, 2, 0.0, 11).unwrap();
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(4, 2));
        let alpha = 0.05;
        let values = exact_policy_evaluation(&spec, &policy, alpha, 1e-10).unwrap();
        for s in 0..4 {
            for slot in 0..3 {
                let prev = if slot == 2 { None } else { Some(slot) };
                let recomputed =
                    soft_state_value(&values.q[s][slot], policy.row(s, prev), alpha);
                assert!((values.v[s][slot] - recomputed).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_return_point_mass_and_zero_rewards() {
        let mut spec = garnet(3, 2, 2, 0.0, 21).unwrap();
        spec.rho0 = alloc::vec![0.0, 1.0, 0.0];
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(3, 2));
        let values = exact_policy_evaluation(&spec, &policy, 0.0, RETURN_TOL).unwrap();
        let j = exact_return(&spec, &policy).unwrap();
        assert!((j - values.v[1][prev_slot(2, None)]).abs() < 1e-12);

        for row in &mut spec.reward {
            row.fill(0.0);
        }
        assert_eq!(exact_return(&spec, &policy).unwrap(), 0.0);
    }

    #[test]
    fn exact_return_agrees_with_monte_carlo() {
        let spec = garnet(5, 3, 2, 0.2, 31).unwrap();
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(5, 3));
        let j = exact_return(&spec, &policy).unwrap();

        // finite-horizon truncation bias is below gamma^(T+1) * rmax / (1-gamma)
        let truncation = {
            let mut g = 1.0;
            for _ in 0..=spec.horizon.unwrap() {
                g *= spec.gamma;
            }
            g / (1.0 - spec.gamma)
        };

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n = 100_000;
        let mut returns = Vec::with_capacity(n);
        for _ in 0..n {
            let traj = sample_trajectory(&spec, &policy, &mut rng, None).unwrap();
            returns.push(discounted_return(&traj, spec.gamma));
        }
        let mean = crate::math::mean(&returns);
        let se = crate::math::std_dev(&returns) / crate::math::sqrt(n as f64);
        assert!(
            (mean - j).abs() < 3.0 * se + truncation,
            "MC mean {mean} vs exact {j} (3se = {})",
            3.0 * se
        );
    }
}
