//! The action-oscillation metric, estimated from rollouts or computed
//! exactly on the augmented chain.
//!
//! For a trajectory with actions `a_0 .. a_T` the oscillation ratio is
//!
//! ```text
//! xi = (1/T) * sum_{t=1..T} (1 - indicator[a_t = a_{t-1}])
//! ```
//!
//! The exact variant follows the construction used to prove that inertia
//! cannot increase oscillation: treat `keep(a_t, a_{t-1}) = indicator[a_t =
//! a_{t-1}]` as an auxiliary reward on the chain augmented with the previous
//! action and evaluate it undiscounted over the finite horizon by backward
//! induction.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::CoreError;
use crate::math;
use crate::mdp::{sample_trajectory, DecisionRule, MdpSpec, Trajectory};
use crate::Result;

/// Fraction of consecutive action pairs that differ; needs at least two
/// actions.
pub fn oscillation_ratio_actions(actions: &[usize]) -> Result<f64> {
    if actions.len() < 2 {
        return Err(CoreError::InsufficientData {
            context: "oscillation_ratio",
            need: 2,
            got: actions.len(),
        });
    }
    let switches = actions.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(switches as f64 / (actions.len() - 1) as f64)
}

/// [`oscillation_ratio_actions`] over a sampled tabular trajectory.
pub fn oscillation_ratio_trajectory(traj: &Trajectory) -> Result<f64> {
    oscillation_ratio_actions(&traj.actions)
}

/// Monte Carlo oscillation estimate: mean and population standard deviation
/// of per-episode ratios over `n_episodes` rollouts.
pub fn oscillation_ratio_policy<P: DecisionRule, R: Rng>(
    spec: &MdpSpec,
    policy: &P,
    n_episodes: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(CoreError::InsufficientData {
            context: "oscillation_ratio_policy",
            need: 1,
            got: 0,
        });
    }
    let mut ratios = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let traj = sample_trajectory(spec, policy, rng, None)?;
        ratios.push(oscillation_ratio_trajectory(&traj)?);
    }
    Ok((math::mean(&ratios), math::std_dev(&ratios)))
}

/// Exact oscillation ratio of `policy` on `spec`, requiring a finite horizon.
///
/// Backward induction on `W_t(s, p) = E[keeps from step t | s_t = s, a_{t-1}
/// = p]` with `W_{T+1} = 0`; the result is `1 - E[W_1 after the first
/// transition] / T`.
pub fn exact_oscillation<P: DecisionRule>(spec: &MdpSpec, policy: &P) -> Result<f64> {
    let t_total = spec.finite_horizon("exact_oscillation")?;
    let (ns, na) = (spec.n_states, spec.n_actions);

    // materialize policy rows once: [s][prev_slot][a], null slot last
    let mut rows = vec![vec![vec![0.0; na]; na + 1]; ns];
    for (s, slots) in rows.iter_mut().enumerate() {
        for (slot, row) in slots.iter_mut().enumerate() {
            let prev = if slot == na { None } else { Some(slot) };
            policy.write_probs(s, prev, row);
        }
    }

    let mut w = vec![vec![0.0; na]; ns];
    for _ in 0..t_total {
        let mut w_new = vec![vec![0.0; na]; ns];
        for s in 0..ns {
            for p in 0..na {
                let mut acc = 0.0;
                for (a, &pa) in rows[s][p].iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let keep = if a == p { 1.0 } else { 0.0 };
                    let mut cont = 0.0;
                    for (s2, &tp) in spec.transition[s][a].iter().enumerate() {
                        if tp > 0.0 {
                            cont += tp * w[s2][a];
                        }
                    }
                    acc += pa * (keep + cont);
                }
                w_new[s][p] = acc;
            }
        }
        w = w_new;
    }

    let mut keeps = 0.0;
    for (s, &p0) in spec.rho0.iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        let null_row = &rows[s][na];
        for (a0, &pa) in null_row.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let mut cont = 0.0;
            for (s2, &tp) in spec.transition[s][a0].iter().enumerate() {
                if tp > 0.0 {
                    cont += tp * w[s2][a0];
                }
            }
            keeps += p0 * pa * cont;
        }
    }
    Ok(1.0 - keeps / t_total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garnet::garnet;
    use crate::mdp::{AugmentedTabularPolicy, TabularPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(actions: &[usize]) -> Trajectory {
        Trajectory {
            states: vec![0; actions.len()],
            actions: actions.to_vec(),
            rewards: vec![0.0; actions.len()],
        }
    }

    #[test]
    fn trajectory_ratio_canonical_sequences() {
        assert_eq!(oscillation_ratio_trajectory(&traj(&[0, 0, 0])).unwrap(), 0.0);
        assert_eq!(oscillation_ratio_trajectory(&traj(&[0, 1, 0, 1])).unwrap(), 1.0);
        assert_eq!(oscillation_ratio_trajectory(&traj(&[0, 0, 1, 1, 0])).unwrap(), 0.5);
    }

    #[test]
    fn single_action_trajectory_is_an_error() {
        assert!(oscillation_ratio_trajectory(&traj(&[0])).is_err());
        assert!(oscillation_ratio_trajectory(&traj(&[])).is_err());
    }

    fn one_state_two_action(horizon: usize) -> MdpSpec {
        MdpSpec {
            n_states: 1,
            n_actions: 2,
            transition: vec![vec![vec![1.0], vec![1.0]]],
            reward: vec![vec![1.0, 1.0]],
            rho0: vec![1.0],
            gamma: 0.9,
            horizon: Some(horizon),
        }
    }

    #[test]
    fn constant_policy_never_oscillates() {
        let spec = one_state_two_action(100);
        let policy = TabularPolicy::deterministic(2, &[1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mean, std) = oscillation_ratio_policy(&spec, &policy, 5, &mut rng).unwrap();
        assert_eq!((mean, std), (0.0, 0.0));
        assert_eq!(
            exact_oscillation(&spec, &AugmentedTabularPolicy::from_core(&policy)).unwrap(),
            0.0
        );
    }

    #[test]
    fn uniform_two_action_monte_carlo_near_half() {
        let spec = one_state_two_action(100);
        let policy = TabularPolicy::uniform(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mean, _) = oscillation_ratio_policy(&spec, &policy, 20, &mut rng).unwrap();
        assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn uniform_two_action_exact_is_half() {
        let spec = one_state_two_action(100);
        let policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(1, 2));
        assert_eq!(exact_oscillation(&spec, &policy).unwrap(), 0.5);
    }

    #[test]
    fn half_inertia_over_uniform_core_is_quarter() {
        // mu = 0.5 over a uniform 2-action core: stay probability 0.75
        let spec = one_state_two_action(100);
        let mut policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(1, 2));
        policy.probs[0][0] = vec![0.75, 0.25];
        policy.probs[0][1] = vec![0.25, 0.75];
        assert_eq!(exact_oscillation(&spec, &policy).unwrap(), 0.25);
    }

    #[test]
    fn exact_matches_monte_carlo_within_three_se() {
        let spec = garnet(5, 3, 2, 0.0, 77).unwrap();
        let mut policy = AugmentedTabularPolicy::from_core(&TabularPolicy::uniform(5, 3));
        // skew rows so the previous action matters
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for slots in &mut policy.probs {
            for row in slots.iter_mut() {
                let mut total = 0.0;
                for p in row.iter_mut() {
                    *p = 0.1 + rand::Rng::gen::<f64>(&mut rng);
                    total += *p;
                }
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
        let exact = exact_oscillation(&spec, &policy).unwrap();
        let n = 2000;
        let (mean, std) = oscillation_ratio_policy(&spec, &policy, n, &mut rng).unwrap();
        let se = std / crate::math::sqrt(n as f64);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "exact {exact} vs MC {mean} (3se {})",
            3.0 * se
        );
    }
}
