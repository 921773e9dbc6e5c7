//! Random MDP generator for solver and theorem verification.
//!
//! The classic Garnet construction: every (state, action) pair reaches
//! exactly `branching` successor states with Dirichlet-distributed
//! probabilities, and rewards are uniform on [0, 1] with a configurable
//! fraction zeroed out.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::mdp::MdpSpec;
use crate::Result;

/// Builds a Garnet MDP, deterministic in `seed`.
///
/// The returned spec uses gamma 0.95 and horizon 100; callers are free to
/// overwrite either field.
pub fn garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    reward_sparsity: f64,
    seed: u64,
) -> Result<MdpSpec> {
    if n_states == 0 || n_actions == 0 {
        return Err(CoreError::invalid(
            "garnet",
            "n_states and n_actions must be positive",
        ));
    }
    if branching == 0 || branching > n_states {
        return Err(CoreError::invalid(
            "garnet",
            alloc::format!("branching {branching} outside [1, {n_states}]"),
        ));
    }
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(CoreError::invalid(
            "garnet",
            alloc::format!("reward_sparsity {reward_sparsity} outside [0, 1]"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    let mut pool: Vec<usize> = (0..n_states).collect();

    for s in 0..n_states {
        for a in 0..n_actions {
            // partial Fisher-Yates: first `branching` entries become successors
            for i in 0..branching {
                let j = rng.gen_range(i..n_states);
                pool.swap(i, j);
            }
            // Dirichlet(1, ..., 1) via normalized Exp(1) draws
            let mut weights = vec![0.0; branching];
            let mut total = 0.0;
            for w in &mut weights {
                *w = -crate::math::ln(1.0 - rng.gen::<f64>());
                total += *w;
            }
            for (i, &succ) in pool[..branching].iter().enumerate() {
                transition[s][a][succ] = weights[i] / total;
            }

            // both draws always happen so the stream layout is sparsity-free
            let value = rng.gen::<f64>();
            let keep = rng.gen::<f64>() >= reward_sparsity;
            reward[s][a] = if keep { value } else { 0.0 };
        }
    }

    let spec = MdpSpec {
        n_states,
        n_actions,
        transition,
        reward,
        rho0: vec![1.0 / n_states as f64; n_states],
        gamma: 0.95,
        horizon: Some(100),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_have_exactly_branching_nonzeros() {
        let spec = garnet(5, 3, 2, 0.0, 42).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let row = &spec.transition[s][a];
                assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 2);
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_spec() {
        let a = garnet(6, 2, 3, 0.5, 7).unwrap();
        let b = garnet(6, 2, 3, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = garnet(6, 2, 3, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_branching_gives_dense_rows() {
        let spec = garnet(4, 2, 4, 0.0, 3).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!(spec.transition[s][a].iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn sparsity_bounds_are_enforced() {
        assert!(garnet(3, 2, 0, 0.0, 1).is_err());
        assert!(garnet(3, 2, 4, 0.0, 1).is_err());
        assert!(garnet(3, 2, 2, 1.5, 1).is_err());
        // sparsity 1 zeroes every reward
        let spec = garnet(3, 2, 2, 1.0, 1).unwrap();
        assert!(spec.reward.iter().flatten().all(|&r| r == 0.0));
    }
}
