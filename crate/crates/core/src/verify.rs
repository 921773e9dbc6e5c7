//! Runnable verification suites: every numerical claim the library leans on,
//! packaged as named checks with measured worst-case violations.
//!
//! Each suite pits an implementation against an arithmetically independent
//! oracle (a dense linear solve against the fixed-point evaluator, central
//! finite differences against analytic gradients, a bitwise agent-vs-agent
//! replay for the reduction identity) or against an exactly known answer.
//! Failures are report content, not errors: a suite always returns, and a
//! check that could not run reports itself failed with the error message.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::agent::{substream_rng, ActMode, Agent, LossRecord};
use crate::baselines::{dqn_td_loss, SacAgent, SacConfig};
use crate::envs::{Env, LineTrack, LineTrackConfig};
use crate::error::CoreError;
use crate::eval::exact_policy_evaluation;
use crate::garnet::garnet;
use crate::math;
use crate::mdp::{prev_slot, AugmentedTabularPolicy, MdpSpec, TabularPolicy};
use crate::metrics::{exact_oscillation, oscillation_ratio_actions, oscillation_ratio_policy};
use crate::mixed::MixedTabularPolicy;
use crate::net::{Activation, DenseNet, Grads};
use crate::npi::{
    nested_policy_iteration, soft_policy_iteration, theorem1_oracle, NpiConfig,
};
use crate::nsac::{
    core_actor_loss, core_critic_loss, mix_critic_loss, pic_loss, NsacAgent, NsacConfig,
};
use crate::replay::Transition;
use crate::Result;

/// The named verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Tabular,
    Gradcheck,
    Reduction,
    Theorem1,
    Lemma1,
    NpiMonotone,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Tabular,
        Suite::Gradcheck,
        Suite::Reduction,
        Suite::Theorem1,
        Suite::Lemma1,
        Suite::NpiMonotone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tabular => "tabular",
            Suite::Gradcheck => "gradcheck",
            Suite::Reduction => "reduction",
            Suite::Theorem1 => "theorem1",
            Suite::Lemma1 => "lemma1",
            Suite::NpiMonotone => "npi-monotone",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.iter().copied().find(|s| s.name() == name)
    }
}

/// One named check: `cases` independent trials, each passing when its
/// measured discrepancy stays within `tol`. `worst` is the largest
/// discrepancy seen across all cases (0 means exact agreement).
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub passed: usize,
    pub worst: f64,
    pub tol: f64,
    pub detail: String,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.passed == self.cases
    }
}

impl core::fmt::Display for Check {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}: {}/{} pass, worst violation {:.3e} (tol {:.1e})",
            self.name, self.passed, self.cases, self.worst, self.tol
        )?;
        if !self.detail.is_empty() {
            write!(f, " [{}]", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }
}

impl core::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(
            f,
            "suite {}: {}",
            self.suite.name(),
            if self.ok() { "PASS" } else { "FAIL" }
        )?;
        for check in &self.checks {
            writeln!(f, "  {check}")?;
        }
        Ok(())
    }
}

/// Runs one suite at its reference scale (the scale the acceptance
/// thresholds are stated at).
pub fn run_suite(suite: Suite) -> SuiteReport {
    let checks = match suite {
        Suite::Tabular => tabular_checks(20),
        Suite::Gradcheck => gradcheck_checks(),
        Suite::Reduction => vec![reduction_check(1000)],
        Suite::Theorem1 => theorem1_checks(100),
        Suite::Lemma1 => vec![lemma1_check(20)],
        Suite::NpiMonotone => vec![monotone_check(20)],
    };
    SuiteReport { suite, checks }
}

/// Converts an aborted check into a failing report entry.
fn guard(name: &'static str, body: impl FnOnce() -> Result<Check>) -> Check {
    match body() {
        Ok(check) => check,
        Err(err) => Check {
            name,
            cases: 1,
            passed: 0,
            worst: f64::INFINITY,
            tol: 0.0,
            detail: format!("aborted: {err}"),
        },
    }
}

// ---------------------------------------------------------------- tabular

/// Small Garnet family indexed by seed; sizes stay within 10 states.
fn verification_garnet(seed: u64) -> Result<MdpSpec> {
    let k = seed as usize;
    let n_states = 3 + k % 8;
    let n_actions = 2 + k % 3;
    let sparsity = (k % 4) as f64 * 0.2;
    garnet(n_states, n_actions, 2.min(n_states), sparsity, seed)
}

/// Random stochastic mixed policy for a spec, from a seeded stream.
fn random_mixed_policy(spec: &MdpSpec, seed: u64) -> MixedTabularPolicy {
    let mut rng = substream_rng(seed, 31);
    let (ns, na) = (spec.n_states, spec.n_actions);
    let mut probs = Vec::with_capacity(ns);
    for _ in 0..ns {
        let logits: Vec<f64> = (0..na).map(|_| rng.gen_range(-1.5..1.5)).collect();
        probs.push(math::softmax(&logits, 1.0));
    }
    let mu = (0..ns)
        .map(|_| (0..na).map(|_| rng.gen_range(0.0..0.8)).collect())
        .collect();
    MixedTabularPolicy {
        core: TabularPolicy { probs },
        mu,
    }
}

/// Stationary evaluation of an augmented policy by a dense linear solve over
/// the chain's `(state, prev_slot)` space; independent of the fixed-point
/// solver in every step but the final subtraction tolerance.
fn linear_solve_values(spec: &MdpSpec, policy: &AugmentedTabularPolicy) -> Result<Vec<Vec<f64>>> {
    let (ns, na) = (spec.n_states, spec.n_actions);
    let slots = na + 1;
    let dim = ns * slots;
    let mut lhs = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for s in 0..ns {
        for slot in 0..slots {
            let i = s * slots + slot;
            lhs[i * dim + i] = 1.0;
            let prev = if slot == na { None } else { Some(slot) };
            let row = policy.row(s, prev);
            for a in 0..na {
                let pi = row[a];
                if pi == 0.0 {
                    continue;
                }
                rhs[i] += pi * spec.reward[s][a];
                let next_slot = prev_slot(na, Some(a));
                for (s2, &tp) in spec.transition[s][a].iter().enumerate() {
                    if tp > 0.0 {
                        lhs[i * dim + s2 * slots + next_slot] -= spec.gamma * pi * tp;
                    }
                }
            }
        }
    }
    math::solve_dense(&mut lhs, &mut rhs)?;
    Ok((0..ns)
        .map(|s| rhs[s * slots..(s + 1) * slots].to_vec())
        .collect())
}

/// Soft evaluation oracle by plain value iteration over the full augmented
/// table, with the uncentered expectation formula.
fn soft_iteration_values(
    spec: &MdpSpec,
    policy: &AugmentedTabularPolicy,
    alpha: f64,
) -> Result<Vec<Vec<f64>>> {
    let (ns, na) = (spec.n_states, spec.n_actions);
    let slots = na + 1;
    let mut v = vec![vec![0.0; slots]; ns];
    for _ in 0..200_000 {
        let mut residual = 0.0_f64;
        let mut next = vec![vec![0.0; slots]; ns];
        for s in 0..ns {
            for slot in 0..slots {
                let prev = if slot == na { None } else { Some(slot) };
                let row = policy.row(s, prev);
                let mut value = 0.0;
                for a in 0..na {
                    let pi = row[a];
                    if pi == 0.0 {
                        continue;
                    }
                    let mut succ = 0.0;
                    for (s2, &tp) in spec.transition[s][a].iter().enumerate() {
                        if tp > 0.0 {
                            succ += tp * v[s2][prev_slot(na, Some(a))];
                        }
                    }
                    let q = spec.reward[s][a] + spec.gamma * succ;
                    value += pi * (q - alpha * math::ln(pi));
                }
                next[s][slot] = value;
                residual = residual.max((value - v[s][slot]).abs());
            }
        }
        v = next;
        if residual <= 1e-13 {
            return Ok(v);
        }
    }
    Err(CoreError::NonConvergence {
        sweeps: 200_000,
        residual: f64::NAN,
        tol: 1e-13,
    })
}

/// Q table implied by a value table, `r + gamma * E[V(s', a)]`.
fn q_from_values(spec: &MdpSpec, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (ns, na) = (spec.n_states, spec.n_actions);
    let mut q = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let mut succ = 0.0;
            for (s2, &tp) in spec.transition[s][a].iter().enumerate() {
                if tp > 0.0 {
                    succ += tp * v[s2][prev_slot(na, Some(a))];
                }
            }
            q[s][a] = spec.reward[s][a] + spec.gamma * succ;
        }
    }
    q
}

fn eval_oracle_check(name: &'static str, seeds: usize, alpha: f64) -> Check {
    guard(name, || {
        let tol = 1e-6;
        let mut worst = 0.0_f64;
        let mut passed = 0;
        for seed in 0..seeds as u64 {
            let spec = verification_garnet(seed)?;
            let policy = random_mixed_policy(&spec, seed).to_augmented();
            let ours = exact_policy_evaluation(&spec, &policy, alpha, 1e-12)?;
            let oracle_v = if alpha == 0.0 {
                linear_solve_values(&spec, &policy)?
            } else {
                soft_iteration_values(&spec, &policy, alpha)?
            };
            let oracle_q = q_from_values(&spec, &oracle_v);
            let mut gap = 0.0_f64;
            for s in 0..spec.n_states {
                for slot in 0..=spec.n_actions {
                    gap = gap.max((ours.v[s][slot] - oracle_v[s][slot]).abs());
                    for a in 0..spec.n_actions {
                        gap = gap.max((ours.q[s][slot][a] - oracle_q[s][a]).abs());
                    }
                }
            }
            if gap <= tol {
                passed += 1;
            }
            worst = worst.max(gap);
        }
        Ok(Check {
            name,
            cases: seeds,
            passed,
            worst,
            tol,
            detail: String::new(),
        })
    })
}

fn oscillation_canonical_check() -> Check {
    guard("oscillation-canonical", || {
        let cases = [
            (vec![0usize, 0, 0], 0.0),
            (vec![0, 1, 0, 1], 1.0),
            (vec![0, 0, 1, 1, 0], 0.5),
        ];
        let mut worst = 0.0_f64;
        let mut passed = 0;
        for (actions, expect) in &cases {
            let got = oscillation_ratio_actions(actions)?;
            let gap = (got - expect).abs();
            if gap == 0.0 {
                passed += 1;
            }
            worst = worst.max(gap);
        }
        Ok(Check {
            name: "oscillation-canonical",
            cases: cases.len(),
            passed,
            worst,
            tol: 0.0,
            detail: String::new(),
        })
    })
}

fn oscillation_monte_carlo_check(policies: usize) -> Check {
    guard("oscillation-monte-carlo", || {
        let episodes = 400;
        let mut worst = 0.0_f64;
        let mut passed = 0;
        for seed in 0..policies as u64 {
            let spec = verification_garnet(seed)?;
            let policy = random_mixed_policy(&spec, 1000 + seed);
            let exact = exact_oscillation(&spec, &policy)?;
            let mut rng = substream_rng(2000 + seed, 7);
            let (mean, std) = oscillation_ratio_policy(&spec, &policy, episodes, &mut rng)?;
            let se = (std / math::sqrt(episodes as f64)).max(1e-9);
            // measured in standard errors; 3 is the acceptance line
            let sigmas = (mean - exact).abs() / se;
            if sigmas <= 3.0 {
                passed += 1;
            }
            worst = worst.max(sigmas);
        }
        Ok(Check {
            name: "oscillation-monte-carlo",
            cases: policies,
            passed,
            worst,
            tol: 3.0,
            detail: String::from("violation unit: standard errors"),
        })
    })
}

fn tabular_checks(seeds: usize) -> Vec<Check> {
    vec![
        eval_oracle_check("eval-linear-oracle", seeds, 0.0),
        eval_oracle_check("eval-soft-oracle", seeds, 0.1),
        oscillation_canonical_check(),
        oscillation_monte_carlo_check(10),
    ]
}

// -------------------------------------------------------------- gradcheck

fn random_net(sizes: &[usize], acts: &[Activation], seed: u64) -> Result<DenseNet> {
    DenseNet::new(sizes, acts, &mut substream_rng(seed, 41))
}

fn random_batch(seed: u64, state_dim: usize, n_actions: usize) -> Vec<Transition> {
    let mut rng = substream_rng(seed, 42);
    let mut batch = Vec::new();
    for k in 0..4 {
        let state: Vec<f64> = (0..state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let next: Vec<f64> = (0..state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        batch.push(Transition {
            state,
            prev_action: if k == 0 { None } else { Some(k % n_actions) },
            action: (k + 1) % n_actions,
            reward: rng.gen_range(-1.0..1.0),
            next_state: next,
            terminal: k == 2,
        });
    }
    batch
}

/// Largest relative error between analytic gradients and central finite
/// differences of `loss` over every parameter of `net`.
fn fd_worst_error(
    net: &DenseNet,
    grads: &Grads,
    loss: impl Fn(&DenseNet) -> Result<f64>,
) -> Result<f64> {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for idx in 0..net.param_count() {
        let mut plus = net.clone();
        *plus.param_mut(idx) += h;
        let mut minus = net.clone();
        *minus.param_mut(idx) -= h;
        let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
        let an = DenseNet::grad_entry(grads, net, idx);
        worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
    }
    Ok(worst)
}

fn fd_check(name: &'static str, body: impl FnOnce() -> Result<f64>) -> Check {
    guard(name, || {
        let tol = 1e-4;
        let worst = body()?;
        Ok(Check {
            name,
            cases: 1,
            passed: usize::from(worst <= tol),
            worst,
            tol,
            detail: String::new(),
        })
    })
}

fn gradcheck_checks() -> Vec<Check> {
    let relu = [Activation::Relu, Activation::Relu, Activation::None];
    let soft = [Activation::Relu, Activation::Relu, Activation::Softmax];
    let tanh = [Activation::Relu, Activation::Relu, Activation::Tanh];
    let (gamma, alpha_core, alpha_mix, mu0) = (0.99, 0.1, 0.01, 0.2);

    let core_critic = fd_check("core-critic-fd", || {
        let actor = random_net(&[3, 4, 4, 2], &soft, 1)?;
        let critic1 = random_net(&[3, 4, 4, 2], &relu, 2)?;
        let critic2 = random_net(&[3, 4, 4, 2], &relu, 3)?;
        let target1 = random_net(&[3, 4, 4, 2], &relu, 4)?;
        let target2 = random_net(&[3, 4, 4, 2], &relu, 5)?;
        let batch = random_batch(6, 3, 2);
        let mut g1 = Grads::zeros_like(&critic1);
        let mut g2 = Grads::zeros_like(&critic2);
        core_critic_loss(
            &actor, &critic1, &critic2, &target1, &target2, &batch, gamma, alpha_core, &mut g1,
            &mut g2,
        )?;
        let eval = |which: usize, candidate: &DenseNet| -> Result<f64> {
            let mut d1 = Grads::zeros_like(&critic1);
            let mut d2 = Grads::zeros_like(&critic2);
            let (l1, l2) = core_critic_loss(
                &actor,
                if which == 1 { candidate } else { &critic1 },
                if which == 2 { candidate } else { &critic2 },
                &target1,
                &target2,
                &batch,
                gamma,
                alpha_core,
                &mut d1,
                &mut d2,
            )?;
            Ok(if which == 1 { l1 } else { l2 })
        };
        let w1 = fd_worst_error(&critic1, &g1, |net| eval(1, net))?;
        let w2 = fd_worst_error(&critic2, &g2, |net| eval(2, net))?;
        Ok(w1.max(w2))
    });

    let core_actor = fd_check("core-actor-fd", || {
        let actor = random_net(&[3, 4, 4, 2], &soft, 11)?;
        let critic1 = random_net(&[3, 4, 4, 2], &relu, 12)?;
        let critic2 = random_net(&[3, 4, 4, 2], &relu, 13)?;
        let batch = random_batch(14, 3, 2);
        let mut grads = Grads::zeros_like(&actor);
        core_actor_loss(&actor, &critic1, &critic2, &batch, alpha_core, &mut grads)?;
        fd_worst_error(&actor, &grads, |candidate| {
            let mut d = Grads::zeros_like(candidate);
            core_actor_loss(candidate, &critic1, &critic2, &batch, alpha_core, &mut d)
        })
    });

    let mix_critic = fd_check("mix-critic-fd", || {
        let actor = random_net(&[3, 4, 4, 2], &soft, 21)?;
        let pic = random_net(&[5, 4, 4, 1], &tanh, 22)?;
        let critic1 = random_net(&[5, 4, 4, 2], &relu, 23)?;
        let critic2 = random_net(&[5, 4, 4, 2], &relu, 24)?;
        let target1 = random_net(&[5, 4, 4, 2], &relu, 25)?;
        let target2 = random_net(&[5, 4, 4, 2], &relu, 26)?;
        let batch = random_batch(27, 3, 2);
        let mut g1 = Grads::zeros_like(&critic1);
        let mut g2 = Grads::zeros_like(&critic2);
        mix_critic_loss(
            &actor,
            Some(&pic),
            mu0,
            &critic1,
            &critic2,
            &target1,
            &target2,
            &batch,
            gamma,
            alpha_mix,
            &mut g1,
            &mut g2,
        )?;
        let eval = |which: usize, candidate: &DenseNet| -> Result<f64> {
            let mut d1 = Grads::zeros_like(&critic1);
            let mut d2 = Grads::zeros_like(&critic2);
            let (l1, l2) = mix_critic_loss(
                &actor,
                Some(&pic),
                mu0,
                if which == 1 { candidate } else { &critic1 },
                if which == 2 { candidate } else { &critic2 },
                &target1,
                &target2,
                &batch,
                gamma,
                alpha_mix,
                &mut d1,
                &mut d2,
            )?;
            Ok(if which == 1 { l1 } else { l2 })
        };
        let w1 = fd_worst_error(&critic1, &g1, |net| eval(1, net))?;
        let w2 = fd_worst_error(&critic2, &g2, |net| eval(2, net))?;
        Ok(w1.max(w2))
    });

    let pic = fd_check("pic-fd", || {
        let actor = random_net(&[3, 4, 4, 2], &soft, 31)?;
        let pic = random_net(&[5, 4, 4, 1], &tanh, 32)?;
        let critic1 = random_net(&[5, 4, 4, 2], &relu, 33)?;
        let critic2 = random_net(&[5, 4, 4, 2], &relu, 34)?;
        let batch = random_batch(35, 3, 2);
        let mut grads = Grads::zeros_like(&pic);
        pic_loss(&pic, &actor, &critic1, &critic2, &batch, alpha_mix, mu0, &mut grads)?;
        fd_worst_error(&pic, &grads, |candidate| {
            let mut d = Grads::zeros_like(candidate);
            pic_loss(candidate, &actor, &critic1, &critic2, &batch, alpha_mix, mu0, &mut d)
        })
    });

    let dqn = fd_check("dqn-fd", || {
        let q = random_net(&[3, 4, 4, 2], &relu, 51)?;
        let target = random_net(&[3, 4, 4, 2], &relu, 52)?;
        let batch = random_batch(53, 3, 2);
        let mut grads = Grads::zeros_like(&q);
        dqn_td_loss(&q, &target, &batch, gamma, &mut grads)?;
        fd_worst_error(&q, &grads, |candidate| {
            let mut d = Grads::zeros_like(candidate);
            dqn_td_loss(candidate, &target, &batch, gamma, &mut d)
        })
    });

    vec![
        core_critic,
        core_actor,
        mix_critic,
        pic,
        dqn,
        outer_isolation_check(),
    ]
}

/// Feeds a fixed synthetic transition stream; the agent's own actions close
/// the loop.
fn drive_synthetic<A: Agent>(agent: &mut A, steps: u64) -> Result<()> {
    let mut prev: Option<usize> = None;
    for t in 0..steps {
        let phase = t as f64 * 0.37;
        let state = vec![math::cos(phase), math::cos(1.7 * phase + 0.5), 0.1];
        let next_phase = (t + 1) as f64 * 0.37;
        let next = vec![math::cos(next_phase), math::cos(1.7 * next_phase + 0.5), 0.1];
        let action = agent.act(&state, prev, ActMode::Sample)?;
        let reward = if action == 0 { 0.3 } else { -0.1 } + 0.05 * state[0];
        let terminal = t % 17 == 16;
        agent.record(Transition {
            state,
            prev_action: prev,
            action,
            reward,
            next_state: next,
            terminal,
        })?;
        agent.train_step(t)?;
        prev = if terminal { None } else { Some(action) };
    }
    Ok(())
}

fn max_param_gap(before: &DenseNet, after: &DenseNet) -> f64 {
    let mut gap = 0.0_f64;
    for idx in 0..before.param_count() {
        gap = gap.max((before.param(idx) - after.param(idx)).abs());
    }
    gap
}

/// Controller-loss stop-gradient semantics at the system level: a run where
/// only the outer loop is scheduled must leave the core actor, core critics,
/// and their targets bitwise untouched while the controller actually moves.
fn outer_isolation_check() -> Check {
    guard("outer-isolation", || {
        let config = NsacConfig {
            hidden: 8,
            batch_size: 16,
            buffer_capacity: 128,
            m_core: 1 << 40,
            m_mix: 2,
            ..NsacConfig::default()
        };
        let mut agent = NsacAgent::new(3, 2, config, 9001)?;
        let before = agent.checkpoint(false);
        drive_synthetic(&mut agent, 80)?;
        let after = agent.checkpoint(false);
        let mut worst = 0.0_f64;
        worst = worst.max(max_param_gap(&before.actor.net, &after.actor.net));
        worst = worst.max(max_param_gap(&before.core.q1.net, &after.core.q1.net));
        worst = worst.max(max_param_gap(&before.core.q2.net, &after.core.q2.net));
        worst = worst.max(max_param_gap(&before.core.target1, &after.core.target1));
        worst = worst.max(max_param_gap(&before.core.target2, &after.core.target2));
        let controller_moved = max_param_gap(&before.pic.net, &after.pic.net) > 0.0;
        let passed = usize::from(worst == 0.0 && controller_moved);
        Ok(Check {
            name: "outer-isolation",
            cases: 1,
            passed,
            worst,
            tol: 0.0,
            detail: if controller_moved {
                String::new()
            } else {
                String::from("controller never trained; check is vacuous")
            },
        })
    })
}

// -------------------------------------------------------------- reduction

/// One record of the bitwise replay: the chosen action and the loss record.
type ReplayRow = (usize, Option<LossRecord>);

fn run_on_linetrack<A: Agent>(
    agent: &mut A,
    target_updates: usize,
    master_seed: u64,
) -> Result<Vec<ReplayRow>> {
    let mut env = LineTrack::new(LineTrackConfig::default())?;
    let mut rows = Vec::new();
    let mut updates = 0;
    let mut t: u64 = 0;
    let mut episode: u64 = 0;
    let step_cap = 100_000;
    while updates < target_updates && (t as usize) < step_cap {
        let mut state = env.reset(master_seed.wrapping_add(episode));
        episode += 1;
        let mut prev: Option<usize> = None;
        loop {
            let action = agent.act(&state, prev, ActMode::Sample)?;
            let outcome = env.step(action)?;
            agent.record(Transition {
                state: state.clone(),
                prev_action: prev,
                action,
                reward: outcome.reward,
                next_state: outcome.state.clone(),
                terminal: outcome.terminal,
            })?;
            let record = agent.train_step(t)?;
            if record.is_some() {
                updates += 1;
            }
            rows.push((action, record));
            t += 1;
            if outcome.terminal || updates >= target_updates || (t as usize) >= step_cap {
                break;
            }
            state = outcome.state;
            prev = Some(action);
        }
    }
    Ok(rows)
}

/// Replays SAC and the pinned nested agent side by side and demands bitwise
/// agreement of every action and every loss value.
fn reduction_check(target_updates: usize) -> Check {
    guard("sac-bitwise", || {
        let seed = 424_242;
        let mut sac = SacAgent::new(2, 3, SacConfig::default(), seed)?;
        let reduced_config = NsacConfig {
            outer_updates: false,
            force_zero_mu: true,
            ..NsacConfig::default()
        };
        let mut reduced = NsacAgent::new(2, 3, reduced_config, seed)?;
        let sac_rows = run_on_linetrack(&mut sac, target_updates, seed)?;
        let reduced_rows = run_on_linetrack(&mut reduced, target_updates, seed)?;
        let mut mismatches = 0usize;
        let mut first: Option<usize> = None;
        if sac_rows.len() != reduced_rows.len() {
            mismatches += sac_rows.len().abs_diff(reduced_rows.len());
            first = Some(sac_rows.len().min(reduced_rows.len()));
        }
        for (i, (a, b)) in sac_rows.iter().zip(&reduced_rows).enumerate() {
            if a != b {
                mismatches += 1;
                first.get_or_insert(i);
            }
        }
        let updates = sac_rows.iter().filter(|(_, r)| r.is_some()).count();
        let detail = match first {
            None => format!("{updates} updates replayed bitwise"),
            Some(i) => format!("first divergence at step {i}"),
        };
        Ok(Check {
            name: "sac-bitwise",
            cases: 1,
            passed: usize::from(mismatches == 0 && updates >= target_updates),
            worst: mismatches as f64,
            tol: 0.0,
            detail,
        })
    })
}

// --------------------------------------------------------------- theorem1

/// The fully symmetric one-state chain: two equal-reward actions, so any
/// inertia leaves the return exactly alone while halving oscillation at
/// mu = 1/2.
fn symmetric_check() -> Check {
    guard("symmetric-exact", || {
        let spec = MdpSpec {
            n_states: 1,
            n_actions: 2,
            transition: vec![vec![vec![1.0], vec![1.0]]],
            reward: vec![vec![1.0, 1.0]],
            rho0: vec![1.0],
            gamma: 0.9,
            horizon: Some(100),
        };
        let core = TabularPolicy::uniform(1, 2);
        let report = theorem1_oracle(&spec, &core, &[0.0, 0.5])?;
        let mut worst = 0.0_f64;
        worst = worst.max((report.xi_core - 0.5).abs());
        worst = worst.max((report.xi_best - 0.25).abs());
        worst = worst.max((report.j_best - report.j_core).abs());
        Ok(Check {
            name: "symmetric-exact",
            cases: 1,
            passed: usize::from(worst == 0.0),
            worst,
            tol: 0.0,
            detail: String::from("xi 0.5 -> 0.25 at mu = 1/2, return unchanged"),
        })
    })
}

fn theorem1_checks(seeds: usize) -> Vec<Check> {
    let mut xi_worst = 0.0_f64;
    let mut j_worst = 0.0_f64;
    let mut xi_passed = 0;
    let mut j_passed = 0;
    let mut aborted: Option<String> = None;
    for seed in 0..seeds as u64 {
        let outcome = (|| -> Result<(f64, f64)> {
            let k = seed as usize;
            let spec = garnet(3 + k % 3, 2 + k % 2, 2, (k % 3) as f64 * 0.25, 7000 + seed)?;
            let core = soft_policy_iteration(&spec, 0.2, 2000, 1e-10)?.policy;
            let report = theorem1_oracle(&spec, &core, &[0.0, 0.2, 0.4, 0.6])?;
            Ok((report.xi_best - report.xi_core, report.j_core - report.j_best))
        })();
        match outcome {
            Ok((xi_excess, j_deficit)) => {
                if xi_excess <= 1e-12 {
                    xi_passed += 1;
                }
                if j_deficit <= 1e-9 {
                    j_passed += 1;
                }
                xi_worst = xi_worst.max(xi_excess);
                j_worst = j_worst.max(j_deficit);
            }
            Err(err) => {
                aborted.get_or_insert_with(|| format!("seed {seed} aborted: {err}"));
            }
        }
    }
    let detail = aborted.unwrap_or_default();
    vec![
        symmetric_check(),
        Check {
            name: "garnet-oscillation",
            cases: seeds,
            passed: xi_passed,
            worst: xi_worst,
            tol: 1e-12,
            detail: detail.clone(),
        },
        Check {
            name: "garnet-return",
            cases: seeds,
            passed: j_passed,
            worst: j_worst,
            tol: 1e-9,
            detail,
        },
    ]
}

// ---------------------------------------------------------- npi suites

fn npi_verification_config() -> NpiConfig {
    // monotonicity claims assume one shared objective across both levels
    NpiConfig {
        alpha_core: 0.1,
        alpha_mix: 0.1,
        outer_iters: 6,
        inner_iters: 1,
        enforce_gate: true,
        gate_n: 8.0,
        eval_tol: 1e-10,
        ..NpiConfig::default()
    }
}

fn npi_garnet(seed: u64) -> Result<MdpSpec> {
    let k = seed as usize;
    garnet(4 + k % 5, 2 + k % 2, 2, (k % 3) as f64 * 0.2, 5000 + seed)
}

/// Intermediate-improvement inequality on gated runs: whenever the gate
/// passes, `min(Q_mid - Q_old) >= (1 - 4/N) * min core improvement` up to
/// 1e-8.
fn lemma1_check(seeds: usize) -> Check {
    guard("intermediate-improvement", || {
        let config = npi_verification_config();
        let mut worst = 0.0_f64;
        let mut passed = 0;
        let mut gates = 0usize;
        let mut iterations = 0usize;
        for seed in 0..seeds as u64 {
            let spec = npi_garnet(seed)?;
            let result = nested_policy_iteration(&spec, &config)?;
            let mut seed_worst = 0.0_f64;
            for iteration in &result.iterations {
                iterations += 1;
                if iteration.gate.passes {
                    gates += 1;
                    seed_worst = seed_worst.max(-iteration.lemma_gap);
                }
            }
            if seed_worst <= 1e-8 {
                passed += 1;
            }
            worst = worst.max(seed_worst);
        }
        Ok(Check {
            name: "intermediate-improvement",
            cases: seeds,
            passed,
            worst,
            tol: 1e-8,
            detail: format!("gate passed on {gates}/{iterations} iterations"),
        })
    })
}

/// Objective monotonicity of gated runs: J never drops by more than 1e-8
/// between consecutive outer iterations.
fn monotone_check(seeds: usize) -> Check {
    guard("objective-monotone", || {
        let config = npi_verification_config();
        let mut worst = 0.0_f64;
        let mut passed = 0;
        for seed in 0..seeds as u64 {
            let spec = npi_garnet(seed)?;
            let result = nested_policy_iteration(&spec, &config)?;
            let mut seed_worst = 0.0_f64;
            for pair in result.j_history.windows(2) {
                seed_worst = seed_worst.max(pair[0] - pair[1]);
            }
            if seed_worst <= 1e-8 {
                passed += 1;
            }
            worst = worst.max(seed_worst);
        }
        Ok(Check {
            name: "objective-monotone",
            cases: seeds,
            passed,
            worst,
            tol: 1e-8,
            detail: String::new(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            assert_eq!(Suite::parse(suite.name()), Some(suite));
        }
        assert_eq!(Suite::parse("nonsense"), None);
    }

    #[test]
    fn tabular_suite_passes_at_reference_scale() {
        let report = run_suite(Suite::Tabular);
        assert!(report.ok(), "{report}");
        // the fixed-point and linear-solve paths agree far inside tolerance
        let linear = &report.checks[0];
        assert!(linear.worst < 1e-8, "worst {}", linear.worst);
    }

    #[test]
    fn gradcheck_suite_passes() {
        let report = run_suite(Suite::Gradcheck);
        assert!(report.ok(), "{report}");
        assert_eq!(report.checks.len(), 6);
    }

    #[test]
    fn reduction_replays_bitwise_at_small_scale() {
        let check = reduction_check(40);
        assert!(check.ok(), "{check}");
        assert!(check.detail.contains("updates replayed bitwise"));
    }

    #[test]
    fn symmetric_oracle_case_is_exact() {
        let check = symmetric_check();
        assert!(check.ok(), "{check}");
        assert_eq!(check.worst, 0.0);
    }

    #[test]
    fn theorem1_feasibility_holds_on_a_sample() {
        let checks = theorem1_checks(8);
        for check in &checks {
            assert!(check.ok(), "{check}");
        }
    }

    #[test]
    fn npi_suites_pass_on_a_sample() {
        let lemma = lemma1_check(5);
        assert!(lemma.ok(), "{lemma}");
        let monotone = monotone_check(5);
        assert!(monotone.ok(), "{monotone}");
    }

    #[test]
    fn failed_checks_render_their_reason() {
        let check = guard("demo", || {
            Err(CoreError::invalid("demo", "deliberate"))
        });
        assert!(!check.ok());
        let line = check.to_string();
        assert!(line.contains("demo") && line.contains("deliberate"), "{line}");
        assert!(line.contains("0/1"));
    }

    #[test]
    fn suite_report_display_lists_every_check() {
        let report = SuiteReport {
            suite: Suite::Lemma1,
            checks: vec![Check {
                name: "x",
                cases: 2,
                passed: 2,
                worst: 0.0,
                tol: 1e-8,
                detail: String::new(),
            }],
        };
        let text = report.to_string();
        assert!(text.contains("suite lemma1: PASS"));
        assert!(text.contains("2/2 pass"));
    }
}
