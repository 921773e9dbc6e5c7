//! Exact soft policy iteration and nested policy iteration with an inertia
//! gate.
//!
//! The nested scheme alternates two improvement levels on a finite MDP:
//!
//! * inner: soft policy iteration on the core policy at temperature
//!   `alpha_core` (softmax improvement against the exact soft Q);
//! * outer: grid improvement of the inertia table `mu[s][a_prev]` against the
//!   exact soft Q of the current mixed policy at temperature `alpha_mix`.
//!
//! The gate bounds how much inertia may be in place while the core moves:
//! with `bound = min_{s,a}(Q_new^core - Q_old^core) / (N * C0 * sum_t t
//! gamma^t)` and every `mu <= bound`, the intermediate mixed policy (new
//! core, old inertia) is guaranteed at least `(1 - 4/N)` of the core's worst
//! improvement. All gate quantities are plain (alpha = 0) exact values; `C0`
//! bounds the absolute advantages of the policies the statement references.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::eval::{
    exact_policy_evaluation, exact_policy_evaluation_core, soft_state_value, AugValues, CoreValues,
};
use crate::math;
use crate::mdp::{MdpSpec, TabularPolicy};
use crate::metrics::exact_oscillation;
use crate::mixed::MixedTabularPolicy;
use crate::Result;

/// Configuration for [`nested_policy_iteration`].
#[derive(Debug, Clone)]
pub struct NpiConfig {
    /// Inner (core) temperature.
    pub alpha_core: f64,
    /// Outer (mixed) temperature.
    pub alpha_mix: f64,
    /// Outer iterations `t_out`.
    pub outer_iters: usize,
    /// Inner soft-policy-iteration steps per outer iteration `t_in`.
    pub inner_iters: usize,
    /// Candidate inertia values for the outer improvement.
    pub mu_grid: Vec<f64>,
    /// Sup-norm tolerance for every exact evaluation.
    pub eval_tol: f64,
    /// Restrict outer candidates to values at or below the gate bound
    /// (the incumbent entry always stays admissible).
    pub enforce_gate: bool,
    /// Gate constant `N`; the guaranteed improvement factor is `1 - 4/N`.
    pub gate_n: f64,
    /// Pin the inertia table to zero (reduces the scheme to the inner loop).
    pub force_zero_mu: bool,
}

impl Default for NpiConfig {
    fn default() -> Self {
        NpiConfig {
            alpha_core: 0.1,
            alpha_mix: 0.01,
            outer_iters: 10,
            inner_iters: 1,
            mu_grid: default_mu_grid(),
            eval_tol: 1e-10,
            enforce_gate: false,
            gate_n: 8.0,
            force_zero_mu: false,
        }
    }
}

/// `{0.00, 0.05, ..., 0.95}`.
pub fn default_mu_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).collect()
}

impl NpiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(CoreError::invalid("NpiConfig", "mu_grid must be nonempty"));
        }
        for &g in &self.mu_grid {
            if !(0.0..=1.0).contains(&g) {
                return Err(CoreError::invalid(
                    "NpiConfig",
                    alloc::format!("mu_grid entry {g} outside [0, 1]"),
                ));
            }
        }
        if !(self.eval_tol > 0.0) {
            return Err(CoreError::invalid("NpiConfig", "eval_tol must be positive"));
        }
        if self.alpha_core < 0.0 || self.alpha_mix < 0.0 {
            return Err(CoreError::invalid("NpiConfig", "temperatures must be nonnegative"));
        }
        if self.gate_n < 4.0 {
            return Err(CoreError::invalid("NpiConfig", "gate_n must be at least 4"));
        }
        Ok(())
    }
}

/// Softmax improvement `pi(a|s) = exp(Q(s,a)/alpha) / Z(s)`.
///
/// `alpha = 0` degenerates to the greedy policy with lowest-index
/// tie-breaking; this is documented behavior, not an error.
pub fn soft_policy_improvement(q_core: &CoreValues, alpha: f64) -> TabularPolicy {
    let probs = q_core
        .q
        .iter()
        .map(|row| {
            if alpha > 0.0 {
                math::softmax(row, alpha)
            } else {
                let mut out = vec![0.0; row.len()];
                out[math::argmax_low(row)] = 1.0;
                out
            }
        })
        .collect();
    TabularPolicy { probs }
}

/// Result of [`soft_policy_iteration`].
#[derive(Debug, Clone)]
pub struct SoftPiResult {
    pub policy: TabularPolicy,
    pub values: CoreValues,
    /// Maximum-entropy objective before each improvement plus the final
    /// policy's objective; one entry per evaluation.
    pub j_history: Vec<f64>,
}

/// Sup-norm policy change below which soft policy iteration is converged.
const POLICY_TOL: f64 = 1e-9;

/// Exact soft policy iteration from the uniform policy.
pub fn soft_policy_iteration(
    spec: &MdpSpec,
    alpha: f64,
    max_iters: usize,
    eval_tol: f64,
) -> Result<SoftPiResult> {
    spec.validate()?;
    let mut policy = TabularPolicy::uniform(spec.n_states, spec.n_actions);
    let mut j_history = Vec::with_capacity(max_iters + 1);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let values = exact_policy_evaluation_core(spec, &policy, alpha, eval_tol)?;
        j_history.push(weighted_value(&spec.rho0, &values.v));
        let improved = soft_policy_improvement(&values, alpha);
        residual = policy_distance(&policy, &improved);
        policy = improved;
        if residual <= POLICY_TOL {
            let values = exact_policy_evaluation_core(spec, &policy, alpha, eval_tol)?;
            j_history.push(weighted_value(&spec.rho0, &values.v));
            return Ok(SoftPiResult {
                policy,
                values,
                j_history,
            });
        }
    }
    Err(CoreError::NonConvergence {
        sweeps: max_iters,
        residual,
        tol: POLICY_TOL,
    })
}

fn weighted_value(rho0: &[f64], v: &[f64]) -> f64 {
    rho0.iter().zip(v).map(|(&p, &x)| p * x).sum()
}

fn policy_distance(a: &TabularPolicy, b: &TabularPolicy) -> f64 {
    let mut d: f64 = 0.0;
    for (ra, rb) in a.probs.iter().zip(&b.probs) {
        for (&pa, &pb) in ra.iter().zip(rb) {
            d = d.max((pa - pb).abs());
        }
    }
    d
}

/// Picks, for each (state, prev_action), the grid inertia maximizing the
/// one-step soft objective `E_mixed[Q] + alpha_mix * H(mixed)` against the
/// given mixed-policy values. Ties break toward the smaller value.
///
/// Note the objective itself never rewards inertia on a flat Q row: the
/// mixture entropy is maximal at `mu = 0`, so positive temperatures select
/// zero there. Oscillation reduction on flat rows comes from the existence
/// search (`theorem1_oracle`), not from this improvement step.
pub fn outer_mu_improvement(
    spec: &MdpSpec,
    core: &TabularPolicy,
    q_aug: &AugValues,
    alpha_mix: f64,
    mu_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if mu_grid.is_empty() {
        return Err(CoreError::invalid("outer_mu_improvement", "empty mu grid"));
    }
    let mut mu = vec![vec![0.0; spec.n_actions]; spec.n_states];
    let mut scratch = vec![0.0; spec.n_actions];
    for s in 0..spec.n_states {
        for p in 0..spec.n_actions {
            mu[s][p] = best_mu_entry(
                &core.probs[s],
                &q_aug.q[s][p],
                p,
                alpha_mix,
                mu_grid.iter().copied(),
                &mut scratch,
            )?;
        }
    }
    Ok(mu)
}

/// Scans candidate inertia values for one (state, prev_action) row; first
/// strictly-better candidate wins, so ascending grids break ties low.
fn best_mu_entry(
    core_row: &[f64],
    q_row: &[f64],
    prev: usize,
    alpha_mix: f64,
    candidates: impl Iterator<Item = f64>,
    scratch: &mut [f64],
) -> Result<f64> {
    let mut best = f64::NAN;
    let mut best_score = f64::NEG_INFINITY;
    for g in candidates {
        if !(0.0..=1.0).contains(&g) {
            return Err(CoreError::invalid(
                "outer_mu_improvement",
                alloc::format!("candidate mu {g} outside [0, 1]"),
            ));
        }
        crate::mixed::mix_into(core_row, Some(prev), g, scratch);
        let score = soft_state_value(q_row, scratch, alpha_mix);
        if score > best_score {
            best_score = score;
            best = g;
        }
    }
    Ok(best)
}

/// Gate constants: `N`, the advantage bound `C0`, and the time-weighted
/// discount series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Params {
    pub n_factor: f64,
    pub c0: f64,
    pub series_sum: f64,
}

impl Lemma1Params {
    /// Builds params, computing the series from the discount and horizon.
    pub fn new(n_factor: f64, c0: f64, gamma: f64, horizon: Option<usize>) -> Self {
        Lemma1Params {
            n_factor,
            c0,
            series_sum: time_weighted_discount_series(gamma, horizon),
        }
    }
}

/// `sum_{t=0..T} t * gamma^t`, or the closed form `gamma / (1-gamma)^2` for
/// an unbounded horizon.
pub fn time_weighted_discount_series(gamma: f64, horizon: Option<usize>) -> f64 {
    match horizon {
        Some(t_max) => {
            let mut acc = 0.0;
            let mut pow = 1.0;
            for t in 0..=t_max {
                acc += t as f64 * pow;
                pow *= gamma;
            }
            acc
        }
        None => gamma / ((1.0 - gamma) * (1.0 - gamma)),
    }
}

/// Outcome of a gate check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Gate {
    /// Whether every inertia entry is at or below `bound`.
    pub passes: bool,
    /// Largest admissible inertia, `min_improvement / (N * C0 * series)`.
    pub bound: f64,
    /// `min_{s,a}(Q_new - Q_old)` over the core tables.
    pub min_improvement: f64,
}

/// Checks the inertia table against the improvement bound. A negative worst
/// improvement makes the gate fail with a nonpositive bound; that is a
/// reported outcome, not an error.
pub fn lemma1_gate(
    q_core_old: &CoreValues,
    q_core_new: &CoreValues,
    mu_table: &[Vec<f64>],
    params: &Lemma1Params,
) -> Lemma1Gate {
    let mut min_improvement = f64::INFINITY;
    for (row_new, row_old) in q_core_new.q.iter().zip(&q_core_old.q) {
        for (&qn, &qo) in row_new.iter().zip(row_old) {
            let d = qn - qo;
            if d < min_improvement {
                min_improvement = d;
            }
        }
    }
    let denom = params.n_factor * params.c0 * params.series_sum;
    let bound = if denom > 0.0 {
        min_improvement / denom
    } else if min_improvement >= 0.0 {
        // nothing at stake: no future weight or no advantage spread
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let passes = mu_table
        .iter()
        .flat_map(|row| row.iter())
        .all(|&m| m <= bound);
    Lemma1Gate {
        passes,
        bound,
        min_improvement,
    }
}

/// Per-outer-iteration diagnostics of a nested run.
#[derive(Debug, Clone, Copy)]
pub struct NpiIteration {
    /// Soft objective (at `alpha_mix`) of the mixed policy after the outer
    /// update.
    pub j: f64,
    /// Exact oscillation after the outer update; NaN when the horizon is
    /// unbounded.
    pub xi: f64,
    pub gate: Lemma1Gate,
    /// `min_{s,p,a} (Q_mid - Q_old) - (1 - 4/N) * min_improvement`, plain
    /// values; must exceed `-1e-8` whenever the gate passes.
    pub lemma_gap: f64,
}

/// Result of [`nested_policy_iteration`].
#[derive(Debug, Clone)]
pub struct NpiResult {
    pub policy: MixedTabularPolicy,
    /// Index 0 is the initial policy's objective, then one entry per outer
    /// iteration.
    pub j_history: Vec<f64>,
    pub xi_history: Vec<f64>,
    pub iterations: Vec<NpiIteration>,
}

/// Runs nested policy iteration from the uniform core and zero inertia.
pub fn nested_policy_iteration(spec: &MdpSpec, config: &NpiConfig) -> Result<NpiResult> {
    spec.validate()?;
    config.validate()?;
    let (ns, na) = (spec.n_states, spec.n_actions);

    let mut core = TabularPolicy::uniform(ns, na);
    let mut mu = vec![vec![0.0; na]; ns];

    let mut j_history = Vec::with_capacity(config.outer_iters + 1);
    let mut xi_history = Vec::with_capacity(config.outer_iters + 1);
    let mut iterations = Vec::with_capacity(config.outer_iters);

    let (j0, xi0) = mixed_objectives(spec, &core, &mu, config)?;
    j_history.push(j0);
    xi_history.push(xi0);

    for _ in 0..config.outer_iters {
        // plain tables of the outgoing policies feed the gate
        let q_core_old_plain = exact_policy_evaluation_core(spec, &core, 0.0, config.eval_tol)?;
        let old_mixed = MixedTabularPolicy {
            core: core.clone(),
            mu: mu.clone(),
        }
        .to_augmented();
        let q_old_plain = exact_policy_evaluation(spec, &old_mixed, 0.0, config.eval_tol)?;

        // inner: t_in soft improvement steps on the core
        for _ in 0..config.inner_iters {
            let values = exact_policy_evaluation_core(spec, &core, config.alpha_core, config.eval_tol)?;
            core = soft_policy_improvement(&values, config.alpha_core);
        }

        let q_core_new_plain = exact_policy_evaluation_core(spec, &core, 0.0, config.eval_tol)?;
        let c0 = 1.1
            * max_abs_advantage_core(&q_core_new_plain).max(max_abs_advantage_aug(&q_old_plain));
        let params = Lemma1Params::new(config.gate_n, c0, spec.gamma, spec.horizon);
        let gate = lemma1_gate(&q_core_old_plain, &q_core_new_plain, &mu, &params);

        // intermediate policy: new core under the old inertia
        let mid_mixed = MixedTabularPolicy {
            core: core.clone(),
            mu: mu.clone(),
        };
        let q_mid_plain =
            exact_policy_evaluation(spec, &mid_mixed.to_augmented(), 0.0, config.eval_tol)?;
        let mut lemma_gap = f64::INFINITY;
        for s in 0..ns {
            for p in 0..=na {
                for a in 0..na {
                    let delta = q_mid_plain.q[s][p][a] - q_old_plain.q[s][p][a];
                    let gap = delta - (1.0 - 4.0 / config.gate_n) * gate.min_improvement;
                    if gap < lemma_gap {
                        lemma_gap = gap;
                    }
                }
            }
        }

        // outer: improve the inertia table against the intermediate soft Q
        let q_mid_soft = exact_policy_evaluation(
            spec,
            &mid_mixed.to_augmented(),
            config.alpha_mix,
            config.eval_tol,
        )?;
        let mut scratch = vec![0.0; na];
        for s in 0..ns {
            for p in 0..na {
                mu[s][p] = if config.force_zero_mu {
                    0.0
                } else if config.enforce_gate {
                    let admissible = config
                        .mu_grid
                        .iter()
                        .copied()
                        .filter(|&g| g <= gate.bound)
                        .chain(core::iter::once(mu[s][p]));
                    best_mu_entry(
                        &core.probs[s],
                        &q_mid_soft.q[s][p],
                        p,
                        config.alpha_mix,
                        admissible,
                        &mut scratch,
                    )?
                } else {
                    best_mu_entry(
                        &core.probs[s],
                        &q_mid_soft.q[s][p],
                        p,
                        config.alpha_mix,
                        config.mu_grid.iter().copied(),
                        &mut scratch,
                    )?
                };
            }
        }

        let (j, xi) = mixed_objectives(spec, &core, &mu, config)?;
        j_history.push(j);
        xi_history.push(xi);
        iterations.push(NpiIteration {
            j,
            xi,
            gate,
            lemma_gap,
        });
    }

    Ok(NpiResult {
        policy: MixedTabularPolicy { core, mu },
        j_history,
        xi_history,
        iterations,
    })
}

fn mixed_objectives(
    spec: &MdpSpec,
    core: &TabularPolicy,
    mu: &[Vec<f64>],
    config: &NpiConfig,
) -> Result<(f64, f64)> {
    let mixed = MixedTabularPolicy {
        core: core.clone(),
        mu: mu.to_vec(),
    };
    let aug = mixed.to_augmented();
    let values = exact_policy_evaluation(spec, &aug, config.alpha_mix, config.eval_tol)?;
    let j = spec
        .rho0
        .iter()
        .enumerate()
        .map(|(s, &p)| p * values.v_null(s))
        .sum();
    let xi = match spec.horizon {
        Some(_) => exact_oscillation(spec, &mixed)?,
        None => f64::NAN,
    };
    Ok((j, xi))
}

fn max_abs_advantage_core(values: &CoreValues) -> f64 {
    let mut worst: f64 = 0.0;
    for (row, &v) in values.q.iter().zip(&values.v) {
        for &q in row {
            worst = worst.max((q - v).abs());
        }
    }
    worst
}

fn max_abs_advantage_aug(values: &AugValues) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..values.q.len() {
        for p in 0..values.q[s].len() {
            let v = values.v[s][p];
            for &q in &values.q[s][p] {
                worst = worst.max((q - v).abs());
            }
        }
    }
    worst
}

/// Existence report for the inertia theorem: the best grid assignment found
/// with no worse return and no higher oscillation than the core.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Winning inertia table `[state][prev_action]`.
    pub mu: Vec<Vec<f64>>,
    pub xi_core: f64,
    pub xi_best: f64,
    pub j_core: f64,
    pub j_best: f64,
}

/// Max candidate evaluations for the exhaustive branch of the oracle.
const EXHAUSTIVE_BUDGET: usize = 20_000;

/// Searches constant-per-(state, prev_action) inertia assignments for one
/// that lowers exact oscillation without losing return.
///
/// The all-zero assignment reproduces the core exactly, so the feasible set
/// is never empty. Tiny problems (at most 6 augmented states and a candidate
/// product within budget) are enumerated exhaustively; everything else uses
/// greedy coordinate descent on oscillation subject to `J >= J_core - 1e-9`.
pub fn theorem1_oracle(
    spec: &MdpSpec,
    core: &TabularPolicy,
    mu_grid: &[f64],
) -> Result<Theorem1Report> {
    spec.validate()?;
    spec.finite_horizon("theorem1_oracle")?;
    if mu_grid.is_empty() {
        return Err(CoreError::invalid("theorem1_oracle", "empty mu grid"));
    }
    let (ns, na) = (spec.n_states, spec.n_actions);
    let coords = ns * na;

    let zero = MixedTabularPolicy::from_core(core.clone());
    let xi_core = exact_oscillation(spec, &zero)?;
    let j_core = crate::eval::exact_return(spec, &zero.to_augmented())?;
    let j_floor = j_core - 1e-9;

    let mut best_mu = zero.mu.clone();
    let mut best_xi = xi_core;
    let mut best_j = j_core;

    let consider = |mu: &Vec<Vec<f64>>, best_xi: &mut f64, best_j: &mut f64, best_mu: &mut Vec<Vec<f64>>| -> Result<()> {
        let cand = MixedTabularPolicy {
            core: core.clone(),
            mu: mu.clone(),
        };
        let xi = exact_oscillation(spec, &cand)?;
        if xi >= *best_xi {
            return Ok(());
        }
        let j = crate::eval::exact_return(spec, &cand.to_augmented())?;
        if j >= j_floor {
            *best_xi = xi;
            *best_j = j;
            *best_mu = mu.clone();
        }
        Ok(())
    };

    let exhaustive = ns * (na + 1) <= 6
        && checked_product(mu_grid.len(), coords).is_some_and(|n| n <= EXHAUSTIVE_BUDGET);
    if exhaustive {
        let mut picks = vec![0usize; coords];
        loop {
            let mu: Vec<Vec<f64>> = (0..ns)
                .map(|s| (0..na).map(|p| mu_grid[picks[s * na + p]]).collect())
                .collect();
            consider(&mu, &mut best_xi, &mut best_j, &mut best_mu)?;
            // odometer increment over grid indices
            let mut i = 0;
            loop {
                if i == coords {
                    return Ok(Theorem1Report {
                        mu: best_mu,
                        xi_core,
                        xi_best: best_xi,
                        j_core,
                        j_best: best_j,
                    });
                }
                picks[i] += 1;
                if picks[i] < mu_grid.len() {
                    break;
                }
                picks[i] = 0;
                i += 1;
            }
        }
    }

    // greedy coordinate descent, a few sweeps or until stable
    for _ in 0..3 {
        let mut changed = false;
        for s in 0..ns {
            for p in 0..na {
                let incumbent = best_mu[s][p];
                for &g in mu_grid {
                    if g == incumbent {
                        continue;
                    }
                    let mut mu = best_mu.clone();
                    mu[s][p] = g;
                    let before = best_xi;
                    consider(&mu, &mut best_xi, &mut best_j, &mut best_mu)?;
                    if best_xi < before {
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    Ok(Theorem1Report {
        mu: best_mu,
        xi_core,
        xi_best: best_xi,
        j_core,
        j_best: best_j,
    })
}

fn checked_product(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
        if acc > EXHAUSTIVE_BUDGET {
            return Some(acc);
        }
    }
    Some(acc)
}
