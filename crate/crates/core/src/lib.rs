//! Discrete-action reinforcement learning with a learned policy inertia
//! controller.
//!
//! A mixed policy reuses the previous action with a state-dependent
//! probability mu(s, a_prev) and otherwise samples a core policy:
//!
//! ```text
//! pi(. | s, a_prev) = mu(s, a_prev) * delta(a_prev) + (1 - mu(s, a_prev)) * pi_core(. | s)
//! ```
//!
//! The crate provides exact tabular machinery (soft policy evaluation and
//! iteration, nested policy iteration with an inertia gate, oscillation
//! metrics), a small reverse-mode dense network stack, a nested soft
//! actor-critic agent that learns mu jointly with the core policy, value-based
//! and actor-critic baselines, and two deterministic toy environments.
//!
//! Everything here is `no_std`-compatible (requires `alloc`); file IO, the
//! CLI, and plotting live in the companion `inertia-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod agent;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod eval;
pub mod garnet;
pub mod math;
pub mod mdp;
pub mod metrics;
pub mod mixed;
pub mod net;
pub mod npi;
pub mod nsac;
pub mod replay;
pub mod verify;

pub use error::CoreError;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, CoreError>;
