//! Cost-asymmetric client-side key stretching.
//!
//! A password is hashed in up to `n` rounds of `k` iterations each. Randomly
//! chosen halting predicates, stored on the client, decide after which round
//! derivation stops. The legitimate client pays for the rounds its own
//! password needs; an offline attacker must pay for many wrong guesses at
//! once and cannot tell in advance which of them stop early.
//!
//! Modules:
//! - [`outcome_space`]: residue predicates and symmetric outcome spaces
//! - [`kdf`]: iterated hashing, account creation and re-derivation
//! - [`mechanism`]: predicate-selection distributions and their constraints
//! - [`adversary`]: the optimal offline adversary and gain computation
//! - [`lp`] and [`optimizer`]: budget-aware mechanism design
//! - [`simulator`]: Monte Carlo validation on a synthetic password space

pub mod adversary;
pub mod error;
pub mod kdf;
pub mod lp;
pub mod mechanism;
pub mod optimizer;
pub mod outcome_space;
pub mod simulator;

pub use error::{CashError, Result};
