//! Modified policy iteration, exact and approximate.
//!
//! [`mdp`] holds finite MDPs and the exact solver, [`approx`] the value and
//! policy spaces, [`ampi`] the sampled algorithms over a generative model,
//! [`analysis`] the error-propagation checks, and [`env`] the benchmark problems.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ampi;
pub mod analysis;
pub mod approx;
pub mod env;
pub mod error;
pub mod mdp;
pub mod rng;

pub use ampi::{AmpiConfig, GenerativeModel, IterationRecord, IterationTrace, Variant};
pub use analysis::{audit_run, BoundReport, BoundVariant, Run};
pub use error::{Error, Result};
pub use mdp::{
    exact_mpi, optimal_value, policy_value, DeterministicPolicy, EvalSteps, MpiOptions, TabularMdp, ValueFunction,
};
