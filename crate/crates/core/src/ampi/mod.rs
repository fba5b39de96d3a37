//! Sampled modified policy iteration: AMPI-V, AMPI-Q and CBMPI (with DPI as
//! the value-free special case), all driven through a [`GenerativeModel`].
//!
//! Every random draw comes from a stream keyed by
//! `(seed, k, purpose, i, a, j)`, so traces do not depend on how rayon
//! schedules the rollouts.

mod algos;
mod model;
mod rollout;

pub use algos::{
    run_ampi_q, run_ampi_v, run_cbmpi, AmpiQOutcome, AmpiVOutcome, CbmpiOutcome, QGreedyPolicy, SampledGreedyPolicy,
};
pub use model::{tabular_step, CountingModel, GenerativeModel, StartDistribution, TabularModel};
pub use rollout::{estimate_greedy_action_v, sample_rollout, Provenance, Purpose, Rollout, RolloutBatch};

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use crate::analysis::Run;
use crate::error::{invalid_arg, Error, Result};
use crate::mdp::DeterministicPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    AmpiV,
    AmpiQ,
    Cbmpi,
    /// CBMPI with the value approximator pinned to zero.
    Dpi,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::AmpiV, Variant::AmpiQ, Variant::Cbmpi, Variant::Dpi];

    pub fn name(self) -> &'static str {
        match self {
            Variant::AmpiV => "ampi-v",
            Variant::AmpiQ => "ampi-q",
            Variant::Cbmpi => "cbmpi",
            Variant::Dpi => "dpi",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| invalid_arg(format!("unknown variant `{s}` (expected ampi-v, ampi-q, cbmpi or dpi)")))
    }
}

/// Parameters shared by the sampled algorithms.
///
/// Which counts are read depends on the variant: AMPI-V uses `m, M, N`;
/// AMPI-Q uses `m, N`; CBMPI uses `m, M, N, n`; DPI uses `m, M, N` and
/// requires `n = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmpiConfig {
    pub variant: Variant,
    /// Rollout length.
    pub m: usize,
    /// `M`: samples per action (greedy estimate or rollouts per pair).
    pub samples: usize,
    /// `N`: rollout-set size of the greedy step.
    pub greedy_states: usize,
    /// `n`: rollout-set size of the evaluation step.
    pub eval_states: usize,
    pub k_max: usize,
    pub seed: u64,
    /// CBMPI/DPI start from the policy playing this action everywhere.
    pub initial_action: usize,
}

impl Default for AmpiConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cbmpi,
            m: 1,
            samples: 1,
            greedy_states: 10,
            eval_states: 10,
            k_max: 10,
            seed: 0,
            initial_action: 0,
        }
    }
}

/// Nominal per-iteration budget of the CBMPI experiment protocol:
/// `B_R = m M N |A|` for the greedy step and `B_C = m n |A|` for the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub rollout: u64,
    pub critic: u64,
}

impl Budget {
    pub fn total(&self) -> u64 {
        self.rollout + self.critic
    }

    /// `p = B_C / B`.
    pub fn critic_ratio(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.critic as f64 / self.total() as f64
        }
    }
}

impl AmpiConfig {
    pub fn validate(&self, n_actions: usize) -> Result<()> {
        let positive = |name: &str, x: usize| {
            if x == 0 {
                Err(invalid_arg(format!("{name} must be at least 1")))
            } else {
                Ok(())
            }
        };
        positive("m", self.m)?;
        positive("k_max", self.k_max)?;
        positive("N", self.greedy_states)?;
        match self.variant {
            Variant::AmpiV => positive("M", self.samples)?,
            Variant::AmpiQ => {}
            Variant::Cbmpi => {
                positive("M", self.samples)?;
                positive("n", self.eval_states)?;
            }
            Variant::Dpi => {
                positive("M", self.samples)?;
                if self.eval_states != 0 {
                    return Err(invalid_arg("dpi has no evaluation step; n must be 0"));
                }
            }
        }
        if self.initial_action >= n_actions {
            return Err(invalid_arg(format!(
                "initial action {} out of range for {n_actions} actions",
                self.initial_action
            )));
        }
        Ok(())
    }

    /// Transitions drawn per iteration, exactly.
    pub fn transitions_per_iteration(&self, n_actions: usize) -> u64 {
        let (m, big_m, big_n, n, a) = (
            self.m as u64,
            self.samples as u64,
            self.greedy_states as u64,
            self.eval_states as u64,
            n_actions as u64,
        );
        match self.variant {
            Variant::AmpiV => big_n * m * (big_m * a + 1),
            Variant::AmpiQ => big_n * m,
            Variant::Cbmpi => n * m + big_m * a * big_n * (m + 1),
            Variant::Dpi => big_m * a * big_n * (m + 1),
        }
    }

    pub fn nominal_budget(&self, n_actions: usize) -> Budget {
        let a = n_actions as u64;
        let m = self.m as u64;
        let critic = match self.variant {
            Variant::Dpi => 0,
            _ => m * self.eval_states as u64 * a,
        };
        Budget {
            rollout: m * self.samples as u64 * self.greedy_states as u64 * a,
            critic,
        }
    }
}

/// Exact view of one iterate on a finite state set.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularIterate {
    /// `v_k`; for AMPI-Q, `max_a Q_k(s, a)`.
    pub values: Vec<f64>,
    /// `Q_k`, flattened `[s][a]` (AMPI-Q only).
    pub q_values: Option<Vec<f64>>,
    /// `pi_{k+1}`, the policy the next iteration acts with.
    pub next_policy: DeterministicPolicy,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// Fitted weights of `v_k` (or `Q_k`).
    pub weights: Vec<f64>,
    pub transitions: u64,
    pub wall_time: Duration,
    pub regression_mse: Option<f64>,
    pub classifier_loss: Option<f64>,
    /// `||v_* - v_{pi_k}||_inf`, when a tabular backing exists.
    pub loss: Option<f64>,
    pub tabular: Option<TabularIterate>,
}

/// Wall time is informational and excluded from comparisons.
impl PartialEq for IterationRecord {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k
            && self.weights == other.weights
            && self.transitions == other.transitions
            && self.regression_mse == other.regression_mse
            && self.classifier_loss == other.classifier_loss
            && self.loss == other.loss
            && self.tabular == other.tabular
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub config: AmpiConfig,
    /// `v_0` and `pi_1`, when a tabular backing exists.
    pub initial: Option<TabularIterate>,
    pub records: Vec<IterationRecord>,
}

pub const TRACE_HEADER: &str = "k,variant,m,M,N,n,transitions,loss,empirical_regression_mse,empirical_classifier_loss";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl IterationTrace {
    pub fn total_transitions(&self) -> u64 {
        self.records.iter().map(|r| r.transitions).sum()
    }

    /// One row per iteration.
    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.k,
                c.variant,
                c.m,
                c.samples,
                c.greedy_states,
                c.eval_states,
                r.transitions,
                opt(r.loss),
                opt(r.regression_mse),
                opt(r.classifier_loss)
            );
        }
        out
    }

    /// `(v_0..v_K, pi_1..pi_{K+1})`, when every iterate was recorded.
    pub fn tabular_run(&self) -> Option<Run> {
        let initial = self.initial.as_ref()?;
        let mut values = vec![initial.values.clone()];
        let mut policies = vec![initial.next_policy.clone()];
        for r in &self.records {
            let t = r.tabular.as_ref()?;
            values.push(t.values.clone());
            policies.push(t.next_policy.clone());
        }
        Some(Run { values, policies })
    }

    /// Iterates as CSV rows `k,state,value,action`: `v_k(s)` and `pi_{k+1}(s)`.
    pub fn iterates_csv(&self) -> Option<String> {
        self.tabular_run().map(|run| run.to_csv())
    }
}
