use super::{apply_m_raw, greedy_raw, policy_value, sup_distance, DeterministicPolicy, TabularMdp, ValueFunction};
use crate::error::{invalid_arg, Result};

/// Number of Bellman applications in the evaluation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSteps {
    /// `(T_pi)^m`, with `m >= 1`. `Finite(1)` is value iteration.
    Finite(usize),
    /// Full policy evaluation, i.e. policy iteration.
    Infinite,
}

impl EvalSteps {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "inf" | "infinity" | "∞" => Some(Self::Infinite),
            other => other.parse().ok().filter(|m| *m >= 1).map(Self::Finite),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpiOptions {
    /// Stop once `||v_{k+1} - v_k||_inf < tol`.
    pub tol: f64,
    pub k_max: usize,
}

impl Default for MpiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            k_max: 10_000,
        }
    }
}

/// One greedy + evaluation step: `pi_{k+1} = G v_k`, `v_{k+1} = (T_{pi_{k+1}})^m v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpiIterate {
    pub policy: DeterministicPolicy,
    pub value: ValueFunction,
    /// `||v_{k+1} - v_k||_inf`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpiOutcome {
    /// Greedy policy w.r.t. the final value.
    pub policy: DeterministicPolicy,
    pub value: ValueFunction,
    pub trace: Vec<MpiIterate>,
    pub converged: bool,
}

/// Exact modified policy iteration from `v0`.
pub fn exact_mpi(mdp: &TabularMdp, v0: &ValueFunction, steps: EvalSteps, opts: MpiOptions) -> Result<MpiOutcome> {
    if let EvalSteps::Finite(0) = steps {
        return Err(invalid_arg("m must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid_arg("tolerance must be positive"));
    }
    mdp.check_state_values(v0)?;

    let mut v = v0.as_slice().to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.k_max {
        let policy = greedy_raw(mdp, &v);
        let next = match steps {
            EvalSteps::Finite(m) => apply_m_raw(mdp, &policy, &v, m),
            EvalSteps::Infinite => policy_value(mdp, &policy)?.into_vec(),
        };
        let delta = sup_distance(&next, &v);
        v = next;
        trace.push(MpiIterate {
            policy,
            value: ValueFunction::states(v.clone()),
            delta,
        });
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(MpiOutcome {
        policy: greedy_raw(mdp, &v),
        value: ValueFunction::states(v),
        trace,
        converged,
    })
}
