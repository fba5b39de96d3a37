//! Finite MDPs, Bellman operators and the exact modified policy iteration solver.
//!
//! Everything here is dense and exact; these routines are the ground truth that
//! the sampled algorithms and the error-analysis engine are checked against.

mod noncontraction;
mod solver;
mod text;

pub use noncontraction::{check_noncontraction, NonContractionRow};
pub use solver::{exact_mpi, EvalSteps, MpiIterate, MpiOptions, MpiOutcome};
pub use text::{parse_mdp, write_mdp};

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_arg, invalid_input, Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// A finite discounted MDP with an explicit transition tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']`.
    transition: Vec<f64>,
    /// Row-major `[s][a]`.
    reward: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transition` is indexed `[s][a][s']` and
    /// `reward` is indexed `[s][a]`, both flattened row-major.
    pub fn new(n_states: usize, n_actions: usize, transition: Vec<f64>, reward: Vec<f64>, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid_input("MDP needs at least one state and one action"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid_input(format!("discount {gamma} outside (0, 1)")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(invalid_input(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(invalid_input(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(invalid_input(format!(
                        "transition row ({s}, {a}) has a negative or non-finite entry"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    return Err(invalid_input(format!("transition row ({s}, {a}) sums to {total}")));
                }
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(invalid_input("reward table has a non-finite entry"));
        }
        let observed = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        // An all-zero reward table still needs a positive value range.
        let r_max = if observed > 0.0 { observed } else { 1.0 };
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            r_max,
        })
    }

    /// Declares a looser reward bound than the observed `max |r|`.
    pub fn with_reward_bound(mut self, r_max: f64) -> Result<Self> {
        let observed = self.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        if !(r_max.is_finite() && r_max > 0.0 && r_max >= observed) {
            return Err(invalid_arg(format!(
                "reward bound {r_max} does not cover max |r| = {observed}"
            )));
        }
        self.r_max = r_max;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `r_max / (1 - gamma)`, the range of every value function.
    pub fn v_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// The next-state distribution `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    /// `sum_{s'} P(s'|s,a) x(s')`.
    pub fn expect(&self, s: usize, a: usize, x: &[f64]) -> f64 {
        self.row(s, a).iter().zip(x).map(|(p, v)| p * v).sum()
    }

    /// One-step backup `(T_a x)(s) = r(s,a) + gamma * E[x(s')]`.
    pub fn backup(&self, s: usize, a: usize, x: &[f64]) -> f64 {
        self.reward(s, a) + self.gamma * self.expect(s, a, x)
    }

    /// True when every transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states)
            .all(|s| (0..self.n_actions).all(|a| self.row(s, a).iter().filter(|p| **p > 0.0).count() == 1))
    }

    /// `P_pi x`, the policy kernel applied to a column vector.
    pub fn kernel_apply(&self, policy: &DeterministicPolicy, x: &[f64]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.expect(s, policy.action(s), x))
            .collect()
    }

    /// `nu P_pi`, a row vector (distribution) pushed one step through the kernel.
    pub fn kernel_push(&self, policy: &DeterministicPolicy, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for (s, &mass) in nu.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(s, policy.action(s))) {
                *o += mass * p;
            }
        }
        out
    }

    /// `(gamma P_pi)^n x`.
    pub fn discounted_kernel_power(&self, policy: &DeterministicPolicy, n: usize, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for _ in 0..n {
            out = self.kernel_apply(policy, &out);
            out.iter_mut().for_each(|v| *v *= self.gamma);
        }
        out
    }

    /// `(I - gamma P_pi)^{-1} x`, by a dense LU solve.
    pub fn resolvent_apply(&self, policy: &DeterministicPolicy, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.resolvent_matrix(policy);
        let lu = a.clone().lu();
        let b = DVector::from_column_slice(x);
        let mut sol = lu
            .solve(&b)
            .ok_or_else(|| Error::Internal("singular (I - gamma P_pi)".into()))?;
        // One round of iterative refinement.
        let residual = &b - &a * &sol;
        if let Some(correction) = lu.solve(&residual) {
            sol += correction;
        }
        Ok(sol.iter().copied().collect())
    }

    /// Dense `P_pi` as an `n x n` matrix.
    pub fn policy_kernel(&self, policy: &DeterministicPolicy) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_states, |s, t| self.prob(s, policy.action(s), t))
    }

    /// `r_pi`.
    pub fn policy_reward(&self, policy: &DeterministicPolicy) -> Vec<f64> {
        (0..self.n_states).map(|s| self.reward(s, policy.action(s))).collect()
    }

    fn resolvent_matrix(&self, policy: &DeterministicPolicy) -> DMatrix<f64> {
        let n = self.n_states;
        DMatrix::identity(n, n) - self.policy_kernel(policy) * self.gamma
    }

    pub(crate) fn check_policy(&self, policy: &DeterministicPolicy) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(invalid_arg(format!(
                "policy covers {} states, MDP has {}",
                policy.len(),
                self.n_states
            )));
        }
        if let Some(bad) = policy.as_slice().iter().find(|a| **a >= self.n_actions) {
            return Err(invalid_arg(format!(
                "policy action {bad} out of range for {} actions",
                self.n_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_state_values(&self, v: &ValueFunction) -> Result<()> {
        if v.kind() != ValueKind::States || v.len() != self.n_states {
            return Err(invalid_arg(format!(
                "expected a state value function of length {}, got {:?} of length {}",
                self.n_states,
                v.kind(),
                v.len()
            )));
        }
        Ok(())
    }
}

/// Whether a value table is indexed by states or by (state, action) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    States,
    /// Flattened row-major `[s][a]`.
    StateActions,
}

/// A tabular value (or action-value) function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    kind: ValueKind,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn states(values: Vec<f64>) -> Self {
        Self {
            kind: ValueKind::States,
            values,
        }
    }

    pub fn state_actions(values: Vec<f64>) -> Self {
        Self {
            kind: ValueKind::StateActions,
            values,
        }
    }

    pub fn zeros(n_states: usize) -> Self {
        Self::states(vec![0.0; n_states])
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.values, &other.values)
    }
}

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A deterministic stationary policy over a finite state space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(bad) = actions.iter().find(|a| **a >= n_actions) {
            return Err(invalid_arg(format!(
                "action {bad} out of range for {n_actions} actions"
            )));
        }
        Ok(Self { actions })
    }

    /// The policy playing action `a` everywhere.
    pub fn constant(n_states: usize, a: usize) -> Self {
        Self {
            actions: vec![a; n_states],
        }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// Every deterministic policy on `n_states` states, in lexicographic order.
    pub fn enumerate(n_states: usize, n_actions: usize) -> impl Iterator<Item = Self> {
        let total = n_actions.checked_pow(n_states as u32).unwrap_or(usize::MAX);
        (0..total).map(move |mut code| {
            let mut actions = vec![0; n_states];
            for slot in actions.iter_mut().rev() {
                *slot = code % n_actions;
                code /= n_actions;
            }
            Self { actions }
        })
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `T_pi v = r_pi + gamma P_pi v`.
pub fn bellman_apply(mdp: &TabularMdp, policy: &DeterministicPolicy, v: &ValueFunction) -> Result<ValueFunction> {
    mdp.check_policy(policy)?;
    mdp.check_state_values(v)?;
    Ok(ValueFunction::states(apply_raw(mdp, policy, v)))
}

pub(crate) fn apply_raw(mdp: &TabularMdp, policy: &DeterministicPolicy, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| mdp.backup(s, policy.action(s), v))
        .collect()
}

pub(crate) fn apply_m_raw(mdp: &TabularMdp, policy: &DeterministicPolicy, v: &[f64], m: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for _ in 0..m {
        out = apply_raw(mdp, policy, &out);
    }
    out
}

/// `(T_pi)^m v`.
pub fn bellman_apply_m(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    v: &ValueFunction,
    m: usize,
) -> Result<ValueFunction> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    mdp.check_policy(policy)?;
    mdp.check_state_values(v)?;
    Ok(ValueFunction::states(apply_m_raw(mdp, policy, v, m)))
}

/// `Q(s, a) = (T_a v)(s)` for every pair, flattened `[s][a]`.
pub fn q_backup(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            q.push(mdp.backup(s, a, v));
        }
    }
    q
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn greedy_raw(mdp: &TabularMdp, v: &[f64]) -> DeterministicPolicy {
    let q = q_backup(mdp, v);
    let actions = q.chunks(mdp.n_actions()).map(argmax_lowest).collect();
    DeterministicPolicy { actions }
}

/// Greedy policy w.r.t. `v`; ties are broken towards the lowest action index.
pub fn greedy_policy(mdp: &TabularMdp, v: &ValueFunction) -> Result<DeterministicPolicy> {
    mdp.check_state_values(v)?;
    Ok(greedy_raw(mdp, v))
}

/// `max_a (T_a v)(s)` for every state.
pub(crate) fn optimality_backup(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    q_backup(mdp, v)
        .chunks(mdp.n_actions())
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// `v_pi`, the fixed point of `T_pi`, from a direct solve of `(I - gamma P_pi) v = r_pi`.
pub fn policy_value(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<ValueFunction> {
    mdp.check_policy(policy)?;
    let values = mdp.resolvent_apply(policy, &mdp.policy_reward(policy))?;
    let residual = sup_distance(&values, &apply_raw(mdp, policy, &values));
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !residual.is_finite() || residual > 1e-10 * scale {
        return Err(Error::Internal(format!(
            "policy evaluation residual {residual:e} too large"
        )));
    }
    Ok(ValueFunction::states(values))
}

/// `v_*` and an optimal policy, via policy iteration.
pub fn optimal_value(mdp: &TabularMdp) -> Result<(DeterministicPolicy, ValueFunction)> {
    let out = exact_mpi(
        mdp,
        &ValueFunction::zeros(mdp.n_states()),
        EvalSteps::Infinite,
        MpiOptions::default(),
    )?;
    if !out.converged {
        return Err(Error::Internal("policy iteration did not converge".into()));
    }
    let pi = greedy_raw(mdp, &out.value);
    let v = policy_value(mdp, &pi)?;
    Ok((pi, v))
}
