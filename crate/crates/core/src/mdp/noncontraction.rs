use super::{apply_m_raw, greedy_raw, sup_distance, DeterministicPolicy};
use crate::env::make_prop1_mdp;
use crate::error::{invalid_arg, Result};

/// One row of the non-contraction table for a given `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonContractionRow {
    pub epsilon: f64,
    /// Greedy policy w.r.t. `v = (eps, 0)`.
    pub policy: DeterministicPolicy,
    /// Greedy policy w.r.t. `v' = (0, eps)`.
    pub policy_prime: DeterministicPolicy,
    /// `(T_pi)^m v`.
    pub next: Vec<f64>,
    /// `(T_pi')^m v'`.
    pub next_prime: Vec<f64>,
    /// `||(T_pi')^m v' - (T_pi)^m v||_inf / ||v' - v||_inf`.
    pub ratio: f64,
}

/// Runs one MPI update from `v = (eps, 0)` and `v' = (0, eps)` on the two-state
/// switching MDP and reports how much the update expands their distance.
///
/// For `m > 1` the ratio equals `(gamma - gamma^m) / ((1 - gamma) eps)` and is
/// unbounded as `eps -> 0`; for `m = 1` it never exceeds `gamma`.
pub fn check_noncontraction(gamma: f64, m: usize, epsilons: &[f64]) -> Result<Vec<NonContractionRow>> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid_arg(format!("discount {gamma} outside (0, 1)")));
    }
    let mdp = make_prop1_mdp(gamma)?;
    epsilons
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid_arg(format!("epsilon must be positive, got {eps}")));
            }
            let v = [eps, 0.0];
            let v_prime = [0.0, eps];
            let policy = greedy_raw(&mdp, &v);
            let policy_prime = greedy_raw(&mdp, &v_prime);
            let next = apply_m_raw(&mdp, &policy, &v, m);
            let next_prime = apply_m_raw(&mdp, &policy_prime, &v_prime, m);
            let ratio = sup_distance(&next_prime, &next) / sup_distance(&v_prime, &v);
            Ok(NonContractionRow {
                epsilon: eps,
                policy,
                policy_prime,
                next,
                next_prime,
                ratio,
            })
        })
        .collect()
}
