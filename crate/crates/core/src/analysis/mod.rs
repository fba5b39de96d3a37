//! Error-propagation analysis of approximate MPI on tabular MDPs.
//!
//! A run is abstracted as `pi_k = G_{eps'_k} v_{k-1}`, `v_k = (T_{pi_k})^m v_{k-1} + eps_k`.
//! Everything here recomputes the diagnostic vectors of such a run exactly and
//! evaluates the point-wise and weighted-norm bounds on its loss.

mod concentrability;
mod diagnostics;
mod finite_sample;
mod holder;
mod lp;
mod pointwise;
mod report;

pub use concentrability::{
    concentrability, CoefficientMode, CoefficientProfile, Concentrability, ConcentrabilityInputs,
};
pub use diagnostics::{cbmpi_abstract_run, check_lemma1, compute_diagnostics, Diagnostics, ErrorSequence, Lemma1Step};
pub use finite_sample::{
    cbmpi_finite_sample_bound, eval_error_1, eval_error_2, finite_sample_terms, greedy_error_1, greedy_error_2,
    CbmpiBoundInputs, FiniteSampleInputs, FiniteSampleTerms,
};
pub use holder::{verify_holder_partition, HolderCheck, HolderTerm};
pub use lp::{lp_loss_bound, sup_norm_loss_bound, LpBound};
pub use pointwise::{pointwise_loss_bound, PointwiseBound, PointwiseMode, PointwiseOptions};
pub use report::{audit_run, AuditOptions, BoundReport, BoundRow, REPORT_HEADER};

use std::fmt::Write as _;

use crate::error::{invalid_arg, invalid_input, Result};
use crate::mdp::{DeterministicPolicy, TabularMdp};

/// Which form of the bounds applies to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundVariant {
    /// AMPI-V and AMPI-Q.
    Ampi,
    /// CBMPI and DPI: the greedy step acts on `(T_{pi_k})^m v_{k-1}`.
    Cbmpi,
}

/// Iterates of a run: `values = [v_0, ..., v_K]`, `policies = [pi_1, ..., pi_{K+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub values: Vec<Vec<f64>>,
    pub policies: Vec<DeterministicPolicy>,
}

pub const ITERATES_HEADER: &str = "k,state,value,action";

impl Run {
    /// `K`.
    pub fn iterations(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid_arg("a run needs at least v_0"));
        }
        if self.policies.len() != self.values.len() {
            return Err(invalid_arg(format!(
                "{} values need {} policies (pi_1..pi_{{K+1}}), got {}",
                self.values.len(),
                self.values.len(),
                self.policies.len()
            )));
        }
        for v in &self.values {
            if v.len() != mdp.n_states() || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid_arg("every value must be a finite vector over the states"));
            }
        }
        for pi in &self.policies {
            mdp.check_policy(pi)?;
        }
        Ok(())
    }

    /// Rows `k,state,value,action` holding `v_k(s)` and `pi_{k+1}(s)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ITERATES_HEADER);
        out.push('\n');
        for (k, (v, pi)) in self.values.iter().zip(&self.policies).enumerate() {
            for (s, x) in v.iter().enumerate() {
                let _ = writeln!(out, "{k},{s},{x},{}", pi.action(s));
            }
        }
        out
    }

    pub fn from_csv(text: &str, n_states: usize, n_actions: usize) -> Result<Run> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == ITERATES_HEADER => {}
            _ => {
                return Err(invalid_input(format!(
                    "iterates file must start with `{ITERATES_HEADER}`"
                )))
            }
        }
        let mut values: Vec<Vec<Option<f64>>> = Vec::new();
        let mut actions: Vec<Vec<Option<usize>>> = Vec::new();
        for (no, line) in lines.enumerate() {
            let bad = || invalid_input(format!("iterates line {}: `{line}`", no + 2));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            let k: usize = fields[0].parse().map_err(|_| bad())?;
            let s: usize = fields[1].parse().map_err(|_| bad())?;
            let v: f64 = fields[2].parse().map_err(|_| bad())?;
            let a: usize = fields[3].parse().map_err(|_| bad())?;
            if s >= n_states || a >= n_actions {
                return Err(bad());
            }
            while values.len() <= k {
                values.push(vec![None; n_states]);
                actions.push(vec![None; n_states]);
            }
            values[k][s] = Some(v);
            actions[k][s] = Some(a);
        }
        let mut run = Run {
            values: Vec::new(),
            policies: Vec::new(),
        };
        for (k, (v, a)) in values.into_iter().zip(actions).enumerate() {
            let v: Option<Vec<f64>> = v.into_iter().collect();
            let a: Option<Vec<usize>> = a.into_iter().collect();
            match (v, a) {
                (Some(v), Some(a)) => {
                    run.values.push(v);
                    run.policies.push(DeterministicPolicy::new(a, n_actions)?);
                }
                _ => return Err(invalid_input(format!("iterate {k} does not cover every state"))),
            }
        }
        if run.values.is_empty() {
            return Err(invalid_input("iterates file has no rows"));
        }
        Ok(run)
    }
}

/// Checks that `w` is a probability vector of length `n`.
pub(crate) fn check_distribution(w: &[f64], n: usize, name: &str) -> Result<()> {
    if w.len() != n {
        return Err(invalid_arg(format!("{name} has {} entries, expected {n}", w.len())));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid_arg(format!("{name} must be non-negative")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid_arg(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `||x||_{p,w} = (sum_s w(s) |x(s)|^p)^{1/p}`; for `p = inf`, the max over
/// the support of `w`.
pub fn weighted_norm(x: &[f64], w: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x
            .iter()
            .zip(w)
            .filter(|(_, w)| **w > 0.0)
            .fold(0.0_f64, |m, (v, _)| m.max(v.abs()));
    }
    if p == 1.0 {
        return x.iter().zip(w).map(|(v, w)| w * v.abs()).sum();
    }
    x.iter()
        .zip(w)
        .map(|(v, w)| w * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

pub(crate) fn abs(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

pub(crate) fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `min_s (upper(s) - lower(s))` and its argmin.
pub(crate) fn min_gap(upper: &[f64], lower: &[f64]) -> (f64, usize) {
    upper
        .iter()
        .zip(lower)
        .enumerate()
        .map(|(s, (u, l))| (u - l, s))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_norms() {
        let x = [1.0, -2.0, 3.0];
        let w = [0.5, 0.5, 0.0];
        assert_eq!(weighted_norm(&x, &w, 1.0), 1.5);
        assert!((weighted_norm(&x, &w, 2.0) - 2.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(weighted_norm(&x, &w, f64::INFINITY), 2.0);
        assert_eq!(sup_norm(&x), 3.0);
    }

    #[test]
    fn iterates_round_trip() {
        let run = Run {
            values: vec![vec![0.0, 0.5], vec![1.25, -3.0]],
            policies: vec![
                DeterministicPolicy::new(vec![1, 0], 2).unwrap(),
                DeterministicPolicy::new(vec![0, 0], 2).unwrap(),
            ],
        };
        let back = Run::from_csv(&run.to_csv(), 2, 2).unwrap();
        assert_eq!(back, run);
        assert!(Run::from_csv("k,state,value,action\n0,0,1.0,0\n", 2, 2).is_err());
        assert!(Run::from_csv("nope\n", 2, 2).is_err());
    }
}
