use std::f64::consts::E;

use crate::error::{invalid_arg, invalid_input, Result};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(invalid_input(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid_arg(format!("{name} must be positive and finite, got {x}")))
    }
}

/// `h log(e N / h)`, extended by continuity to `h = 0`.
fn vc_term(h: usize, count: f64) -> f64 {
    if h == 0 {
        0.0
    } else {
        h as f64 * (E * count / h as f64).ln()
    }
}

/// Classifier estimation error from `N` rollout states.
pub fn greedy_error_1(q_max: f64, n_states: usize, vc_dim: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("Q_max", q_max)?;
    check_positive("N", n_states as f64)?;
    let n = n_states as f64;
    Ok(16.0 * q_max * (2.0 / n * (vc_term(vc_dim, n) + (32.0 / delta).ln())).sqrt())
}

/// Classifier error from `M` rollouts per state-action pair.
pub fn greedy_error_2(q_max: f64, n_states: usize, samples: usize, vc_dim: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("Q_max", q_max)?;
    check_positive("N", n_states as f64)?;
    check_positive("M", samples as f64)?;
    let mn = (samples as f64) * (n_states as f64);
    Ok(8.0 * q_max * (2.0 / mn * (vc_term(vc_dim, mn) + (32.0 / delta).ln())).sqrt())
}

/// Regression estimation error from `n` samples with `d` features.
pub fn eval_error_1(v_max: f64, n_samples: usize, dim: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("V_max", v_max)?;
    check_positive("n", n_samples as f64)?;
    let n = n_samples as f64;
    // log(27 (12 e^2 n)^{2(d+1)} / delta), expanded to stay finite
    let log_term = 27f64.ln() + 2.0 * (dim as f64 + 1.0) * (12.0 * E * E * n).ln() - delta.ln();
    Ok(32.0 * v_max * (2.0 / n * log_term).sqrt())
}

/// Regression error from the size of the best linear fit;
/// `alpha_term = ||alpha_*||_2 sup_x ||phi(x)||_2`.
pub fn eval_error_2(v_max: f64, alpha_term: f64, n_samples: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("V_max", v_max)?;
    check_positive("n", n_samples as f64)?;
    if !(alpha_term.is_finite() && alpha_term >= 0.0) {
        return Err(invalid_arg("alpha term must be non-negative"));
    }
    Ok(24.0 * (v_max + alpha_term) * (2.0 / n_samples as f64 * (9.0 / delta).ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSampleInputs {
    pub q_max: f64,
    pub v_max: f64,
    /// `N`, rollout states of the classifier.
    pub greedy_states: usize,
    /// `M`, rollouts per state-action pair.
    pub samples: usize,
    /// `n`, regression samples.
    pub eval_states: usize,
    /// Feature dimension `d`.
    pub dim: usize,
    /// VC dimension `h` of the policy space.
    pub vc_dim: usize,
    pub delta: f64,
    pub alpha_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSampleTerms {
    pub greedy_1: f64,
    pub greedy_2: f64,
    pub eval_1: f64,
    pub eval_2: f64,
}

pub fn finite_sample_terms(inputs: &FiniteSampleInputs) -> Result<FiniteSampleTerms> {
    Ok(FiniteSampleTerms {
        greedy_1: greedy_error_1(inputs.q_max, inputs.greedy_states, inputs.vc_dim, inputs.delta)?,
        greedy_2: greedy_error_2(
            inputs.q_max,
            inputs.greedy_states,
            inputs.samples,
            inputs.vc_dim,
            inputs.delta,
        )?,
        eval_1: eval_error_1(inputs.v_max, inputs.eval_states, inputs.dim, inputs.delta)?,
        eval_2: eval_error_2(inputs.v_max, inputs.alpha_term, inputs.eval_states, inputs.delta)?,
    })
}

/// High-probability CBMPI loss bound assembled from user-supplied constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbmpiBoundInputs {
    pub gamma: f64,
    pub m: usize,
    /// Iteration `k >= 1`.
    pub k: usize,
    /// Approximation error of the policy space.
    pub d_prime: f64,
    /// Approximation error of the value space under `m` backups.
    pub d_m: f64,
    /// Coefficient multiplying the evaluation part.
    pub c_eval: f64,
    /// Coefficient multiplying the greedy part.
    pub c_greedy: f64,
    /// `g(k)`.
    pub residual: f64,
    /// `delta` here is the overall confidence; each term uses `delta / (2k)`.
    pub samples: FiniteSampleInputs,
}

pub fn cbmpi_finite_sample_bound(inputs: &CbmpiBoundInputs) -> Result<f64> {
    let g = inputs.gamma;
    if !(0.0..1.0).contains(&g) {
        return Err(invalid_arg("gamma must lie in [0, 1)"));
    }
    if inputs.k == 0 {
        return Err(invalid_arg("k must be at least 1"));
    }
    check_delta(inputs.samples.delta)?;
    let per_term = FiniteSampleInputs {
        delta: inputs.samples.delta / (2.0 * inputs.k as f64),
        ..inputs.samples
    };
    let t = finite_sample_terms(&per_term)?;
    let k = inputs.k as i32;
    let eval = 2.0 * g.powi(inputs.m as i32) * (g - g.powi(k - 1)) / (1.0 - g).powi(2)
        * inputs.c_eval
        * (inputs.d_m + t.eval_1 + t.eval_2);
    let greedy = (1.0 - g.powi(k)) / (1.0 - g).powi(2) * inputs.c_greedy * (inputs.d_prime + t.greedy_1 + t.greedy_2);
    Ok(eval + greedy + inputs.residual)
}
