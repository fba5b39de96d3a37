use super::diagnostics::{cbmpi_abstract_run, compute_diagnostics, Diagnostics, ErrorSequence};
use super::lp::sup_norm_loss_bound;
use super::{abs, add, min_gap, sup_norm, BoundVariant, Run};
use crate::error::Result;
use crate::mdp::{DeterministicPolicy, TabularMdp};

/// A run mapped to the abstract model, with everything the bounds consume.
#[derive(Debug, Clone)]
pub(crate) struct Analysis {
    pub variant: BoundVariant,
    pub m: usize,
    /// For CBMPI the `w`-sequence; otherwise the run itself.
    pub run: Run,
    pub diagnostics: Diagnostics,
    pub errors: ErrorSequence,
    /// Evaluation errors of the original iterates, `eps_0..eps_K`.
    pub raw_eps: Vec<Vec<f64>>,
}

impl Analysis {
    pub fn new(mdp: &TabularMdp, run: &Run, m: usize, variant: BoundVariant) -> Result<Self> {
        let (diag, errors) = compute_diagnostics(mdp, run, m)?;
        match variant {
            BoundVariant::Ampi => Ok(Self {
                variant,
                m,
                run: run.clone(),
                diagnostics: diag,
                raw_eps: errors.eps.clone(),
                errors,
            }),
            BoundVariant::Cbmpi => {
                let w = cbmpi_abstract_run(mdp, run, m)?;
                let (diagnostics, abstract_errors) = compute_diagnostics(mdp, &w, m)?;
                Ok(Self {
                    variant,
                    m,
                    run: w,
                    diagnostics,
                    errors: abstract_errors,
                    raw_eps: errors.eps,
                })
            }
        }
    }

    pub fn iterations(&self) -> usize {
        self.diagnostics.iterations()
    }

    /// Non-negative majorant `E_k` of `|eps_k|` in the abstract model.
    pub fn error_majorant(&self, mdp: &TabularMdp, k: usize) -> Vec<f64> {
        match self.variant {
            BoundVariant::Ampi => abs(&self.errors.eps[k]),
            BoundVariant::Cbmpi if k == 0 => vec![0.0; mdp.n_states()],
            BoundVariant::Cbmpi => {
                mdp.discounted_kernel_power(&self.run.policies[k - 1], self.m, &abs(&self.raw_eps[k - 1]))
            }
        }
    }

    /// Sup-norms of the errors entering the closed-form bounds: for CBMPI the
    /// raw errors, since the `gamma^m` factor is explicit there.
    pub fn eval_sups(&self) -> Vec<f64> {
        let eps = match self.variant {
            BoundVariant::Ampi => &self.errors.eps,
            BoundVariant::Cbmpi => &self.raw_eps,
        };
        eps[1..].iter().map(|e| sup_norm(e)).collect()
    }

    pub fn greedy_sups(&self) -> Vec<f64> {
        self.errors.eps_prime.iter().map(|e| sup_norm(e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointwiseMode {
    /// Propagates the error vectors through the run's own kernels.
    Tracked,
    /// Replaces every kernel product acting on an error by its sup-norm.
    Sup,
}

impl PointwiseMode {
    pub fn name(self) -> &'static str {
        match self {
            PointwiseMode::Tracked => "tracked",
            PointwiseMode::Sup => "sup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseOptions {
    pub mode: PointwiseMode,
    /// Iterations beyond this use the sup-norm form.
    pub tracked_max_k: usize,
}

impl Default for PointwiseOptions {
    fn default() -> Self {
        Self {
            mode: PointwiseMode::Tracked,
            tracked_max_k: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseBound {
    pub k: usize,
    pub bound: Vec<f64>,
    /// `l_k`.
    pub observed: Vec<f64>,
    pub mode: PointwiseMode,
    /// Tracked mode was requested but `k` exceeded the limit.
    pub fell_back: bool,
    /// Residual term from `d_0`: `2 gamma^k / (1 - gamma) ||d_0||_inf`.
    pub h_d0: f64,
    /// Residual term from `b_0`.
    pub h_b0: f64,
}

impl PointwiseBound {
    /// `min_s (bound - l_k)`, with the minimizing state.
    pub fn slack(&self) -> (f64, usize) {
        min_gap(&self.bound, &self.observed)
    }
}

fn scale(c: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| c * v).collect()
}

/// Point-wise bound on `l_k` for every `k = 1..K`.
pub fn pointwise_loss_bound(
    mdp: &TabularMdp,
    run: &Run,
    m: usize,
    variant: BoundVariant,
    options: &PointwiseOptions,
) -> Result<Vec<PointwiseBound>> {
    let analysis = Analysis::new(mdp, run, m, variant)?;
    Ok(pointwise_from(mdp, &analysis, options))
}

pub(crate) fn pointwise_from(mdp: &TabularMdp, a: &Analysis, options: &PointwiseOptions) -> Vec<PointwiseBound> {
    let gamma = mdp.gamma();
    let diag = &a.diagnostics;
    let d0 = sup_norm(&diag.d[0]);
    let b0 = sup_norm(&diag.b[0]);
    let eval_sups = a.eval_sups();
    let greedy_sups = a.greedy_sups();
    let tracked = if options.mode == PointwiseMode::Tracked {
        tracked_bounds(mdp, a, options.tracked_max_k.min(a.iterations()))
    } else {
        Vec::new()
    };
    (1..=a.iterations())
        .map(|k| {
            let h = 2.0 * gamma.powi(k as i32) / (1.0 - gamma);
            let (bound, mode) = match tracked.get(k - 1) {
                Some(b) => (b.clone(), PointwiseMode::Tracked),
                None => {
                    let c = sup_norm_loss_bound(gamma, a.m, a.variant, k, &eval_sups, &greedy_sups, d0, b0);
                    (vec![c; mdp.n_states()], PointwiseMode::Sup)
                }
            };
            PointwiseBound {
                k,
                bound,
                observed: diag.l(k).to_vec(),
                fell_back: options.mode == PointwiseMode::Tracked && mode == PointwiseMode::Sup,
                mode,
                h_d0: h * d0,
                h_b0: h * b0,
            }
        })
        .collect()
}

/// Majorants `Bbar_k >= b_k`, `Dbar_k >= d_k` propagated through the run's
/// kernels; `l_k <= Dbar_k + (gamma P_{pi_k})^m (I - gamma P_{pi_k})^{-1} Bbar_{k-1}`.
fn tracked_bounds(mdp: &TabularMdp, a: &Analysis, k_max: usize) -> Vec<Vec<f64>> {
    let gamma = mdp.gamma();
    let m = a.m;
    let diag = &a.diagnostics;
    let kernel = |pi: &DeterministicPolicy, x: &[f64]| scale(gamma, &mdp.kernel_apply(pi, x));
    let pi_star = &diag.pi_star;
    let mut b_bar = abs(&diag.b[0]);
    let mut d_bar = abs(&diag.d[0]);
    let mut e_prev = a.error_majorant(mdp, 0);
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let pi = &a.run.policies[k - 1];
        let shift = mdp.discounted_kernel_power(
            pi,
            m,
            &mdp.resolvent_apply(pi, &b_bar)
                .expect("resolvent of a stochastic kernel"),
        );
        let mut d_next = add(
            &add(&kernel(pi_star, &d_bar), &kernel(pi_star, &e_prev)),
            a.errors.eps_prime(k),
        );
        let mut term = b_bar.clone();
        for _ in 1..m {
            term = kernel(pi, &term);
            d_next = add(&d_next, &term);
        }
        let e_k = a.error_majorant(mdp, k);
        let b_next = add(
            &add(
                &mdp.discounted_kernel_power(pi, m, &b_bar),
                &add(&e_k, &kernel(pi, &e_k)),
            ),
            a.errors.eps_prime(k + 1),
        );
        out.push(add(&d_next, &shift));
        d_bar = d_next;
        b_bar = b_next;
        e_prev = e_k;
    }
    out
}
