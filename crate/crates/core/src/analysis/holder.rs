use super::concentrability::{max_kernel, profile, ConcentrabilityInputs};
use super::{abs, weighted_norm};
use crate::error::{invalid_arg, invalid_input, Result};
use crate::mdp::TabularMdp;

/// One function `g_i` with its exponent set `J_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderTerm {
    pub g: Vec<f64>,
    pub exponents: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCheck {
    /// `||f||_{p,rho}`.
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Checks the weighted-norm bound on `f` for a partition of terms into `groups`.
///
/// The premise `|f| <= sum gamma^j P^j |g_i|` is tested against the largest
/// such right-hand side, `gamma^j (max_a P_a)^j |g_i|`, which one policy
/// sequence attains term by term.
pub fn verify_holder_partition(
    f: &[f64],
    groups: &[Vec<HolderTerm>],
    mdp: &TabularMdp,
    inputs: &ConcentrabilityInputs,
) -> Result<HolderCheck> {
    let n = mdp.n_states();
    inputs.validate(n)?;
    if f.len() != n || f.iter().any(|x| !x.is_finite()) {
        return Err(invalid_arg("f must be a finite vector over the states"));
    }
    let max_j = groups
        .iter()
        .flatten()
        .map(|t| {
            if t.g.len() != n || t.g.iter().any(|x| !x.is_finite()) {
                Err(invalid_arg("every g_i must be a finite vector over the states"))
            } else {
                Ok(t.exponents.iter().copied().max().unwrap_or(0))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);

    let gamma = mdp.gamma();
    let mut envelope = vec![0.0; n];
    for term in groups.iter().flatten() {
        let mut pushed = abs(&term.g);
        let mut exps = term.exponents.clone();
        exps.sort_unstable();
        let mut depth = 0;
        for j in exps {
            while depth < j {
                pushed = max_kernel(mdp, &pushed);
                depth += 1;
            }
            let w = gamma.powi(j as i32);
            envelope.iter_mut().zip(&pushed).for_each(|(e, x)| *e += w * x);
        }
    }
    for s in 0..n {
        if f[s].abs() > envelope[s] * (1.0 + 1e-12) + 1e-12 {
            return Err(invalid_input(format!(
                "premise violated at state {s}: |f| = {} exceeds the majorant {}",
                f[s].abs(),
                envelope[s]
            )));
        }
    }

    let (c, _) = profile(inputs, mdp, max_j)?;
    let r = inputs.error_exponent();
    let mut rhs = 0.0;
    for group in groups {
        let mut weight = 0.0;
        let mut weighted_c = 0.0;
        let mut sup = 0.0f64;
        for term in group {
            for &j in &term.exponents {
                let w = gamma.powi(j as i32);
                weight += w;
                weighted_c += w * c[j];
            }
            sup = sup.max(weighted_norm(&term.g, &inputs.mu, r));
        }
        if weight > 0.0 {
            let coef = if inputs.p.is_infinite() {
                1.0
            } else {
                (weighted_c / weight).powf(1.0 / inputs.p)
            };
            rhs += coef * sup * weight;
        }
    }
    let lhs = weighted_norm(f, &inputs.rho, inputs.p);
    Ok(HolderCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}
