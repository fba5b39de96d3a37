use super::check_distribution;
use crate::error::{invalid_arg, invalid_input, Result};
use crate::mdp::{DeterministicPolicy, TabularMdp};

/// Exponents, distributions and truncation controls for concentrability.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrabilityInputs {
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    /// `p` in `[1, inf]`.
    pub p: f64,
    pub q: f64,
    pub q_prime: f64,
    /// Truncation depth `J` of the infinite sums.
    pub depth: usize,
    /// Largest number of policy sequences enumerated for one `c_q(j)`.
    pub sequence_cap: f64,
}

impl ConcentrabilityInputs {
    /// Sets `q'` to the conjugate of `q`.
    pub fn new(rho: Vec<f64>, mu: Vec<f64>, p: f64, q: f64) -> Self {
        let q_prime = if q.is_infinite() {
            1.0
        } else if q == 1.0 {
            f64::INFINITY
        } else {
            q / (q - 1.0)
        };
        Self {
            rho,
            mu,
            p,
            q,
            q_prime,
            depth: 500,
            sequence_cap: 1e6,
        }
    }

    pub fn uniform(n_states: usize, p: f64, q: f64) -> Self {
        let w = vec![1.0 / n_states as f64; n_states];
        Self::new(w.clone(), w, p, q)
    }

    /// Exponent of the error norms, `p q'`.
    pub fn error_exponent(&self) -> f64 {
        self.p * self.q_prime
    }

    pub fn validate(&self, n_states: usize) -> Result<()> {
        check_distribution(&self.rho, n_states, "rho")?;
        check_distribution(&self.mu, n_states, "mu")?;
        if let Some(s) = self.mu.iter().position(|&w| w <= 0.0) {
            return Err(invalid_input(format!(
                "mu puts no mass on state {s}; the density ratio is undefined"
            )));
        }
        if self.p.is_nan()
            || self.p < 1.0
            || self.q.is_nan()
            || self.q < 1.0
            || self.q_prime.is_nan()
            || self.q_prime < 1.0
        {
            return Err(invalid_arg("p, q and q' must lie in [1, inf]"));
        }
        if (1.0 / self.q + 1.0 / self.q_prime - 1.0).abs() > 1e-12 {
            return Err(invalid_input(format!(
                "q = {} and q' = {} are not conjugate",
                self.q, self.q_prime
            )));
        }
        if self.depth == 0 {
            return Err(invalid_arg("truncation depth must be positive"));
        }
        Ok(())
    }
}

/// Whether a coefficient was obtained by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientMode {
    Exact,
    /// Replaced by `c_inf(j)`, which dominates `c_q(j)` for every `q`.
    UpperBound,
}

impl CoefficientMode {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientMode::Exact => "exact",
            CoefficientMode::UpperBound => "upper_bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentrability {
    pub value: f64,
    pub mode: CoefficientMode,
}

fn q_norm(ratio: &[f64], mu: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        ratio.iter().fold(0.0, |m, &r| m.max(r))
    } else {
        ratio
            .iter()
            .zip(mu)
            .map(|(r, w)| w * r.powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// `max_a P_a x`, component-wise. Attained by one deterministic policy.
pub(super) fn max_kernel(mdp: &TabularMdp, x: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| mdp.expect(s, a, x))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// `c_inf(0..=depth)` from the max-kernel recursion, one column per target state.
fn sup_profile(inputs: &ConcentrabilityInputs, mdp: &TabularMdp, depth: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let mut e = vec![0.0; n];
            e[s] = 1.0;
            e
        })
        .collect();
    let mut out = Vec::with_capacity(depth + 1);
    for j in 0..=depth {
        if j > 0 {
            columns = columns.iter().map(|x| max_kernel(mdp, x)).collect();
        }
        let c = columns
            .iter()
            .enumerate()
            .map(|(s, x)| {
                let mass: f64 = inputs.rho.iter().zip(x).map(|(r, v)| r * v).sum();
                mass / inputs.mu[s]
            })
            .fold(0.0, f64::max);
        out.push(c);
    }
    out
}

/// `c_q(j)` for every `j` reachable by enumeration under the cap.
fn enumerated_profile(inputs: &ConcentrabilityInputs, mdp: &TabularMdp, depth: usize) -> Vec<f64> {
    let n = mdp.n_states();
    let per_level = (n as f64) * (mdp.n_actions() as f64).ln();
    let policies: Vec<DeterministicPolicy> = if per_level <= inputs.sequence_cap.ln() {
        DeterministicPolicy::enumerate(n, mdp.n_actions()).collect()
    } else {
        Vec::new()
    };
    let ratio = |nu: &[f64]| -> Vec<f64> { nu.iter().zip(&inputs.mu).map(|(a, b)| a / b).collect() };
    let mut level = vec![inputs.rho.clone()];
    let mut out = vec![q_norm(&ratio(&inputs.rho), &inputs.mu, inputs.q)];
    for j in 1..=depth {
        if policies.is_empty() || (j as f64) * per_level > inputs.sequence_cap.ln() + 1e-12 {
            break;
        }
        level = level
            .iter()
            .flat_map(|nu| policies.iter().map(move |pi| mdp.kernel_push(pi, nu)))
            .collect();
        out.push(
            level
                .iter()
                .map(|nu| q_norm(&ratio(nu), &inputs.mu, inputs.q))
                .fold(0.0, f64::max),
        );
    }
    out
}

pub(super) fn profile(
    inputs: &ConcentrabilityInputs,
    mdp: &TabularMdp,
    depth: usize,
) -> Result<(Vec<f64>, Vec<CoefficientMode>)> {
    inputs.validate(mdp.n_states())?;
    let sup = sup_profile(inputs, mdp, depth);
    if inputs.q.is_infinite() {
        return Ok((sup, vec![CoefficientMode::Exact; depth + 1]));
    }
    let exact = enumerated_profile(inputs, mdp, depth);
    let modes = (0..=depth)
        .map(|j| {
            if j < exact.len() {
                CoefficientMode::Exact
            } else {
                CoefficientMode::UpperBound
            }
        })
        .collect();
    let values = (0..=depth).map(|j| exact.get(j).copied().unwrap_or(sup[j])).collect();
    Ok((values, modes))
}

/// `c_q(j) = max over policy sequences of ||d(rho P_1 ... P_j)/d mu||_{q,mu}`.
pub fn concentrability(inputs: &ConcentrabilityInputs, mdp: &TabularMdp, j: usize) -> Result<Concentrability> {
    let (values, modes) = profile(inputs, mdp, j)?;
    Ok(Concentrability {
        value: values[j],
        mode: modes[j],
    })
}

/// `c_q(0..=J + extra)` and the tail constant used past `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProfile {
    pub gamma: f64,
    /// `J`.
    pub depth: usize,
    pub values: Vec<f64>,
    pub modes: Vec<CoefficientMode>,
    /// Bound on `c_q(j)` for every `j`; `1 / min mu` in general.
    pub tail: f64,
}

impl CoefficientProfile {
    /// Stores coefficients up to `inputs.depth + extra` so shifts `d <= extra` are exact.
    pub fn compute(inputs: &ConcentrabilityInputs, mdp: &TabularMdp, extra: usize) -> Result<Self> {
        let (values, modes) = profile(inputs, mdp, inputs.depth + extra)?;
        let mu_min = inputs.mu.iter().fold(f64::INFINITY, |m, &w| m.min(w));
        Ok(Self {
            gamma: mdp.gamma(),
            depth: inputs.depth,
            values,
            modes,
            tail: 1.0 / mu_min,
        })
    }

    /// `c_q(j) = value` for every `j`.
    pub fn constant(gamma: f64, value: f64, depth: usize) -> Self {
        Self {
            gamma,
            depth,
            values: vec![value; 2 * depth + 1],
            modes: vec![CoefficientMode::Exact; 2 * depth + 1],
            tail: value,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.modes.iter().all(|&m| m == CoefficientMode::Exact)
    }

    /// `C^{l,k,d}`: the `gamma^j`-weighted average of `c_q(j + d)` over
    /// `l <= i < k`, `j >= i`, with the tail past `J` bounded by `tail`.
    pub fn coefficient(&self, l: usize, k: usize, d: usize) -> Result<f64> {
        if l >= k {
            return Err(invalid_arg(format!("coefficient needs l < k, got l = {l}, k = {k}")));
        }
        let j_max = self.depth;
        if j_max + 1 < k || j_max + d >= self.values.len() {
            return Err(invalid_arg(format!(
                "truncation depth {j_max} is too small for k = {k}, d = {d}"
            )));
        }
        let g = self.gamma;
        let mut sum = 0.0;
        let mut power = g.powi(l as i32);
        for j in l..=j_max {
            let count = (j.min(k - 1) - l + 1) as f64;
            sum += power * self.values[j + d] * count;
            power *= g;
        }
        // power == gamma^{J+1} here
        sum += self.tail * (k - l) as f64 * power / (1.0 - g);
        Ok(sum * (1.0 - g).powi(2) / (g.powi(l as i32) - g.powi(k as i32)))
    }

    /// `C(l)` for an explicit finite family of exponents: the weighted mean of `c_q(j)`.
    pub fn group_average(&self, exponents: &[usize]) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for &j in exponents {
            let c = *self
                .values
                .get(j)
                .ok_or_else(|| invalid_arg(format!("exponent {j} exceeds the computed depth")))?;
            let w = self.gamma.powi(j as i32);
            num += w * c;
            den += w;
        }
        if den == 0.0 {
            return Err(invalid_arg("empty exponent set"));
        }
        Ok(num / den)
    }
}
