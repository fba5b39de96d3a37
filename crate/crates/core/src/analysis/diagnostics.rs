use super::{add, min_gap, sub, sup_norm, Run};
use crate::error::{invalid_arg, Result};
use crate::mdp::{
    apply_m_raw, apply_raw, optimal_value, optimality_backup, policy_value, DeterministicPolicy, TabularMdp,
};

/// The four diagnostic vectors of a run, all exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub v_star: Vec<f64>,
    pub pi_star: DeterministicPolicy,
    /// `d_0..d_K`, `d_k = v_* - (T_{pi_k})^m v_{k-1}` and `d_0 = v_* - v_0`.
    pub d: Vec<Vec<f64>>,
    /// `b_0..b_K`, `b_k = v_k - T_{pi_{k+1}} v_k`.
    pub b: Vec<Vec<f64>>,
    /// `s_1..s_K` at index `k - 1`, `s_k = (T_{pi_k})^m v_{k-1} - v_{pi_k}`.
    pub s: Vec<Vec<f64>>,
    /// `l_1..l_K` at index `k - 1`, `l_k = v_* - v_{pi_k}`.
    pub l: Vec<Vec<f64>>,
    /// `v_{pi_1}..v_{pi_K}` at index `k - 1`.
    pub policy_values: Vec<Vec<f64>>,
}

impl Diagnostics {
    pub fn iterations(&self) -> usize {
        self.l.len()
    }

    pub fn s(&self, k: usize) -> &[f64] {
        &self.s[k - 1]
    }

    pub fn l(&self, k: usize) -> &[f64] {
        &self.l[k - 1]
    }
}

/// Evaluation and greedy errors of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSequence {
    /// `eps_0..eps_K`, with `eps_0 = 0`.
    pub eps: Vec<Vec<f64>>,
    /// `eps'_1..eps'_{K+1}` at index `k - 1`,
    /// `eps'_k = max_pi T_pi v_{k-1} - T_{pi_k} v_{k-1} >= 0`.
    pub eps_prime: Vec<Vec<f64>>,
}

impl ErrorSequence {
    pub fn eps_prime(&self, k: usize) -> &[f64] {
        &self.eps_prime[k - 1]
    }
}

/// Recomputes every diagnostic of `run` with exact operators.
pub fn compute_diagnostics(mdp: &TabularMdp, run: &Run, m: usize) -> Result<(Diagnostics, ErrorSequence)> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    run.validate(mdp)?;
    let (pi_star, v_star) = optimal_value(mdp)?;
    let v_star = v_star.into_vec();
    let k_max = run.iterations();

    let mut d = vec![sub(&v_star, &run.values[0])];
    let mut eps = vec![vec![0.0; mdp.n_states()]];
    let mut s = Vec::with_capacity(k_max);
    let mut l = Vec::with_capacity(k_max);
    let mut policy_values = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let pi = &run.policies[k - 1];
        let w = apply_m_raw(mdp, pi, &run.values[k - 1], m);
        let v_pi = policy_value(mdp, pi)?.into_vec();
        eps.push(sub(&run.values[k], &w));
        d.push(sub(&v_star, &w));
        s.push(sub(&w, &v_pi));
        l.push(sub(&v_star, &v_pi));
        policy_values.push(v_pi);
    }
    let b = (0..=k_max)
        .map(|k| sub(&run.values[k], &apply_raw(mdp, &run.policies[k], &run.values[k])))
        .collect();
    let eps_prime = (1..=k_max + 1)
        .map(|k| {
            let v = &run.values[k - 1];
            let best = optimality_backup(mdp, v);
            // clamp roundoff: the greedy error is non-negative by construction
            sub(&best, &apply_raw(mdp, &run.policies[k - 1], v))
                .into_iter()
                .map(|x| x.max(0.0))
                .collect()
        })
        .collect();
    Ok((
        Diagnostics {
            v_star,
            pi_star,
            d,
            b,
            s,
            l,
            policy_values,
        },
        ErrorSequence { eps, eps_prime },
    ))
}

/// Maps a CBMPI run to the abstract model: `w_0 = v_0` and
/// `w_k = (T_{pi_k})^m v_{k-1}`, with the same policies. Its evaluation
/// errors are `(gamma P_{pi_k})^m eps_{k-1}`.
pub fn cbmpi_abstract_run(mdp: &TabularMdp, run: &Run, m: usize) -> Result<Run> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    run.validate(mdp)?;
    let mut values = vec![run.values[0].clone()];
    for k in 1..=run.iterations() {
        values.push(apply_m_raw(mdp, &run.policies[k - 1], &run.values[k - 1], m));
    }
    Ok(Run {
        values,
        policies: run.policies.clone(),
    })
}

/// Slacks of the three recursive relations at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Step {
    pub k: usize,
    /// `min_s [(gamma P_{pi_k})^m b_{k-1} + x_k - b_k]`.
    pub b_slack: f64,
    /// State attaining `b_slack`.
    pub b_state: usize,
    /// `min_s [gamma P_* d_{k-1} + y_{k-1} + sum_{j<m} (gamma P_{pi_k})^j b_{k-1} - d_k]`.
    pub d_slack: f64,
    pub d_state: usize,
    /// `||s_k - (gamma P_{pi_k})^m (I - gamma P_{pi_k})^{-1} b_{k-1}||_inf`.
    pub s_residual: f64,
    /// `||l_k - d_k - s_k||_inf`.
    pub identity_residual: f64,
}

/// Evaluates the `b`, `d` and `s` recursions at every `k = 1..K`.
pub fn check_lemma1(
    mdp: &TabularMdp,
    diagnostics: &Diagnostics,
    errors: &ErrorSequence,
    run: &Run,
    m: usize,
) -> Result<Vec<Lemma1Step>> {
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    let k_max = diagnostics.iterations();
    if run.iterations() != k_max || errors.eps.len() != k_max + 1 {
        return Err(invalid_arg(
            "diagnostics, errors and run disagree on the number of iterations",
        ));
    }
    let gamma = mdp.gamma();
    let kernel = |pi: &DeterministicPolicy, x: &[f64]| -> Vec<f64> {
        mdp.kernel_apply(pi, x).into_iter().map(|v| gamma * v).collect()
    };
    let pi_star = &diagnostics.pi_star;
    let mut steps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let pi_k = &run.policies[k - 1];
        let b_prev = &diagnostics.b[k - 1];

        let eps_k = &errors.eps[k];
        let x_k = add(&sub(eps_k, &kernel(pi_k, eps_k)), errors.eps_prime(k + 1));
        let b_rhs = add(&mdp.discounted_kernel_power(pi_k, m, b_prev), &x_k);
        let (b_slack, b_state) = min_gap(&b_rhs, &diagnostics.b[k]);

        // d_k from d_{k-1}: y_{k-1} = -gamma P_* eps_{k-1} + eps'_k
        let eps_prev = &errors.eps[k - 1];
        let y_prev = sub(errors.eps_prime(k), &kernel(pi_star, eps_prev));
        let mut d_rhs = add(&kernel(pi_star, &diagnostics.d[k - 1]), &y_prev);
        let mut term = b_prev.clone();
        for _ in 1..m {
            term = kernel(pi_k, &term);
            d_rhs = add(&d_rhs, &term);
        }
        let (d_slack, d_state) = min_gap(&d_rhs, &diagnostics.d[k]);

        let shifted = mdp.discounted_kernel_power(pi_k, m, &mdp.resolvent_apply(pi_k, b_prev)?);
        let s_residual = sup_norm(&sub(diagnostics.s(k), &shifted));
        let identity_residual = sup_norm(&sub(diagnostics.l(k), &add(&diagnostics.d[k], diagnostics.s(k))));
        steps.push(Lemma1Step {
            k,
            b_slack,
            b_state,
            d_slack,
            d_state,
            s_residual,
            identity_residual,
        });
    }
    Ok(steps)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::env::{make_garnet, GarnetSpec};
    use crate::mdp::{exact_mpi, greedy_raw, EvalSteps, MpiOptions, ValueFunction};
    use crate::rng::stream;
    use rand::Rng;

    fn exact_run(mdp: &TabularMdp, m: usize, k: usize, v0: Vec<f64>) -> Run {
        let out = exact_mpi(
            mdp,
            &ValueFunction::states(v0.clone()),
            EvalSteps::Finite(m),
            MpiOptions { tol: 1e-300, k_max: k },
        )
        .unwrap();
        let mut values = vec![v0];
        let mut policies = Vec::new();
        for it in &out.trace {
            policies.push(it.policy.clone());
            values.push(it.value.to_vec());
        }
        policies.push(greedy_raw(mdp, values.last().unwrap()));
        Run { values, policies }
    }

    #[test]
    fn exact_runs_have_no_errors_and_vanishing_loss() {
        let mdp = make_garnet(&GarnetSpec::new(6, 3, 3, 0.8, 11)).unwrap();
        let run = exact_run(&mdp, 3, 40, vec![0.0; 6]);
        let (diag, err) = compute_diagnostics(&mdp, &run, 3).unwrap();
        for e in &err.eps {
            assert!(sup_norm(e) < 1e-12);
        }
        for e in &err.eps_prime {
            assert!(sup_norm(e) < 1e-12);
        }
        assert!(sup_norm(diag.l(40)) < 1e-8);
        assert!(sup_norm(&diag.b[40]) < sup_norm(&diag.b[1]) * 1e-2);
        for step in check_lemma1(&mdp, &diag, &err, &run, 3).unwrap() {
            assert!(step.s_residual <= 1e-10, "{step:?}");
            assert!(step.b_slack >= -1e-9 && step.d_slack >= -1e-9, "{step:?}");
        }
    }

    #[test]
    fn injected_constant_error_is_recovered() {
        let mdp = make_garnet(&GarnetSpec::new(4, 2, 2, 0.9, 3)).unwrap();
        let v0 = vec![0.5, 0.0, -0.5, 1.0];
        let pi1 = greedy_raw(&mdp, &v0);
        let mut v1 = apply_m_raw(&mdp, &pi1, &v0, 2);
        v1.iter_mut().for_each(|x| *x += 0.25);
        let run = Run {
            policies: vec![pi1, greedy_raw(&mdp, &v1)],
            values: vec![v0, v1],
        };
        let (_, err) = compute_diagnostics(&mdp, &run, 2).unwrap();
        for x in &err.eps[1] {
            assert!((x - 0.25).abs() < 1e-14);
        }
        assert!(sup_norm(err.eps_prime(1)) == 0.0);
    }

    type Vectors = Vec<Vec<f64>>;

    /// Independent recomputation: loops over states and next states directly.
    fn brute_force(mdp: &TabularMdp, run: &Run, m: usize) -> (Vectors, Vectors, Vectors) {
        let n = mdp.n_states();
        let backup = |v: &[f64], s: usize, a: usize| {
            let mut total = mdp.reward(s, a);
            for t in 0..n {
                total += mdp.gamma() * mdp.prob(s, a, t) * v[t];
            }
            total
        };
        let mut eps = vec![vec![0.0; n]];
        let mut eps_prime = Vec::new();
        let mut b = Vec::new();
        for k in 0..run.values.len() {
            let v = &run.values[k];
            let pi = &run.policies[k];
            b.push((0..n).map(|s| v[s] - backup(v, s, pi.action(s))).collect());
            eps_prime.push(
                (0..n)
                    .map(|s| {
                        let best = (0..mdp.n_actions())
                            .map(|a| backup(v, s, a))
                            .fold(f64::NEG_INFINITY, f64::max);
                        best - backup(v, s, pi.action(s))
                    })
                    .collect(),
            );
            if k > 0 {
                let pi_k = &run.policies[k - 1];
                let mut w = run.values[k - 1].clone();
                for _ in 0..m {
                    w = (0..n).map(|s| backup(&w, s, pi_k.action(s))).collect();
                }
                eps.push((0..n).map(|s| v[s] - w[s]).collect());
            }
        }
        (eps, eps_prime, b)
    }

    #[test]
    fn matches_duplicate_implementation_on_random_errors() {
        let mdp = make_garnet(&GarnetSpec::new(6, 3, 4, 0.9, 17)).unwrap();
        let mut rng = stream(&[42]);
        let mut values = vec![(0..6).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>()];
        let mut policies = Vec::new();
        for _ in 0..5 {
            let pi = DeterministicPolicy::new((0..6).map(|_| rng.random_range(0..3)).collect(), 3).unwrap();
            let mut next = apply_m_raw(&mdp, &pi, values.last().unwrap(), 2);
            next.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
            policies.push(pi);
            values.push(next);
        }
        policies.push(DeterministicPolicy::new((0..6).map(|_| rng.random_range(0..3)).collect(), 3).unwrap());
        let run = Run { values, policies };
        let (diag, err) = compute_diagnostics(&mdp, &run, 2).unwrap();
        let (eps, eps_prime, b) = brute_force(&mdp, &run, 2);
        for k in 0..eps.len() {
            assert!(sup_norm(&sub(&eps[k], &err.eps[k])) < 1e-12);
            assert!(sup_norm(&sub(&b[k], &diag.b[k])) < 1e-12);
        }
        for k in 0..eps_prime.len() {
            assert!(sup_norm(&sub(&eps_prime[k], &err.eps_prime[k])) < 1e-12);
        }
        for k in 1..=5 {
            assert!(diag.l(k).iter().all(|x| *x >= -1e-10));
            let sum = add(&diag.d[k], diag.s(k));
            assert!(sup_norm(&sub(&sum, diag.l(k))) < 1e-10);
        }
    }

    #[test]
    fn value_iteration_case_matches_direct_recursion() {
        let mdp = make_garnet(&GarnetSpec::new(5, 2, 3, 0.85, 23)).unwrap();
        let mut rng = stream(&[5]);
        let mut values = vec![vec![0.0; 5]];
        let mut policies = Vec::new();
        for _ in 0..4 {
            let v = values.last().unwrap();
            let pi = greedy_raw(&mdp, v);
            let mut next = apply_raw(&mdp, &pi, v);
            next.iter_mut().for_each(|x| *x += rng.random_range(-0.1..0.1));
            policies.push(pi);
            values.push(next);
        }
        policies.push(greedy_raw(&mdp, values.last().unwrap()));
        let run = Run { values, policies };
        let (diag, err) = compute_diagnostics(&mdp, &run, 1).unwrap();
        let steps = check_lemma1(&mdp, &diag, &err, &run, 1).unwrap();
        for step in &steps {
            let k = step.k;
            let pi = &run.policies[k - 1];
            // b_k <= gamma P b_{k-1} + (I - gamma P) eps_k + eps'_{k+1}, computed by hand
            let n = mdp.n_states();
            for s in 0..n {
                let a = pi.action(s);
                let pb: f64 = (0..n).map(|t| mdp.prob(s, a, t) * diag.b[k - 1][t]).sum();
                let pe: f64 = (0..n).map(|t| mdp.prob(s, a, t) * err.eps[k][t]).sum();
                let rhs = mdp.gamma() * pb + err.eps[k][s] - mdp.gamma() * pe + err.eps_prime(k + 1)[s];
                assert!(rhs - diag.b[k][s] >= step.b_slack - 1e-12);
                assert!(rhs - diag.b[k][s] >= -1e-9);
            }
        }
    }

    #[test]
    fn cbmpi_abstraction_errors_are_pushed_forward() {
        let mdp = make_garnet(&GarnetSpec::new(5, 2, 3, 0.9, 29)).unwrap();
        let mut rng = stream(&[8]);
        let mut values = vec![vec![0.0; 5]];
        let mut policies = vec![DeterministicPolicy::constant(5, 0)];
        for _ in 0..4 {
            let pi = policies.last().unwrap();
            let mut next = apply_m_raw(&mdp, pi, values.last().unwrap(), 3);
            next.iter_mut().for_each(|x| *x += rng.random_range(-0.2..0.2));
            values.push(next);
            policies.push(DeterministicPolicy::new((0..5).map(|_| rng.random_range(0..2)).collect(), 2).unwrap());
        }
        let run = Run { values, policies };
        let w = cbmpi_abstract_run(&mdp, &run, 3).unwrap();
        let (_, raw) = compute_diagnostics(&mdp, &run, 3).unwrap();
        let (_, abs) = compute_diagnostics(&mdp, &w, 3).unwrap();
        assert!(sup_norm(&abs.eps[1]) < 1e-12);
        for k in 2..=4 {
            let pushed = mdp.discounted_kernel_power(&run.policies[k - 1], 3, &raw.eps[k - 1]);
            assert!(sup_norm(&sub(&pushed, &abs.eps[k])) < 1e-12);
        }
    }
}
