use crate::approx::LinearValueApproximator;
use crate::error::{invalid_arg, Result};
use crate::mdp::argmax_lowest;
use crate::rng::{stream, StreamRng};

use super::GenerativeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Evaluation-step rollouts (targets of the regression).
    Regression,
    /// Greedy-step rollouts (targets of the classifier).
    Classification,
    /// Monte Carlo greedy-action estimates of AMPI-V.
    Greedy,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Regression => 1,
            Purpose::Classification => 2,
            Purpose::Greedy => 3,
        }
    }
}

/// Coordinates of a rollout; they also key its random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub k: usize,
    pub purpose: Purpose,
    pub i: usize,
    pub a: usize,
    pub j: usize,
}

impl Provenance {
    pub fn rng(&self, seed: u64) -> StreamRng {
        stream(&[
            seed,
            self.k as u64,
            self.purpose.code(),
            self.i as u64,
            self.a as u64,
            self.j as u64,
        ])
    }
}

/// One simulated trajectory `s_0, a_0, r_0, ..., s_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<S> {
    pub provenance: Provenance,
    pub start: S,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub end: S,
    /// Transitions drawn, including those spent on greedy estimates.
    pub transitions: u64,
}

impl<S> Rollout<S> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `sum_t gamma^t r_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for r in &self.rewards {
            total += discount * r;
            discount *= gamma;
        }
        total
    }

    /// `sum_t gamma^t r_t + gamma^T tail`.
    pub fn target(&self, gamma: f64, tail: f64) -> f64 {
        self.discounted_return(gamma) + gamma.powi(self.len() as i32) * tail
    }
}

pub type RolloutBatch<S> = Vec<Rollout<S>>;

/// Value used when bootstrapping from `s`; terminal states are worth zero.
pub(crate) fn bootstrap<G: GenerativeModel>(model: &G, v: &LinearValueApproximator<G::State>, s: &G::State) -> f64 {
    if model.is_terminal(s) {
        0.0
    } else {
        v.eval(s)
    }
}

/// Argmax over actions of `(1/M) sum_j (r_j + gamma v(s'_j))`, drawing the
/// samples through `sample`. Ties go to the lowest action.
pub(crate) fn monte_carlo_greedy(
    n_actions: usize,
    samples: usize,
    gamma: f64,
    rng: &mut StreamRng,
    mut sample: impl FnMut(usize, &mut StreamRng) -> (f64, f64),
) -> usize {
    let means: Vec<f64> = (0..n_actions)
        .map(|a| {
            let total: f64 = (0..samples)
                .map(|_| {
                    let (r, next_value) = sample(a, rng);
                    r + gamma * next_value
                })
                .sum();
            total / samples as f64
        })
        .collect();
    argmax_lowest(&means)
}

/// Monte Carlo greedy action at `s` w.r.t. `v`, using exactly `M |A|`
/// transitions.
pub fn estimate_greedy_action_v<G: GenerativeModel>(
    model: &G,
    v: &LinearValueApproximator<G::State>,
    s: &G::State,
    samples: usize,
    rng: &mut StreamRng,
) -> Result<usize> {
    if samples == 0 {
        return Err(invalid_arg("M must be at least 1"));
    }
    Ok(greedy_v(model, v, s, samples, rng))
}

pub(crate) fn greedy_v<G: GenerativeModel>(
    model: &G,
    v: &LinearValueApproximator<G::State>,
    s: &G::State,
    samples: usize,
    rng: &mut StreamRng,
) -> usize {
    monte_carlo_greedy(model.n_actions(), samples, model.gamma(), rng, |a, rng| {
        let (r, next) = model.step(s, a, rng);
        (r, bootstrap(model, v, &next))
    })
}

/// Rollout of `policy` from `start` on the stream keyed by `provenance` and
/// `seed`; `first` forces the first action.
pub fn sample_rollout<G: GenerativeModel>(
    model: &G,
    provenance: Provenance,
    seed: u64,
    start: G::State,
    first: Option<usize>,
    steps: usize,
    policy: impl Fn(&G::State) -> usize,
) -> Rollout<G::State> {
    let mut rng = provenance.rng(seed);
    simulate(model, provenance, start, first, steps, &mut rng, |s, _| (policy(s), 0))
}

/// Follows `act` for `steps` transitions from `start`, optionally forcing the
/// first action.
pub(crate) fn simulate<G: GenerativeModel>(
    model: &G,
    provenance: Provenance,
    start: G::State,
    first: Option<usize>,
    steps: usize,
    rng: &mut StreamRng,
    mut act: impl FnMut(&G::State, usize) -> (usize, u64),
) -> Rollout<G::State> {
    let mut state = start.clone();
    let mut actions = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    let mut transitions = 0;
    for t in 0..steps {
        let a = match (t, first) {
            (0, Some(a)) => a,
            _ => {
                let (a, spent) = act(&state, t);
                transitions += spent;
                a
            }
        };
        let (r, next) = model.step(&state, a, rng);
        transitions += 1;
        actions.push(a);
        rewards.push(r);
        state = next;
    }
    Rollout {
        provenance,
        start,
        actions,
        rewards,
        end: state,
        transitions,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ampi::{CountingModel, TabularModel};
    use crate::approx::{OneHot, SharedFeatures};
    use crate::env::{make_garnet, make_prop1_mdp, GarnetSpec, STAY};
    use crate::mdp::{greedy_policy, q_backup, TabularMdp, ValueFunction};

    fn one_hot(n: usize) -> SharedFeatures<usize> {
        Arc::new(OneHot { n })
    }

    #[test]
    fn deterministic_mdp_matches_exact_greedy() {
        let mdp = make_garnet(&GarnetSpec::new(6, 3, 1, 0.9, 2)).unwrap();
        let model = TabularModel::uniform(mdp.clone());
        let values = vec![0.4, -1.0, 2.0, 0.0, 1.5, -0.3];
        let v = LinearValueApproximator::new(one_hot(6), values.clone(), mdp.v_max()).unwrap();
        let exact = greedy_policy(&mdp, &ValueFunction::states(values)).unwrap();
        for s in 0..6 {
            for samples in [1, 3] {
                let mut rng = stream(&[s as u64]);
                assert_eq!(
                    estimate_greedy_action_v(&model, &v, &s, samples, &mut rng).unwrap(),
                    exact.action(s)
                );
            }
        }
    }

    #[test]
    fn prop1_first_state_stays() {
        let mdp = make_prop1_mdp(0.9).unwrap();
        let model = TabularModel::uniform(mdp.clone());
        let v = LinearValueApproximator::new(one_hot(2), vec![0.01, 0.0], mdp.v_max()).unwrap();
        let mut rng = stream(&[0]);
        assert_eq!(estimate_greedy_action_v(&model, &v, &0, 5, &mut rng).unwrap(), STAY);
    }

    #[test]
    fn greedy_estimate_uses_exact_sample_count() {
        let mdp = make_garnet(&GarnetSpec::new(5, 4, 3, 0.9, 8)).unwrap();
        let model = CountingModel::new(TabularModel::uniform(mdp.clone()));
        let v = LinearValueApproximator::zero(one_hot(5), mdp.v_max());
        let mut rng = stream(&[9]);
        estimate_greedy_action_v(&model, &v, &1, 7, &mut rng).unwrap();
        assert_eq!(model.count(), 7 * 4);
        assert!(estimate_greedy_action_v(&model, &v, &1, 0, &mut rng).is_err());
    }

    fn gapped_mdp() -> TabularMdp {
        // three states, two actions; action 1 at state 0 is better by a clear margin
        let transition = vec![
            0.5, 0.3, 0.2, 0.1, 0.1, 0.8, //
            0.2, 0.6, 0.2, 0.3, 0.3, 0.4, //
            0.4, 0.4, 0.2, 0.0, 0.5, 0.5,
        ];
        let reward = vec![0.0, 0.1, 0.5, 0.2, 0.3, 0.0];
        TabularMdp::new(3, 2, transition, reward, 0.9).unwrap()
    }

    #[test]
    fn stochastic_estimate_concentrates_on_exact_argmax() {
        let mdp = gapped_mdp();
        let model = TabularModel::uniform(mdp.clone());
        let values = vec![0.0, 1.0, 3.0];
        let v = LinearValueApproximator::new(one_hot(3), values.clone(), mdp.v_max()).unwrap();
        let q = q_backup(&mdp, &values);
        // per-sample standard deviation of r + gamma v(s') for each action at state 0
        let sd = |a: usize| {
            let mean: f64 = (0..3).map(|t| mdp.prob(0, a, t) * values[t]).sum();
            let var: f64 = (0..3).map(|t| mdp.prob(0, a, t) * (values[t] - mean).powi(2)).sum();
            mdp.gamma() * var.sqrt()
        };
        let samples = 10_000;
        let se = ((sd(0).powi(2) + sd(1).powi(2)) / samples as f64).sqrt();
        assert!(q[1] - q[0] > 10.0 * se, "instance must have a clear gap");
        let hits = (0..50)
            .filter(|seed| {
                let mut rng = stream(&[*seed]);
                estimate_greedy_action_v(&model, &v, &0, samples, &mut rng).unwrap() == 1
            })
            .count();
        assert!(hits >= 49, "{hits}/50");
    }

    #[test]
    fn rollout_target_arithmetic() {
        let r = Rollout {
            provenance: Provenance {
                k: 1,
                purpose: Purpose::Regression,
                i: 0,
                a: 0,
                j: 0,
            },
            start: 0usize,
            actions: vec![0, 0, 0],
            rewards: vec![1.0, 1.0, 1.0],
            end: 0usize,
            transitions: 3,
        };
        assert_eq!(r.target(0.5, 0.0), 1.75);
        assert_eq!(r.target(0.5, 8.0), 2.75);
    }
}
