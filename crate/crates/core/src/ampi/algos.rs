use std::time::Instant;

use rayon::prelude::*;

use super::model::tabular_step;
use super::rollout::{bootstrap, greedy_v, monte_carlo_greedy, simulate};
use super::{
    AmpiConfig, GenerativeModel, IterationRecord, IterationTrace, Provenance, Purpose, TabularIterate, Variant,
};
use crate::approx::{
    empirical_greedy_loss, empirical_mse, fit_classifier_from, fit_regression, LinearValueApproximator, Policy,
    PolicySpace, RegressionProblem, SharedFeatures,
};
use crate::error::{invalid_arg, Result};
use crate::mdp::{argmax_lowest, optimal_value, policy_value, sup_distance, DeterministicPolicy, TabularMdp};
use crate::rng::{mix, stream};

const FIT_KEY: u64 = 0x66_6974;

/// Exact backing captured once per run.
struct Oracle<S> {
    mdp: TabularMdp,
    states: Vec<S>,
    v_star: Vec<f64>,
}

impl<S> Oracle<S> {
    fn new<G: GenerativeModel<State = S>>(model: &G) -> Result<Option<Self>> {
        let (Some(mdp), Some(states)) = (model.tabular(), model.states()) else {
            return Ok(None);
        };
        let (_, v_star) = optimal_value(mdp)?;
        Ok(Some(Self {
            mdp: mdp.clone(),
            states,
            v_star: v_star.into_vec(),
        }))
    }

    fn loss(&self, policy: &DeterministicPolicy) -> Result<f64> {
        Ok(sup_distance(&self.v_star, &policy_value(&self.mdp, policy)?))
    }

    fn materialize(&self, act: impl Fn(usize) -> usize) -> DeterministicPolicy {
        let actions = (0..self.states.len()).map(act).collect();
        DeterministicPolicy::new(actions, self.mdp.n_actions()).expect("actions in range")
    }
}

fn check_model<G: GenerativeModel>(model: &G, config: &AmpiConfig, expected: &[Variant]) -> Result<()> {
    if !expected.contains(&config.variant) {
        return Err(invalid_arg(format!(
            "variant {} not handled by this runner",
            config.variant
        )));
    }
    config.validate(model.n_actions())
}

/// Greedy policy of AMPI-V: the Monte Carlo argmax, with randomness keyed by
/// state so that it is a fixed policy within an iteration.
pub struct SampledGreedyPolicy<'a, G: GenerativeModel> {
    pub model: &'a G,
    pub value: LinearValueApproximator<G::State>,
    pub samples: usize,
    pub seed: u64,
    pub k: usize,
}

impl<G: GenerativeModel> SampledGreedyPolicy<'_, G> {
    /// Action and the transitions spent finding it. `slot` keys the stream
    /// when the model has no state keys.
    fn act(&self, s: &G::State, slot: (usize, usize)) -> usize {
        let mut rng = self.rng(s, slot);
        greedy_v(self.model, &self.value, s, self.samples, &mut rng)
    }

    fn rng(&self, s: &G::State, slot: (usize, usize)) -> crate::rng::StreamRng {
        match self.model.state_key(s) {
            Some(key) => stream(&[self.seed, self.k as u64, 3, key]),
            None => stream(&[self.seed, self.k as u64, 4, slot.0 as u64, slot.1 as u64]),
        }
    }
}

impl<G: GenerativeModel> Policy<G::State> for SampledGreedyPolicy<'_, G> {
    fn action(&self, s: &G::State) -> usize {
        self.act(s, (usize::MAX, 0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpiVOutcome<S> {
    pub trace: IterationTrace,
    /// `v_K`.
    pub value: LinearValueApproximator<S>,
}

/// AMPI-V: sampled greedy steps along `m`-step rollouts, then a fitted value.
pub fn run_ampi_v<G: GenerativeModel>(
    model: &G,
    features: SharedFeatures<G::State>,
    config: &AmpiConfig,
) -> Result<AmpiVOutcome<G::State>> {
    check_model(model, config, &[Variant::AmpiV])?;
    let oracle = Oracle::new(model)?;
    let gamma = model.gamma();
    let v_max = model.v_max();
    let mut value = LinearValueApproximator::zero(features.clone(), v_max);

    let materialize = |value: &LinearValueApproximator<G::State>, k: usize, oracle: &Oracle<G::State>| {
        let greedy = SampledGreedyPolicy {
            model,
            value: value.clone(),
            samples: config.samples,
            seed: config.seed,
            k,
        };
        let replay = |s: usize| {
            let state = &oracle.states[s];
            let mut rng = greedy.rng(state, (usize::MAX, 0));
            monte_carlo_greedy(model.n_actions(), config.samples, gamma, &mut rng, |a, rng| {
                let (r, next) = tabular_step(&oracle.mdp, s, a, rng);
                (r, bootstrap(model, &greedy.value, &oracle.states[next]))
            })
        };
        TabularIterate {
            values: oracle.states.iter().map(|s| value.eval(s)).collect(),
            q_values: None,
            next_policy: oracle.materialize(replay),
        }
    };

    let initial = oracle.as_ref().map(|o| materialize(&value, 1, o));
    let mut current_policy = initial.as_ref().map(|t| t.next_policy.clone());
    let mut records = Vec::with_capacity(config.k_max);
    for k in 1..=config.k_max {
        let clock = Instant::now();
        let greedy = SampledGreedyPolicy {
            model,
            value: value.clone(),
            samples: config.samples,
            seed: config.seed,
            k,
        };
        let rollouts: Vec<_> = (0..config.greedy_states)
            .into_par_iter()
            .map(|i| {
                let provenance = Provenance {
                    k,
                    purpose: Purpose::Regression,
                    i,
                    a: 0,
                    j: 0,
                };
                let mut rng = provenance.rng(config.seed);
                let start = model.sample_start(i, &mut rng);
                let spent = (config.samples * model.n_actions()) as u64;
                let rollout = simulate(model, provenance, start, None, config.m, &mut rng, |s, t| {
                    (greedy.act(s, (i, t)), spent)
                });
                let target = rollout.target(gamma, bootstrap(model, &value, &rollout.end));
                (rollout, target)
            })
            .collect();
        let transitions = rollouts.iter().map(|(r, _)| r.transitions).sum();
        let (inputs, targets): (Vec<_>, Vec<_>) = rollouts.into_iter().map(|(r, y)| (r.start, y)).unzip();
        let problem = RegressionProblem::new(inputs, targets)?;
        let fitted = fit_regression(&problem, features.clone(), v_max)?;
        let mse = empirical_mse(&problem, &fitted);
        value = fitted;

        let (tabular, loss) = match (&oracle, &current_policy) {
            (Some(o), Some(pi_k)) => {
                let loss = o.loss(pi_k)?;
                let iterate = materialize(&value, k + 1, o);
                current_policy = Some(iterate.next_policy.clone());
                (Some(iterate), Some(loss))
            }
            _ => (None, None),
        };
        records.push(IterationRecord {
            k,
            weights: value.weights().to_vec(),
            transitions,
            wall_time: clock.elapsed(),
            regression_mse: Some(mse),
            classifier_loss: None,
            loss,
            tabular,
        });
    }
    Ok(AmpiVOutcome {
        trace: IterationTrace {
            config: config.clone(),
            initial,
            records,
        },
        value,
    })
}

/// `argmax_a Q(s, a)`; ties to the lowest action.
#[derive(Debug, Clone, PartialEq)]
pub struct QGreedyPolicy<S> {
    pub q: LinearValueApproximator<(S, usize)>,
    pub n_actions: usize,
}

impl<S: Clone> QGreedyPolicy<S> {
    pub fn values(&self, s: &S) -> Vec<f64> {
        (0..self.n_actions).map(|a| self.q.eval(&(s.clone(), a))).collect()
    }
}

impl<S: Clone + Send + Sync> Policy<S> for QGreedyPolicy<S> {
    fn action(&self, s: &S) -> usize {
        argmax_lowest(&self.values(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpiQOutcome<S> {
    pub trace: IterationTrace,
    /// Greedy policy of `Q_K`.
    pub policy: QGreedyPolicy<S>,
}

/// AMPI-Q: `m`-step rollouts from sampled state-action pairs, acting greedily
/// w.r.t. the previous `Q`, then a fitted `Q`.
pub fn run_ampi_q<G: GenerativeModel>(
    model: &G,
    features: SharedFeatures<(G::State, usize)>,
    config: &AmpiConfig,
) -> Result<AmpiQOutcome<G::State>> {
    check_model(model, config, &[Variant::AmpiQ])?;
    let oracle = Oracle::new(model)?;
    let gamma = model.gamma();
    let v_max = model.v_max();
    let n_actions = model.n_actions();
    let mut greedy = QGreedyPolicy {
        q: LinearValueApproximator::zero(features.clone(), v_max),
        n_actions,
    };

    let snapshot = |greedy: &QGreedyPolicy<G::State>, oracle: &Oracle<G::State>| {
        let q: Vec<f64> = oracle.states.iter().flat_map(|s| greedy.values(s)).collect();
        let values = q
            .chunks(n_actions)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let next_policy = oracle.materialize(|s| argmax_lowest(&q[s * n_actions..(s + 1) * n_actions]));
        TabularIterate {
            values,
            q_values: Some(q),
            next_policy,
        }
    };

    let initial = oracle.as_ref().map(|o| snapshot(&greedy, o));
    let mut current_policy = initial.as_ref().map(|t| t.next_policy.clone());
    let mut records = Vec::with_capacity(config.k_max);
    for k in 1..=config.k_max {
        let clock = Instant::now();
        let rollouts: Vec<_> = (0..config.greedy_states)
            .into_par_iter()
            .map(|i| {
                let provenance = Provenance {
                    k,
                    purpose: Purpose::Regression,
                    i,
                    a: 0,
                    j: 0,
                };
                let mut rng = provenance.rng(config.seed);
                let (start, a0) = model.sample_start_pair(i, &mut rng);
                let rollout = simulate(model, provenance, start, Some(a0), config.m, &mut rng, |s, _| {
                    (greedy.action(s), 0)
                });
                let tail = if model.is_terminal(&rollout.end) {
                    0.0
                } else {
                    greedy
                        .values(&rollout.end)
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                let target = rollout.target(gamma, tail);
                (rollout, a0, target)
            })
            .collect();
        let transitions = rollouts.iter().map(|(r, _, _)| r.transitions).sum();
        let (inputs, targets): (Vec<_>, Vec<_>) = rollouts.into_iter().map(|(r, a, y)| ((r.start, a), y)).unzip();
        let problem = RegressionProblem::new(inputs, targets)?;
        let fitted = fit_regression(&problem, features.clone(), v_max)?;
        let mse = empirical_mse(&problem, &fitted);
        greedy.q = fitted;

        let (tabular, loss) = match (&oracle, &current_policy) {
            (Some(o), Some(pi_k)) => {
                let loss = o.loss(pi_k)?;
                let iterate = snapshot(&greedy, o);
                current_policy = Some(iterate.next_policy.clone());
                (Some(iterate), Some(loss))
            }
            _ => (None, None),
        };
        records.push(IterationRecord {
            k,
            weights: greedy.q.weights().to_vec(),
            transitions,
            wall_time: clock.elapsed(),
            regression_mse: Some(mse),
            classifier_loss: None,
            loss,
            tabular,
        });
    }
    Ok(AmpiQOutcome {
        trace: IterationTrace {
            config: config.clone(),
            initial,
            records,
        },
        policy: greedy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbmpiOutcome<S, P> {
    pub trace: IterationTrace,
    /// `v_K` (identically zero for DPI).
    pub value: LinearValueApproximator<S>,
    /// `pi_{K+1}`.
    pub policy: P,
}

/// CBMPI (and DPI): regression of `(T_{pi_k})^m v_{k-1}` on `n` rollouts,
/// then a cost-sensitive classifier fitted on `M` rollouts of length `m + 1`
/// per state-action pair of the `N` greedy-step states.
pub fn run_cbmpi<G, P>(
    model: &G,
    features: SharedFeatures<G::State>,
    space: &P,
    config: &AmpiConfig,
) -> Result<CbmpiOutcome<G::State, P::Policy>>
where
    G: GenerativeModel,
    P: PolicySpace<G::State>,
{
    check_model(model, config, &[Variant::Cbmpi, Variant::Dpi])?;
    if space.n_actions() != model.n_actions() {
        return Err(invalid_arg("policy space and model disagree on the number of actions"));
    }
    let oracle = Oracle::new(model)?;
    let gamma = model.gamma();
    let v_max = model.v_max();
    let n_actions = model.n_actions();
    let mut value = LinearValueApproximator::zero(features.clone(), v_max);
    let mut policy = space.constant(config.initial_action);

    let snapshot =
        |value: &LinearValueApproximator<G::State>, policy: &P::Policy, oracle: &Oracle<G::State>| TabularIterate {
            values: oracle.states.iter().map(|s| value.eval(s)).collect(),
            q_values: None,
            next_policy: oracle.materialize(|s| policy.action(&oracle.states[s])),
        };

    let initial = oracle.as_ref().map(|o| snapshot(&value, &policy, o));
    let mut records = Vec::with_capacity(config.k_max);
    for k in 1..=config.k_max {
        let clock = Instant::now();
        let previous = &value;
        let pi_k = &policy;

        let (fitted, regression_mse, eval_transitions) = if config.variant == Variant::Dpi {
            (LinearValueApproximator::zero(features.clone(), v_max), None, 0)
        } else {
            let rollouts: Vec<_> = (0..config.eval_states)
                .into_par_iter()
                .map(|i| {
                    let provenance = Provenance {
                        k,
                        purpose: Purpose::Regression,
                        i,
                        a: 0,
                        j: 0,
                    };
                    let mut rng = provenance.rng(config.seed);
                    let start = model.sample_start(i, &mut rng);
                    let rollout = simulate(model, provenance, start, None, config.m, &mut rng, |s, _| {
                        (pi_k.action(s), 0)
                    });
                    let target = rollout.target(gamma, bootstrap(model, previous, &rollout.end));
                    (rollout, target)
                })
                .collect();
            let transitions: u64 = rollouts.iter().map(|(r, _)| r.transitions).sum();
            let (inputs, targets): (Vec<_>, Vec<_>) = rollouts.into_iter().map(|(r, y)| (r.start, y)).unzip();
            let problem = RegressionProblem::new(inputs, targets)?;
            let fitted = fit_regression(&problem, features.clone(), v_max)?;
            let mse = empirical_mse(&problem, &fitted);
            (fitted, Some(mse), transitions)
        };

        let estimates: Vec<_> = (0..config.greedy_states)
            .into_par_iter()
            .map(|i| {
                let mut start_rng = stream(&[config.seed, k as u64, 5, i as u64]);
                let s = model.sample_start(i, &mut start_rng);
                let mut transitions = 0;
                let q: Vec<f64> = (0..n_actions)
                    .map(|a| {
                        let total: f64 = (0..config.samples)
                            .map(|j| {
                                let provenance = Provenance {
                                    k,
                                    purpose: Purpose::Classification,
                                    i,
                                    a,
                                    j,
                                };
                                let mut rng = provenance.rng(config.seed);
                                let rollout =
                                    simulate(model, provenance, s.clone(), Some(a), config.m + 1, &mut rng, |s, _| {
                                        (pi_k.action(s), 0)
                                    });
                                transitions += rollout.transitions;
                                rollout.target(gamma, bootstrap(model, previous, &rollout.end))
                            })
                            .sum();
                        total / config.samples as f64
                    })
                    .collect();
                (s, q, transitions)
            })
            .collect();
        let greedy_transitions: u64 = estimates.iter().map(|(_, _, t)| t).sum();
        let (states, q_hat): (Vec<_>, Vec<_>) = estimates.into_iter().map(|(s, q, _)| (s, q)).unzip();
        let next = fit_classifier_from(&states, &q_hat, space, mix(&[config.seed, k as u64, FIT_KEY]), pi_k)?;
        let classifier_loss = empirical_greedy_loss(&states, &q_hat, &next);

        let (tabular, loss) = match &oracle {
            Some(o) => {
                let acting = o.materialize(|s| pi_k.action(&o.states[s]));
                (Some(snapshot(&fitted, &next, o)), Some(o.loss(&acting)?))
            }
            None => (None, None),
        };
        records.push(IterationRecord {
            k,
            weights: fitted.weights().to_vec(),
            transitions: eval_transitions + greedy_transitions,
            wall_time: clock.elapsed(),
            regression_mse,
            classifier_loss: Some(classifier_loss),
            loss,
            tabular,
        });
        value = fitted;
        policy = next;
    }
    Ok(CbmpiOutcome {
        trace: IterationTrace {
            config: config.clone(),
            initial,
            records,
        },
        value,
        policy,
    })
}
