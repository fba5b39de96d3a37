use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use super::features::SharedFeatures;
use crate::error::{invalid_arg, Result};
use crate::mdp::{apply_m_raw, argmax_lowest, q_backup, DeterministicPolicy, TabularMdp, ValueFunction};
use crate::rng::stream;

/// A deterministic decision rule over states of type `S`.
pub trait Policy<S: ?Sized>: Send + Sync {
    fn action(&self, s: &S) -> usize;
}

impl Policy<usize> for DeterministicPolicy {
    fn action(&self, s: &usize) -> usize {
        DeterministicPolicy::action(self, *s)
    }
}

impl<S: ?Sized, F: Fn(&S) -> usize + Send + Sync> Policy<S> for F {
    fn action(&self, s: &S) -> usize {
        self(s)
    }
}

/// A policy space `Pi` together with its cost-sensitive classifier.
pub trait PolicySpace<S>: Send + Sync {
    type Policy: Policy<S> + Clone + fmt::Debug + PartialEq;

    fn n_actions(&self) -> usize;

    /// Declared VC dimension `h`, used only by the bound calculators.
    fn vc_dim(&self) -> usize;

    /// The member playing `action` everywhere.
    fn constant(&self, action: usize) -> Self::Policy;

    /// Minimizes the empirical greedy loss over the space. `q_hat[i][a]` is the
    /// estimate of `Q(states[i], a)`.
    fn fit(&self, states: &[S], q_hat: &[Vec<f64>], seed: u64) -> Result<Self::Policy> {
        self.fit_from(states, q_hat, seed, None)
    }

    /// As [`PolicySpace::fit`], preferring `warm` where the data cannot tell
    /// members apart.
    fn fit_from(
        &self,
        states: &[S],
        q_hat: &[Vec<f64>],
        seed: u64,
        warm: Option<&Self::Policy>,
    ) -> Result<Self::Policy>;
}

/// `(1/N) sum_i [max_a Q(s_i, a) - Q(s_i, pi(s_i))]`.
pub fn empirical_greedy_loss<S, P: Policy<S> + ?Sized>(states: &[S], q_hat: &[Vec<f64>], policy: &P) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states
        .iter()
        .zip(q_hat)
        .map(|(s, q)| regret(q, policy.action(s)))
        .sum::<f64>()
        / states.len() as f64
}

fn regret(q: &[f64], a: usize) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max) - q[a]
}

/// Runs the space's classifier after validating the training set.
pub fn fit_classifier<S, P: PolicySpace<S>>(
    states: &[S],
    q_hat: &[Vec<f64>],
    space: &P,
    seed: u64,
) -> Result<P::Policy> {
    validate_training_set(states, q_hat, space.n_actions())?;
    space.fit(states, q_hat, seed)
}

/// [`fit_classifier`] warm-started at `warm`.
pub fn fit_classifier_from<S, P: PolicySpace<S>>(
    states: &[S],
    q_hat: &[Vec<f64>],
    space: &P,
    seed: u64,
    warm: &P::Policy,
) -> Result<P::Policy> {
    validate_training_set(states, q_hat, space.n_actions())?;
    space.fit_from(states, q_hat, seed, Some(warm))
}

fn validate_training_set<S>(states: &[S], q_hat: &[Vec<f64>], n_actions: usize) -> Result<()> {
    if states.is_empty() {
        return Err(invalid_arg("classifier needs at least one state"));
    }
    if q_hat.len() != states.len() {
        return Err(invalid_arg(format!(
            "{} states but {} Q-estimate rows",
            states.len(),
            q_hat.len()
        )));
    }
    if q_hat.iter().any(|row| row.len() != n_actions) {
        return Err(invalid_arg(format!("every Q-estimate row needs {n_actions} entries")));
    }
    if q_hat.iter().flatten().any(|q| !q.is_finite()) {
        return Err(invalid_arg("Q estimates must be finite"));
    }
    Ok(())
}

/// Expected greedy regret under `mu` of `policy` against
/// `Q(s, a) = [T_a (T_{policy_prev})^m v_prev](s)`.
pub fn true_greedy_loss(
    mdp: &TabularMdp,
    policy_prev: &DeterministicPolicy,
    v_prev: &ValueFunction,
    m: usize,
    policy: &DeterministicPolicy,
    mu: &[f64],
) -> Result<f64> {
    crate::analysis::check_distribution(mu, mdp.n_states(), "mu")?;
    if m == 0 {
        return Err(invalid_arg("m must be at least 1"));
    }
    if v_prev.len() != mdp.n_states() || policy.len() != mdp.n_states() || policy_prev.len() != mdp.n_states() {
        return Err(invalid_arg("policy/value dimensions do not match the MDP"));
    }
    let w = apply_m_raw(mdp, policy_prev, v_prev, m);
    let q = q_backup(mdp, &w);
    Ok(q.chunks(mdp.n_actions())
        .zip(mu)
        .enumerate()
        .map(|(s, (row, p))| p * regret(row, policy.action(s)))
        .sum())
}

/// Every deterministic policy on a finite state set. The classifier is exact:
/// per distinct state it plays the argmax of the summed estimates, ties going
/// to the lowest action index. Unseen states keep the warm-start action, or
/// action 0 without one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExhaustivePolicySpace {
    pub n_states: usize,
    pub n_actions: usize,
    pub vc_dim: usize,
}

impl ExhaustivePolicySpace {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            vc_dim: n_states,
        }
    }
}

impl PolicySpace<usize> for ExhaustivePolicySpace {
    type Policy = DeterministicPolicy;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn vc_dim(&self) -> usize {
        self.vc_dim
    }

    fn constant(&self, action: usize) -> DeterministicPolicy {
        DeterministicPolicy::constant(self.n_states, action)
    }

    fn fit_from(
        &self,
        states: &[usize],
        q_hat: &[Vec<f64>],
        _seed: u64,
        warm: Option<&DeterministicPolicy>,
    ) -> Result<DeterministicPolicy> {
        validate_training_set(states, q_hat, self.n_actions)?;
        if warm.is_some_and(|w| w.len() != self.n_states) {
            return Err(invalid_arg("warm-start policy does not cover the state set"));
        }
        let mut totals = vec![vec![0.0; self.n_actions]; self.n_states];
        let mut seen = vec![false; self.n_states];
        for (s, q) in states.iter().zip(q_hat) {
            if *s >= self.n_states {
                return Err(invalid_arg(format!("state {s} outside the policy space")));
            }
            seen[*s] = true;
            totals[*s].iter_mut().zip(q).for_each(|(t, v)| *t += v);
        }
        let actions = (0..self.n_states)
            .map(|s| match (seen[s], warm) {
                (true, _) => argmax_lowest(&totals[s]),
                (false, Some(w)) => w.action(s),
                (false, None) => 0,
            })
            .collect();
        DeterministicPolicy::new(actions, self.n_actions)
    }
}

/// `pi(s) = argmax_a phi(s) . w_a`, ties to the lowest action.
pub struct LinearScorePolicy<S: ?Sized> {
    features: SharedFeatures<S>,
    /// Row-major `[a][j]`.
    weights: Vec<f64>,
    n_actions: usize,
}

impl<S: ?Sized> LinearScorePolicy<S> {
    pub fn new(features: SharedFeatures<S>, weights: Vec<f64>, n_actions: usize) -> Result<Self> {
        if weights.len() != features.dim() * n_actions {
            return Err(invalid_arg("score weights must be n_actions x dim"));
        }
        Ok(Self {
            features,
            weights,
            n_actions,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scores(&self, s: &S) -> Vec<f64> {
        let phi = self.features.features(s);
        scores_from(&phi, &self.weights, self.n_actions)
    }
}

fn scores_from(phi: &[f64], weights: &[f64], n_actions: usize) -> Vec<f64> {
    let d = phi.len();
    (0..n_actions)
        .map(|a| phi.iter().zip(&weights[a * d..(a + 1) * d]).map(|(f, w)| f * w).sum())
        .collect()
}

impl<S: ?Sized> Policy<S> for LinearScorePolicy<S> {
    fn action(&self, s: &S) -> usize {
        argmax_lowest(&self.scores(s))
    }
}

impl<S: ?Sized> Clone for LinearScorePolicy<S> {
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            weights: self.weights.clone(),
            n_actions: self.n_actions,
        }
    }
}

impl<S: ?Sized> fmt::Debug for LinearScorePolicy<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearScorePolicy")
            .field("n_actions", &self.n_actions)
            .field("weights", &self.weights)
            .finish()
    }
}

impl<S: ?Sized> PartialEq for LinearScorePolicy<S> {
    fn eq(&self, other: &Self) -> bool {
        self.n_actions == other.n_actions && self.weights == other.weights
    }
}

/// Policies defined by per-action linear scores on a feature map.
///
/// The classifier is multi-start coordinate descent on the empirical greedy
/// loss. Each coordinate move is an exact line search: the loss is piecewise
/// constant in one weight, so every breakpoint interval is scanned. The first
/// starts are the warm-start weights (when given) and the zero vector; each
/// later start is the best of a batch of Gaussian draws. Strict improvement is
/// required to replace the incumbent, so the warm start wins ties.
pub struct LinearScoreSpace<S: ?Sized> {
    pub features: SharedFeatures<S>,
    pub n_actions: usize,
    pub vc_dim: usize,
    pub restarts: usize,
    pub sweeps: usize,
}

impl<S: ?Sized> LinearScoreSpace<S> {
    pub fn new(features: SharedFeatures<S>, n_actions: usize) -> Self {
        let vc_dim = features.dim() * n_actions;
        Self {
            features,
            n_actions,
            vc_dim,
            restarts: 16,
            sweeps: 200,
        }
    }
}

impl<S: ?Sized> fmt::Debug for LinearScoreSpace<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearScoreSpace")
            .field("dim", &self.features.dim())
            .field("n_actions", &self.n_actions)
            .field("restarts", &self.restarts)
            .field("sweeps", &self.sweeps)
            .finish()
    }
}

/// Gaussian draws screened per restart.
const SCREEN: usize = 32;

struct CoordinateSearch<'a> {
    phi: &'a [Vec<f64>],
    costs: &'a [Vec<f64>],
    n_actions: usize,
    d: usize,
}

impl CoordinateSearch<'_> {
    fn loss(&self, weights: &[f64]) -> f64 {
        self.phi
            .iter()
            .zip(self.costs)
            .map(|(phi, c)| c[argmax_lowest(&scores_from(phi, weights, self.n_actions))])
            .sum()
    }

    /// Best value for weight `(a, j)` with every other weight fixed. Returns
    /// the new value and the loss it achieves.
    fn line_search(&self, weights: &[f64], a: usize, j: usize) -> (f64, f64) {
        let idx = a * self.d + j;
        let current = weights[idx];
        let mut constant_loss = 0.0;
        // (breakpoint, slope sign > 0, cost when a is chosen, cost otherwise)
        let mut events = Vec::with_capacity(self.phi.len());
        for (phi, c) in self.phi.iter().zip(self.costs) {
            let scores = scores_from(phi, weights, self.n_actions);
            let base = scores[a] - current * phi[j];
            let mut other = usize::MAX;
            for b in 0..self.n_actions {
                if b != a && (other == usize::MAX || scores[b] > scores[other]) {
                    other = b;
                }
            }
            if other == usize::MAX {
                constant_loss += c[a];
                continue;
            }
            if phi[j] == 0.0 {
                let wins = base > scores[other] || (base == scores[other] && a < other);
                constant_loss += if wins { c[a] } else { c[other] };
                continue;
            }
            events.push(((scores[other] - base) / phi[j], phi[j] > 0.0, c[a], c[other]));
        }
        if events.is_empty() {
            return (current, constant_loss);
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0));
        // far left: a wins exactly where the slope is negative
        let mut loss = constant_loss
            + events
                .iter()
                .map(|&(_, up, ca, co)| if up { co } else { ca })
                .sum::<f64>();
        let mut best = (events[0].0 - 1.0, loss);
        let mut i = 0;
        while i < events.len() {
            let t = events[i].0;
            while i < events.len() && events[i].0 == t {
                let (_, up, ca, co) = events[i];
                loss += if up { ca - co } else { co - ca };
                i += 1;
            }
            let probe = if i < events.len() {
                0.5 * (t + events[i].0)
            } else {
                t + 1.0
            };
            if loss < best.1 {
                best = (probe, loss);
            }
        }
        best
    }

    fn descend(&self, mut weights: Vec<f64>, sweeps: usize) -> (Vec<f64>, f64) {
        let mut loss = self.loss(&weights);
        for _ in 0..sweeps {
            let mut improved = false;
            for a in 0..self.n_actions {
                for j in 0..self.d {
                    let (value, candidate) = self.line_search(&weights, a, j);
                    if candidate < loss - 1e-12 {
                        weights[a * self.d + j] = value;
                        // re-evaluate to stay exact under floating ties
                        loss = self.loss(&weights);
                        improved = true;
                    }
                }
            }
            if !improved || loss == 0.0 {
                break;
            }
        }
        (weights, loss)
    }
}

impl<S: Sync> PolicySpace<S> for LinearScoreSpace<S> {
    type Policy = LinearScorePolicy<S>;

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn vc_dim(&self) -> usize {
        self.vc_dim
    }

    fn constant(&self, action: usize) -> LinearScorePolicy<S> {
        let d = self.features.dim();
        let mut weights = vec![0.0; d * self.n_actions];
        // a bias-free basis cannot express a constant, so lean on tie-breaking
        // for action 0 and on a positive score otherwise
        if action > 0 {
            let phi_sum = self.features.bound().max(1.0);
            weights[action * d..(action + 1) * d].fill(phi_sum);
        }
        LinearScorePolicy {
            features: self.features.clone(),
            weights,
            n_actions: self.n_actions,
        }
    }

    fn fit_from(
        &self,
        states: &[S],
        q_hat: &[Vec<f64>],
        seed: u64,
        warm: Option<&LinearScorePolicy<S>>,
    ) -> Result<LinearScorePolicy<S>> {
        validate_training_set(states, q_hat, self.n_actions)?;
        let d = self.features.dim();
        if warm.is_some_and(|w| w.weights.len() != d * self.n_actions) {
            return Err(invalid_arg("warm-start policy has the wrong number of weights"));
        }
        // deterministic starts come first so that they win ties
        let mut fixed: Vec<Vec<f64>> = warm.map(|w| w.weights.clone()).into_iter().collect();
        fixed.push(vec![0.0; d * self.n_actions]);
        let phi: Vec<Vec<f64>> = states.iter().map(|s| self.features.features(s)).collect();
        let costs: Vec<Vec<f64>> = q_hat
            .iter()
            .map(|q| (0..self.n_actions).map(|a| regret(q, a)).collect())
            .collect();
        let search = CoordinateSearch {
            phi: &phi,
            costs: &costs,
            n_actions: self.n_actions,
            d,
        };
        let mut best: Option<(Vec<f64>, f64)> = None;
        for restart in 0..self.restarts.max(fixed.len()) {
            let start = if restart < fixed.len() {
                fixed[restart].clone()
            } else {
                // start from the best of a screened batch of Gaussian draws
                let mut rng = stream(&[seed, 0x63_6c61_7373, restart as u64]);
                (0..SCREEN)
                    .map(|_| {
                        let w: Vec<f64> = (0..d * self.n_actions)
                            .map(|_| StandardNormal.sample(&mut rng))
                            .collect();
                        let loss = search.loss(&w);
                        (w, loss)
                    })
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .map(|(w, _)| w)
                    .expect("non-empty screen")
            };
            let (w, loss) = search.descend(start, self.sweeps);
            if best.as_ref().is_none_or(|(_, l)| loss < *l) {
                best = Some((w, loss));
            }
            if loss == 0.0 {
                break;
            }
        }
        let (weights, _) = best.expect("at least one restart");
        LinearScorePolicy::new(self.features.clone(), weights, self.n_actions)
    }
}
