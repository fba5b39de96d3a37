use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::rng::StreamRng;

/// Sampling access to an MDP: a start-state distribution `mu` and a
/// transition sampler.
pub trait GenerativeModel: Send + Sync {
    type State: Clone + Send + Sync;

    fn n_actions(&self) -> usize;

    fn gamma(&self) -> f64;

    /// Bound on `|r|`.
    fn r_max(&self) -> f64;

    fn v_max(&self) -> f64 {
        self.r_max() / (1.0 - self.gamma())
    }

    /// Draws the start state for rollout slot `slot`.
    fn sample_start(&self, slot: usize, rng: &mut StreamRng) -> Self::State;

    /// Draws a state-action pair for slot `slot`; the action is uniform by
    /// default.
    fn sample_start_pair(&self, slot: usize, rng: &mut StreamRng) -> (Self::State, usize) {
        let s = self.sample_start(slot, rng);
        let a = rng.random_range(0..self.n_actions());
        (s, a)
    }

    /// One transition `(r, s')`. Called on terminal states too, where it must
    /// return a zero reward and stay put.
    fn step(&self, state: &Self::State, action: usize, rng: &mut StreamRng) -> (f64, Self::State);

    /// Terminal states have value zero.
    fn is_terminal(&self, _state: &Self::State) -> bool {
        false
    }

    /// Stable identifier for a state, used to key the randomness of sampled
    /// greedy steps so that they define a fixed policy.
    fn state_key(&self, _state: &Self::State) -> Option<u64> {
        None
    }

    /// Exact backing MDP. A model returning `Some` must sample exactly as
    /// [`tabular_step`] does on that MDP, so draws can be replayed.
    fn tabular(&self) -> Option<&TabularMdp> {
        None
    }

    /// The state set in index order, when it is finite.
    fn states(&self) -> Option<Vec<Self::State>> {
        None
    }
}

/// Next-state draw by inversion of the cumulative row.
pub fn tabular_step(mdp: &TabularMdp, s: usize, a: usize, rng: &mut StreamRng) -> (f64, usize) {
    let u: f64 = rng.random();
    let row = mdp.row(s, a);
    let mut acc = 0.0;
    let mut last = 0;
    for (next, p) in row.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = next;
            if u < acc {
                return (mdp.reward(s, a), next);
            }
        }
    }
    (mdp.reward(s, a), last)
}

/// How rollout slots pick their start states.
#[derive(Debug, Clone, PartialEq)]
pub enum StartDistribution {
    /// i.i.d. draws from the given weights.
    Weights(Vec<f64>),
    /// Slot `i` starts at state `i mod |S|` (pair `i mod |S||A|` for
    /// state-action slots). Deterministic full coverage.
    Cyclic,
}

/// A [`TabularMdp`] behind the sampling interface.
#[derive(Debug, Clone)]
pub struct TabularModel {
    mdp: TabularMdp,
    start: StartDistribution,
}

impl TabularModel {
    pub fn new(mdp: TabularMdp, start: StartDistribution) -> Result<Self> {
        if let StartDistribution::Weights(w) = &start {
            crate::analysis::check_distribution(w, mdp.n_states(), "start distribution")?;
        }
        Ok(Self { mdp, start })
    }

    /// Uniform start distribution.
    pub fn uniform(mdp: TabularMdp) -> Self {
        let n = mdp.n_states();
        Self {
            mdp,
            start: StartDistribution::Weights(vec![1.0 / n as f64; n]),
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn start(&self) -> &StartDistribution {
        &self.start
    }

    /// The sampling distribution over states; uniform for cyclic starts.
    pub fn mu(&self) -> Vec<f64> {
        match &self.start {
            StartDistribution::Weights(w) => w.clone(),
            StartDistribution::Cyclic => vec![1.0 / self.mdp.n_states() as f64; self.mdp.n_states()],
        }
    }
}

fn draw_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl GenerativeModel for TabularModel {
    type State = usize;

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    fn r_max(&self) -> f64 {
        self.mdp.r_max()
    }

    fn sample_start(&self, slot: usize, rng: &mut StreamRng) -> usize {
        match &self.start {
            StartDistribution::Weights(w) => draw_index(w, rng.random()),
            StartDistribution::Cyclic => slot % self.mdp.n_states(),
        }
    }

    fn sample_start_pair(&self, slot: usize, rng: &mut StreamRng) -> (usize, usize) {
        match &self.start {
            StartDistribution::Weights(w) => {
                let s = draw_index(w, rng.random());
                (s, rng.random_range(0..self.mdp.n_actions()))
            }
            StartDistribution::Cyclic => {
                let pair = slot % (self.mdp.n_states() * self.mdp.n_actions());
                (pair / self.mdp.n_actions(), pair % self.mdp.n_actions())
            }
        }
    }

    fn step(&self, state: &usize, action: usize, rng: &mut StreamRng) -> (f64, usize) {
        tabular_step(&self.mdp, *state, action, rng)
    }

    fn state_key(&self, state: &usize) -> Option<u64> {
        Some(*state as u64)
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        Some(&self.mdp)
    }

    fn states(&self) -> Option<Vec<usize>> {
        Some((0..self.mdp.n_states()).collect())
    }
}

/// Wraps a model and counts every transition drawn through it.
#[derive(Debug)]
pub struct CountingModel<G> {
    inner: G,
    count: AtomicU64,
}

impl<G> CountingModel<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }
}

impl<G: GenerativeModel> GenerativeModel for CountingModel<G> {
    type State = G::State;

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn r_max(&self) -> f64 {
        self.inner.r_max()
    }

    fn v_max(&self) -> f64 {
        self.inner.v_max()
    }

    fn sample_start(&self, slot: usize, rng: &mut StreamRng) -> G::State {
        self.inner.sample_start(slot, rng)
    }

    fn sample_start_pair(&self, slot: usize, rng: &mut StreamRng) -> (G::State, usize) {
        self.inner.sample_start_pair(slot, rng)
    }

    fn step(&self, state: &G::State, action: usize, rng: &mut StreamRng) -> (f64, G::State) {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.step(state, action, rng)
    }

    fn is_terminal(&self, state: &G::State) -> bool {
        self.inner.is_terminal(state)
    }

    fn state_key(&self, state: &G::State) -> Option<u64> {
        self.inner.state_key(state)
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        self.inner.tabular()
    }

    fn states(&self) -> Option<Vec<G::State>> {
        self.inner.states()
    }
}
