//! Noisy mountain car.
//!
//! Standard discrete-time dynamics with a uniform perturbation of the applied
//! thrust. Each step costs one unit of reward until the car reaches the right
//! hill top, after which the state is absorbing and free.

use rand::Rng;

use crate::ampi::GenerativeModel;
use crate::rng::StreamRng;

pub const POSITION_MIN: f64 = -1.2;
pub const POSITION_MAX: f64 = 0.6;
pub const VELOCITY_MAX: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
/// Episodes are cut at this many steps; steps-to-go is reported in `[1, 300]`.
pub const MAX_EPISODE_STEPS: usize = 300;
/// Thrust applied by each action index.
pub const THRUSTS: [f64; 3] = [-1.0, 0.0, 1.0];

const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self {
            position: position.clamp(POSITION_MIN, POSITION_MAX),
            velocity: velocity.clamp(-VELOCITY_MAX, VELOCITY_MAX),
        }
    }

    /// The usual evaluation start: at rest near the valley floor.
    pub fn rest() -> Self {
        Self::new(-0.5, 0.0)
    }

    pub fn is_goal(&self) -> bool {
        self.position >= GOAL_POSITION
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.position, self.velocity]
    }
}

/// One step with the thrust perturbed by `eta`. Returns `(reward, next, done)`.
pub fn mountain_car_step(state: &MountainCarState, action: usize, eta: f64) -> (f64, MountainCarState, bool) {
    if state.is_goal() {
        return (0.0, *state, true);
    }
    let thrust = THRUSTS[action];
    let velocity = (state.velocity + FORCE * (thrust + eta) - GRAVITY * (3.0 * state.position).cos())
        .clamp(-VELOCITY_MAX, VELOCITY_MAX);
    let position = (state.position + velocity).clamp(POSITION_MIN, POSITION_MAX);
    // inelastic left wall
    let velocity = if position <= POSITION_MIN && velocity < 0.0 {
        0.0
    } else {
        velocity
    };
    let next = MountainCarState { position, velocity };
    (-1.0, next, next.is_goal())
}

/// Mountain car as a generative model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCar {
    /// Amplitude of the uniform thrust perturbation.
    pub noise: f64,
    pub gamma: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            noise: 1.0,
            gamma: 0.99,
        }
    }
}

impl MountainCar {
    pub fn step(&self, state: &MountainCarState, action: usize, rng: &mut StreamRng) -> (f64, MountainCarState, bool) {
        let eta = if self.noise > 0.0 {
            self.noise * rng.random_range(-1.0..=1.0)
        } else {
            0.0
        };
        mountain_car_step(state, action, eta)
    }

    /// Steps needed to reach the goal from `start`, capped at [`MAX_EPISODE_STEPS`].
    pub fn episode_length(
        &self,
        start: MountainCarState,
        policy: impl Fn(&MountainCarState) -> usize,
        rng: &mut StreamRng,
    ) -> usize {
        let mut state = start;
        for t in 1..=MAX_EPISODE_STEPS {
            let (_, next, done) = self.step(&state, policy(&state), rng);
            if done {
                return t;
            }
            state = next;
        }
        MAX_EPISODE_STEPS
    }
}

/// Where evaluation episodes begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalStart {
    /// Uniform over the position-velocity box, like the sampling distribution.
    #[default]
    Uniform,
    /// [`MountainCarState::rest`].
    Rest,
}

impl std::str::FromStr for EvalStart {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.trim() {
            "uniform" => Ok(EvalStart::Uniform),
            "rest" => Ok(EvalStart::Rest),
            other => Err(crate::error::invalid_arg(format!(
                "unknown evaluation start `{other}` (expected uniform or rest)"
            ))),
        }
    }
}

/// Mean steps-to-go of `policy` over `episodes` runs.
pub fn evaluate_steps_to_go(
    model: &MountainCar,
    policy: impl Fn(&MountainCarState) -> usize,
    start: EvalStart,
    episodes: usize,
    seed: u64,
) -> f64 {
    let total: usize = (0..episodes)
        .map(|e| {
            let mut rng = crate::rng::stream(&[seed, 0x6576_616c, e as u64]);
            let s0 = match start {
                EvalStart::Uniform => model.sample_start(0, &mut rng),
                EvalStart::Rest => MountainCarState::rest(),
            };
            model.episode_length(s0, &policy, &mut rng)
        })
        .sum();
    total as f64 / episodes.max(1) as f64
}

impl GenerativeModel for MountainCar {
    type State = MountainCarState;

    fn n_actions(&self) -> usize {
        THRUSTS.len()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn r_max(&self) -> f64 {
        1.0
    }

    fn sample_start(&self, _slot: usize, rng: &mut StreamRng) -> MountainCarState {
        let position = rng.random_range(POSITION_MIN..POSITION_MAX);
        let velocity = rng.random_range(-VELOCITY_MAX..=VELOCITY_MAX);
        MountainCarState { position, velocity }
    }

    fn step(&self, state: &MountainCarState, action: usize, rng: &mut StreamRng) -> (f64, MountainCarState) {
        let (r, next, _) = MountainCar::step(self, state, action, rng);
        (r, next)
    }

    fn is_terminal(&self, state: &MountainCarState) -> bool {
        state.is_goal()
    }

    fn state_key(&self, state: &MountainCarState) -> Option<u64> {
        Some(crate::rng::mix(&[state.position.to_bits(), state.velocity.to_bits()]))
    }
}
