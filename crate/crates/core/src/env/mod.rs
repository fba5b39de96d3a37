//! Benchmark problems.

mod garnet;
mod mountain_car;
mod prop1;

pub use garnet::{make_garnet, GarnetSpec};
pub use mountain_car::{
    evaluate_steps_to_go, mountain_car_step, EvalStart, MountainCar, MountainCarState, MAX_EPISODE_STEPS, THRUSTS,
};
pub use prop1::{make_prop1_mdp, CHANGE, STAY};
