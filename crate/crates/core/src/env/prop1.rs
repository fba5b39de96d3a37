use crate::error::{invalid_arg, Result};
use crate::mdp::TabularMdp;

/// Action index that swaps states.
pub const CHANGE: usize = 0;
/// Action index that keeps the current state.
pub const STAY: usize = 1;

/// The deterministic two-state switching MDP: state 0 pays 0, state 1 pays 1,
/// `CHANGE` moves to the other state and `STAY` remains.
pub fn make_prop1_mdp(gamma: f64) -> Result<TabularMdp> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid_arg(format!("discount {gamma} outside (0, 1)")));
    }
    let mut transition = vec![0.0; 2 * 2 * 2];
    for s in 0..2 {
        transition[(s * 2 + CHANGE) * 2 + (1 - s)] = 1.0;
        transition[(s * 2 + STAY) * 2 + s] = 1.0;
    }
    let reward = vec![0.0, 0.0, 1.0, 1.0];
    TabularMdp::new(2, 2, transition, reward, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{greedy_policy, optimal_value, ValueFunction};

    #[test]
    fn optimal_value_is_geometric_series() {
        let mdp = make_prop1_mdp(0.9).unwrap();
        let (pi, v) = optimal_value(&mdp).unwrap();
        // v*(s2) = 1/(1-g) = 10, v*(s1) = g/(1-g) = 9
        assert!((v[0] - 9.0).abs() < 1e-10);
        assert!((v[1] - 10.0).abs() < 1e-10);
        assert_eq!(pi.as_slice(), &[CHANGE, STAY]);
    }

    #[test]
    fn rows_are_distributions() {
        let mdp = make_prop1_mdp(0.5).unwrap();
        assert!(mdp.is_deterministic());
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(mdp.row(s, a).iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn greedy_on_tilted_values() {
        let mdp = make_prop1_mdp(0.9).unwrap();
        let pi = greedy_policy(&mdp, &ValueFunction::states(vec![0.01, 0.0])).unwrap();
        assert_eq!(pi.as_slice(), &[STAY, CHANGE]);
    }
}
