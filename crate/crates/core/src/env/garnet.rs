use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid_arg, Result};
use crate::mdp::TabularMdp;
use crate::rng::stream;

/// Parameters of a random "Garnet" MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct GarnetSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Number of reachable next states per `(s, a)`.
    pub branching: usize,
    /// Probability that a reward entry is zero.
    pub reward_sparsity: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl GarnetSpec {
    pub fn new(n_states: usize, n_actions: usize, branching: usize, gamma: f64, seed: u64) -> Self {
        Self {
            n_states,
            n_actions,
            branching,
            reward_sparsity: 0.0,
            gamma,
            seed,
        }
    }
}

/// Draws a reproducible random MDP. Each `(s, a)` reaches `branching` distinct
/// next states chosen uniformly, with probabilities drawn from a flat Dirichlet.
/// Non-zero rewards are uniform on `[0, 1)`.
pub fn make_garnet(spec: &GarnetSpec) -> Result<TabularMdp> {
    let GarnetSpec {
        n_states,
        n_actions,
        branching,
        reward_sparsity,
        gamma,
        seed,
    } = *spec;
    if n_states == 0 || n_actions == 0 {
        return Err(invalid_arg("garnet needs at least one state and one action"));
    }
    if branching == 0 || branching > n_states {
        return Err(invalid_arg(format!(
            "branching factor {branching} must lie in [1, {n_states}]"
        )));
    }
    if !(0.0..1.0).contains(&reward_sparsity) {
        return Err(invalid_arg(format!("reward sparsity {reward_sparsity} outside [0, 1)")));
    }
    let mut rng = stream(&[seed, 0x6761_726e_6574]);
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            let targets = sample(&mut rng, n_states, branching);
            let weights: Vec<f64> = (0..branching).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            let row = &mut transition[(s * n_actions + a) * n_states..][..n_states];
            for (t, w) in targets.iter().zip(&weights) {
                row[t] = w / total;
            }
            let keep: f64 = rng.random();
            let r: f64 = rng.random();
            if keep >= reward_sparsity {
                reward[s * n_actions + a] = r;
            }
        }
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_mdp() {
        let spec = GarnetSpec::new(7, 3, 3, 0.9, 42);
        assert_eq!(make_garnet(&spec).unwrap(), make_garnet(&spec).unwrap());
        let other = GarnetSpec { seed: 43, ..spec };
        assert_ne!(make_garnet(&spec).unwrap(), make_garnet(&other).unwrap());
    }

    #[test]
    fn rows_sum_to_one() {
        for seed in 0..20 {
            let mdp = make_garnet(&GarnetSpec::new(12, 4, 5, 0.95, seed)).unwrap();
            for s in 0..12 {
                for a in 0..4 {
                    let row = mdp.row(s, a);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    assert_eq!(row.iter().filter(|p| **p > 0.0).count(), 5);
                }
            }
        }
    }

    #[test]
    fn unit_branching_is_deterministic() {
        let mdp = make_garnet(&GarnetSpec::new(9, 2, 1, 0.9, 5)).unwrap();
        assert!(mdp.is_deterministic());
    }

    #[test]
    fn sparsity_zeroes_rewards() {
        let spec = GarnetSpec {
            reward_sparsity: 0.9,
            ..GarnetSpec::new(30, 3, 2, 0.9, 1)
        };
        let mdp = make_garnet(&spec).unwrap();
        let zeros = (0..30)
            .flat_map(|s| (0..3).map(move |a| (s, a)))
            .filter(|&(s, a)| mdp.reward(s, a) == 0.0)
            .count();
        assert!(zeros > 60, "{zeros} zero rewards");
    }

    #[test]
    fn rejects_oversized_branching() {
        assert!(make_garnet(&GarnetSpec::new(3, 2, 4, 0.9, 0)).is_err());
        assert!(make_garnet(&GarnetSpec::new(3, 2, 0, 0.9, 0)).is_err());
    }
}
