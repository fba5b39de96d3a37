use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::features::SharedFeatures;
use crate::error::{invalid_arg, Error, Result};

/// Training set `{(x_i, y_i)}` for the evaluation-step regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem<S> {
    pub inputs: Vec<S>,
    pub targets: Vec<f64>,
}

impl<S> RegressionProblem<S> {
    pub fn new(inputs: Vec<S>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(invalid_arg(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// `x -> clamp(phi(x) . alpha, -v_max, v_max)`.
#[derive(Clone)]
pub struct LinearValueApproximator<S: ?Sized> {
    features: SharedFeatures<S>,
    weights: Vec<f64>,
    v_max: f64,
    rank: usize,
}

impl<S: ?Sized> LinearValueApproximator<S> {
    /// Weights `alpha` in a given space.
    pub fn new(features: SharedFeatures<S>, weights: Vec<f64>, v_max: f64) -> Result<Self> {
        if weights.len() != features.dim() {
            return Err(invalid_arg(format!(
                "{} weights for a {}-dimensional basis",
                weights.len(),
                features.dim()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid_arg("weights must be finite"));
        }
        let rank = features.dim();
        Ok(Self {
            features,
            weights,
            v_max,
            rank,
        })
    }

    /// The identically zero function.
    pub fn zero(features: SharedFeatures<S>, v_max: f64) -> Self {
        let weights = vec![0.0; features.dim()];
        Self {
            features,
            weights,
            v_max,
            rank: 0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn features(&self) -> &SharedFeatures<S> {
        &self.features
    }

    /// Numerical rank of the design matrix the weights were fitted on.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Untruncated `phi(x) . alpha`.
    pub fn raw(&self, x: &S) -> f64 {
        self.features.dot(x, &self.weights)
    }

    pub fn eval(&self, x: &S) -> f64 {
        self.raw(x).clamp(-self.v_max, self.v_max)
    }
}

impl<S: ?Sized> fmt::Debug for LinearValueApproximator<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearValueApproximator")
            .field("weights", &self.weights)
            .field("v_max", &self.v_max)
            .finish()
    }
}

impl<S: ?Sized> PartialEq for LinearValueApproximator<S> {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.v_max == other.v_max
    }
}

/// Ordinary least squares on the design matrix, minimum-norm when rank
/// deficient. Truncation to `[-v_max, v_max]` happens at evaluation time.
pub fn fit_regression<S>(
    problem: &RegressionProblem<S>,
    features: SharedFeatures<S>,
    v_max: f64,
) -> Result<LinearValueApproximator<S>> {
    if problem.is_empty() {
        return Err(invalid_arg("regression needs at least one sample"));
    }
    if problem.targets.iter().any(|y| !y.is_finite()) {
        return Err(invalid_arg("regression targets must be finite"));
    }
    if !(v_max > 0.0) {
        return Err(invalid_arg("truncation bound must be positive"));
    }
    let n = problem.len();
    let d = features.dim();
    let mut design = DMatrix::<f64>::zeros(n, d);
    let mut row = vec![0.0; d];
    for (i, x) in problem.inputs.iter().enumerate() {
        features.write(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            design[(i, j)] = *v;
        }
    }
    let y = DVector::from_column_slice(&problem.targets);
    let svd = design.svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = largest * n.max(d) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    let weights = if rank == 0 {
        vec![0.0; d]
    } else {
        svd.solve(&y, cutoff)
            .map_err(|e| Error::Internal(format!("least squares failed: {e}")))?
            .iter()
            .copied()
            .collect()
    };
    let mut fitted = LinearValueApproximator::new(features, weights, v_max)?;
    fitted.rank = rank;
    Ok(fitted)
}

/// Mean squared error of the truncated fit on a training set.
pub fn empirical_mse<S>(problem: &RegressionProblem<S>, fitted: &LinearValueApproximator<S>) -> f64 {
    if problem.is_empty() {
        return 0.0;
    }
    problem
        .inputs
        .iter()
        .zip(&problem.targets)
        .map(|(x, y)| (fitted.eval(x) - y).powi(2))
        .sum::<f64>()
        / problem.len() as f64
}
