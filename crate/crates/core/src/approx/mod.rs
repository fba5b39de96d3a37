//! Linear value spaces, truncated least squares and policy spaces with their
//! cost-sensitive classifiers.

mod classifier;
mod features;
mod regression;

pub use classifier::{
    empirical_greedy_loss, fit_classifier, fit_classifier_from, true_greedy_loss, ExhaustivePolicySpace,
    LinearScorePolicy, LinearScoreSpace, Policy, PolicySpace,
};
pub use features::{FeatureMap, OneHot, RbfGrid, SharedFeatures, StackedActions, TableFeatures};
pub use regression::{empirical_mse, fit_regression, LinearValueApproximator, RegressionProblem};
