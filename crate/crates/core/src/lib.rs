//! False variable selection in linear regression.
//!
//! Three population definitions of a false selection (marginal, full-model,
//! and projected-model), forward stepwise selection with held-out
//! incremental p-values, a data-splitting estimator of the false variable
//! rate, and a Monte Carlo harness for block-correlated designs.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod estimator;
mod linalg;
pub mod population_model;
pub mod selection;
pub mod simulation;

pub use criteria::{
    full_model_false_count, incremental_null_flags, marginal_false_count, minimal_subset,
    minimal_subsets, misordering_count, projected_false_count, Criterion, FalseSelectionReport,
    SelectedSet,
};
pub use error::{FvrError, Result};
pub use estimator::{
    bootstrap_lambda, fvr_estimate, single_split_estimate, split_rng, threshold_estimate,
    EstimatorConfig, FvrEstimateCurve,
};
pub use population_model::{
    build_augmented_covariance, induced_graph, projected_coefficients, AugmentedCovariance,
    DependenceGraph, Node, PopulationModel, ENUMERATION_CAP,
};
pub use selection::{
    forward_stepwise, incremental_pvalues, Dataset, PValueSequence, SelectionPath,
};
pub use simulation::{
    generate_block_design, rep_rng, run_experiment, run_model_experiment, sample_dataset,
    true_rate_curves, BlockDesign, CurveRow, GaussianSampler, MeanSe, MonteCarloResult,
};
