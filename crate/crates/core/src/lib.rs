//! Likelihood-free parameter estimation by random Fourier feature matching.
//!
//! Observed data are summarized by `k` random Fourier features; the parameter
//! estimate minimizes a discrepancy between those features and their
//! simulated expectations. Around that core sit uncertainty quantification,
//! simulation-based tests, and an experiment harness.

pub mod anneal;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod features;
pub mod harness;
pub mod inference;
pub mod models;
pub mod rngstreams;
pub mod special;

pub use anneal::{minimize, AnnealResult, AnnealSettings};
pub use baselines::{gaussian_mle, t_location_mle, BaselineMethod, BaselineResult};
pub use error::{Error, Result};
pub use features::{draw_bank, Arity, FeatureBank, FeatureVector};
pub use harness::{parse_plan, run_experiment, ExperimentPlan, RunManifest, TrialRecord};
pub use inference::{
    bootstrap_se, embedding_diagnostic, goodness_of_fit, sandwich_covariance, test_point_null, BootstrapReport,
    EmbeddingDiagnostic, SandwichReport, TestReport,
};
pub use models::{model_by_id, simulate_trajectory, Model, ModelOptions, ParamSpace, Trajectory};
pub use rngstreams::{derive_stream, draw_uniform_block, SeedSpec, Stream, UniformBlock};
pub use estimator::{
    estimate, estimate_two_step, simulate_features, EstimateReport, ObjectiveConfig, ObjectiveVariant,
    CrnSimulator, FeatureObjective, SimulatedFeatures, SimulationBlock, WeightMatrix,
};
