//! Uncertainty quantification and testing after the point estimate.

mod bootstrap;
mod embedding;
mod sandwich;
mod testing;

pub use bootstrap::{bootstrap_se, bootstrap_with_seeds, percentile, BootstrapReport};
pub use embedding::{embedding_diagnostic, grid_points, EmbeddingDiagnostic, EmbeddingSettings, Verdict};
pub use sandwich::{
    default_fd_steps, fd_jacobian, sandwich_covariance, sandwich_from_parts, SandwichReport, SandwichSettings,
};
pub use testing::{goodness_of_fit, rank_p_value, test_point_null, ChiSquareApprox, TestReport};
