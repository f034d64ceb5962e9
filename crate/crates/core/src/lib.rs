//! Testing equality of conditional Kendall's tau across conditioning boxes.
//!
//! The pipeline: [`sample::Sample`] holds the data with its conditioned /
//! conditioning column split; [`boxes::CondBox`] families define the
//! conditioning events; [`estimators`] fills the per-(pair, box) tau grid;
//! [`covariance`] provides the plug-in limiting covariance behind the Wald
//! test in [`testing`]; [`bootstrap`] provides the two resampling schemes;
//! [`tree`] grows data-driven box partitions; [`simulation`] wraps it all in
//! a seeded Monte Carlo harness.

pub mod boxes;
pub mod bootstrap;
pub mod chisq;
pub mod concordance;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod pair;
pub mod sample;
pub mod sampling;
pub mod simulation;
pub mod testing;
pub mod tree;

pub use boxes::{members, overlap_fraction, BoxFamily, CondBox, Constraint, Rect};
pub use bootstrap::{
    bootstrap_test, bootstrap_test_pair, resample_classical, resample_conditional,
    BootstrapConfig, Scheme, StatKind,
};
pub use chisq::{chisq_cdf, chisq_survival};
pub use covariance::{delta_hat, delta_hat_with_path, i_hat, i_hat_overlap, j_hat, CovarianceEstimate};
pub use error::{Error, Result};
pub use estimators::{d_hat, tau_matrix, tau_matrix_opts, tau_pair_box, TauEstimates, TauVariant};
pub use pair::{all_pairs, pair_count, PairIndex};
pub use sample::{load_sample, ColumnRoles, Role, Sample};
pub use sampling::{
    normal_quantile, rho_from_tau, sample_clayton_pair, sample_equicorr_gaussian, stream_rng,
    tau_from_rho,
};
pub use testing::{
    default_contrast, extended_contrast, stat_inf, stat_l2, wald_statistic, wald_statistic_opts,
    ContrastMatrix, Method, TestResult,
};
pub use tree::{cut_ckt, is_binary_search_in_tau, DependenceTree, TreeConfig, TreeNode};
pub use simulation::{run_study, MonteCarloReport, Scenario, ScenarioKind};
