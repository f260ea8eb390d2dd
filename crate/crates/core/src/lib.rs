//! Anonymised multiple-choice polling: the pair and list methods.
//!
//! A respondent with true choice `T` among `N` parties gives a response `R`
//! whose law is a known linear function of the population shares `p`. The
//! crate provides the designs, unbiased estimators of `p` with their exact
//! covariance, entropy and jeopardy privacy measures, the power of detecting
//! bias in a direct poll, and simulation / exact-enumeration checks of all
//! of the above.
//!
//! Party indices are 0-based in the API and 1-based in every file format.

pub mod design;
pub mod error;
pub mod estimate;
pub mod io;
pub mod linalg;
pub mod power;
pub mod privacy;
pub mod scenario;
pub mod simulate;
pub mod stats;
pub mod tables;

pub use design::{
    build_balanced_list_design, build_custom_list_design, build_pair_design, DesignBlock, DesignFile, DesignKind,
    ListDesign, PairDesign, Preferences, Protocol, SurveyDesign,
};
pub use error::{Error, Result};
pub use estimate::{
    asymptotic_covariance, confidence_intervals, design_covariance, estimate_general, pair_covariance, pair_estimate,
    CovarianceAt, EstimateResult, LinearEstimator, ResponseCounts,
};
pub use power::{optimal_allocation, power_curve, sample_size_for_sd, sd_curve, Allocation, Method, PowerResult, PowerSpec};
pub use privacy::{entropy, list_jeopardy, list_privacy, pair_jeopardy, pair_privacy, JeopardyReport, PrivacyReport};
pub use scenario::Scenario;
pub use simulate::{exact_oracle, monte_carlo_study, simulate_list, simulate_pair, Execution, SimulationConfig};
