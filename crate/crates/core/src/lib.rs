//! Randomization inference for matched pairs with right-censored outcomes.
//!
//! - [`survival`]: paired samples, Kaplan–Meier, pseudo-observation, log-rank
//!   and Prentice–Wilcoxon scores.
//! - [`rand_test`]: time-specific tests, worst-case p-values for `Gamma >= 1`,
//!   sensitivity values.
//! - [`max_test`]: the overall max test and its correlation structure, with the
//!   multivariate normal integrator in [`mvn`].
//! - [`closed_testing`]: family-wise error control across analysis times.
//! - [`design_sensitivity`] and [`sim_engine`]: simulation studies.

pub mod closed_testing;
pub mod design_sensitivity;
pub mod error;
pub mod mvn;
pub mod normal;
pub mod sim_engine;
pub mod survival;

pub use error::{Error, Result};
pub use max_test::{overall_test, OverallMethod, OverallResult, TimeGrid};
pub use rand_test::{time_specific_test, Direction, Gamma, Method, TestResult};
pub use survival::{build_sample, PairedSample, Record, ScoreKind, Unit};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
