//! Tests of equal predictive ability for two forecast sequences when the
//! instability may be confined to a handful of observations.
//!
//! - [`global_tests`]: Diebold-Mariano and fluctuation tests.
//! - [`local_tests`]: end-of-sample S test and the MAX procedure.
//! - [`montecarlo`]: simulation design and size/power tables.
//! - [`spf`]: nowcast evaluation pipeline for quarterly GDP data.

pub mod cli;
pub mod error;
pub mod local_tests;
pub mod lrv;
pub mod montecarlo;
pub mod rng;
pub mod series;
pub mod spf;

pub use error::{Error, Result};
pub use global_tests::{dm_test, fluctuation_test, simulate_fluctuation_cv, DmOutcome, FluctuationOutcome};
pub use local_tests::{
    max_procedure, max_procedure_split, s_test_block, s_test_single, MaxOutcome, SOutcome, WeightingScheme,
};
pub use lrv::{bartlett_lrv, LrvEstimate};
pub use montecarlo::{run_experiment_1, run_experiment_2, simulate_dgp, DgpParams, McExperimentSpec, McResultTable};
pub use series::{make_loss_differential, ForecastRecord, Loss, LossDifferentialSeries};
