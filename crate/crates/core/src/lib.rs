//! Calibrated loss-quantile scores and loss-controlled flagging for a fixed
//! deployed predictor.
//!
//! The pipeline has three stages:
//!
//! 1. split a calibration sample into `D1` (fit) and `D2` (calibrate);
//! 2. fit a predictive CDF for the realized loss `Z = L(g(X), Y)` on `D1`
//!    ([`loss_engine`]), optionally as a scarcity-modulated envelope over
//!    ensemble draws ([`scarcity`]);
//! 3. compute PIT values on `D2`, take the split-conformal order statistic
//!    `t`, and invert the predictive CDF at `t` to obtain the upper loss bound
//!    `U_alpha(x)` ([`calibration`]).
//!
//! Thresholding `U_alpha` gives acceptance regions with distribution-free
//! control of large-loss events ([`flagging`]). [`evaluation`] holds the
//! metrics, baselines and the seeded benchmark harness; [`artifact`] persists
//! a fitted pipeline.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod calibration;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod flagging;
pub mod gaussian;
pub mod knn;
pub mod loss_engine;
pub mod pipeline;
pub mod predictors;
pub mod quantile;
pub mod scarcity;

pub use error::{LocusError, Result};
pub use exec::Exec;
