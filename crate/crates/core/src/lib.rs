//! Orientation and pose estimation from inertial sensors.
//!
//! The crate implements Gauss-Newton smoothing, filtering by optimization,
//! two extended Kalman filters and a complementary filter for orientation,
//! their pose extensions with position aiding, gyroscope bias calibration,
//! and a simulator with a Monte Carlo harness to evaluate them.
//!
//! Conventions used throughout:
//! - `q^nb` maps body-frame vectors into the navigation frame; the
//!   navigation frame has z up and gravity `(0, 0, −9.82)`.
//! - Orientation deviations `η` live in the navigation frame:
//!   `q^nb = exp_q(η/2) ⊙ q̃^nb`.
//! - Time indices are zero-based.

// `!(x > 0.0)` is used on purpose so NaN fails validation, and the
// estimators index several aligned series by time.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allan;
pub mod calibration;
pub mod config;
pub mod error;
pub mod estimators;
pub mod io;
pub mod metrics;
pub mod orientation;
pub mod sensor_models;
pub mod simulator;
pub mod studies;

pub use error::{Error, Result};
pub use estimators::{EstimateTrace, GaussNewtonSettings};
pub use orientation::{EulerAngles, Quaternion, RotationMatrix, RotationVector, UnitQuaternion};
pub use sensor_models::{Environment, NoiseModel, Residual, StateBlock};
pub use simulator::{GroundTruth, MeasurementSeries, ScenarioConfig, ScenarioKind};
