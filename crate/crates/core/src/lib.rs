//! Impairment diagnostics for QKD links.
//!
//! The crate turns QBER and secure-key-rate telemetry into a class label
//! describing what is currently disturbing the quantum channel. The flow is:
//!
//! 1. [`telemetry`] reads logs and fixes a MinMax scale from a reference window.
//! 2. [`features`] turns each N-point window into a fixed catalog of features.
//! 3. [`select`] fits a boosted tree ensemble and ranks features by total gain.
//! 4. [`classify`] trains a deep feed-forward network on the top-K features.
//! 5. [`pipeline`] wires the stages together and serves streaming predictions.
//! 6. [`report`] scores predictions and renders misclassification chord diagrams.
//!
//! [`linksim`] generates labeled telemetry for the nine impairment classes.

pub mod classify;
pub mod error;
pub mod features;
pub mod linksim;
pub mod pipeline;
pub mod report;
pub mod select;
pub mod telemetry;
mod util;

pub use util::config_hash;

pub use error::{Error, Result};

/// Number of impairment classes the presets and default models cover.
pub const CLASS_COUNT: usize = 9;

/// Default window length.
pub const DEFAULT_WINDOW: usize = 10;
