//! Complete-graph spanning-ratio (GSR) change-point detection.
//!
//! A window of `2n` observations is split into a left and a right half. The
//! sums of squared pairwise distances inside each half and across the whole
//! window give three ratio statistics:
//!
//! * `R_mu = W_full / (W_left + W_right)`, sensitive to a change of mean;
//! * `R_sigma+ = W_right / W_left` and `R_sigma- = W_left / W_right`,
//!   sensitive to a change of variance.
//!
//! Under i.i.d. Gaussian data these ratios are Fisher distributed with
//! parameters that depend only on `n` and the dimension `d`, so detection
//! thresholds can be computed ahead of time, either analytically or by Monte
//! Carlo over a scanning zone ([`calibration`]). The [`detector`] runs several
//! window lengths side by side over a stream with a Bonferroni split of the
//! total significance level.

pub mod calibration;
pub mod detector;
pub mod distributions;
pub mod error;
pub mod graph;
pub mod gsr;
pub mod io;
pub mod power;
pub mod sim;

pub use calibration::{
    analytic_threshold_mu, analytic_threshold_sigma, calibrate_monte_carlo, CalibrationConfig, Provenance,
    StatisticKind, ThresholdEntry, ThresholdTable,
};
pub use detector::{
    allocate_alphas, AlphaAllocation, DetectionEvent, Detector, DetectorConfig, PooledStatistics, PostDetectionPolicy,
    ThresholdSource,
};
pub use error::{GsrError, Result};
pub use graph::{spanning_distance, Observation, ObservationWindow, SpanningDecomposition};
pub use gsr::{compute_gsr, effective_dof, null_law_mu, null_law_sigma, GsrTriple};
pub use power::{delta_mu, delta_sigma, empirical_power, minimum_radius, PowerQuery};
pub use sim::{classify_outcome, run_online_power, run_static_power, Outcome, PowerReport};
