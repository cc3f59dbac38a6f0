//! Anomaly detection as a service.
//!
//! Operators declare which KPIs to analyze with which detector; the control
//! server reconciles that request against what is running, the bridge runs one
//! lightweight worker per detector, and the failure-prediction pipeline turns
//! the resulting anomaly streams into early failure warnings.

pub mod bridge;
pub mod control;
pub mod data_io;
pub mod detector;
pub mod experiment;
pub mod offline;
pub mod prediction;
pub mod registry;
pub mod sim;

pub use detector::{AnalysisParams, Detector, Sample, Verdict};
