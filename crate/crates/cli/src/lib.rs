//! Experiment harness for the `ranlab` laboratory: configuration, the tilt,
//! beam and CSI pipelines, CSV/SVG reporting and the run manifest.

pub mod app;
pub mod config;
pub mod experiments;
pub mod report;
