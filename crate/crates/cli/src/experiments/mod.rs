//! The three experiment pipelines. Each seed job returns its artifacts in
//! memory; the runner writes them after sorting by seed.

pub mod beam;
pub mod csi;
pub mod tilt;

use thiserror::Error;

/// A named output file and its full contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            contents: contents.into(),
        }
    }
}

/// Failure inside a pipeline after the configuration was accepted.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("seed {seed}: {source}")]
    Tilt {
        seed: u64,
        source: ranlab::tilt::TiltError,
    },
    #[error("seed {seed}: {source}")]
    Beam {
        seed: u64,
        source: ranlab::beam::BeamError,
    },
    #[error("seed {seed}: {source}")]
    Csi {
        seed: u64,
        source: ranlab::csi::CsiError,
    },
    #[error("seed {seed}: {source}")]
    Network {
        seed: u64,
        source: ranlab::network::NetworkError,
    },
}

/// Artifacts of one seed plus the numbers the aggregate needs.
#[derive(Debug, Clone)]
pub struct SeedOutput<T> {
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
    pub summary: T,
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
