//! `run` and `validate`: seed dispatch, artifact writing and the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{load_file, parse_override, ConfigError, Experiment, ExperimentConfig, LoadedConfig};
use crate::experiments::{beam, csi, tilt, Artifact, ExperimentError, SeedOutput};

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "RANLAB_OUTPUT_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error{}", config_message(.0))]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn config_message(e: &ConfigError) -> String {
    if e.path.is_empty() {
        format!(": {}", e.message)
    } else {
        format!(" at {}: {}", e.path, e.message)
    }
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Number of worker threads; must be at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jobs(usize);

impl Jobs {
    pub fn new(n: usize) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(ConfigError::new("--jobs", "must be at least 1"));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFiles {
    pub seed: u64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub ranlab: String,
    pub ranlab_core: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub versions: Versions,
    pub seeds: Vec<SeedFiles>,
    pub aggregate_files: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Loads a config file with `key=value` overrides and the output directory
/// environment override.
pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let parsed = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    let mut loaded = load_file(path, &parsed)?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            loaded.config.output_dir = PathBuf::from(dir);
        }
    }
    Ok(loaded)
}

fn dispatch<T, F>(seeds: &[u64], jobs: Jobs, job: F) -> Result<Vec<SeedOutput<T>>, RunError>
where
    T: Send,
    F: Fn(u64) -> Result<SeedOutput<T>, ExperimentError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.get())
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let mut outs = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let t0 = Instant::now();
                let out = job(seed);
                if out.is_ok() {
                    eprintln!("seed {seed} done in {:.1} s", t0.elapsed().as_secs_f64());
                }
                out
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    outs.sort_by_key(|o| o.seed);
    Ok(outs)
}

type SeedArtifacts = Vec<(u64, Vec<Artifact>)>;

fn split<T>(outs: Vec<SeedOutput<T>>) -> (SeedArtifacts, Vec<SeedOutput<T>>) {
    let files = outs.iter().map(|o| (o.seed, o.artifacts.clone())).collect();
    (files, outs)
}

fn write(dir: &Path, a: &Artifact) -> Result<(), RunError> {
    let path = dir.join(&a.name);
    std::fs::write(&path, &a.contents).map_err(|source| RunError::Io { path, source })
}

/// Runs every seed of the configured experiment and writes the artifacts
/// and manifest into the output directory.
pub fn run(config: &ExperimentConfig, jobs: Jobs) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    let seeds = config.seeds.clone();
    let (per_seed, aggregate) = match config.experiment {
        Experiment::Tilt => {
            let (files, outs) = split(dispatch(&seeds, jobs, |s| tilt::run_seed(&config.tilt, s))?);
            (files, tilt::aggregate(&outs))
        }
        Experiment::Beam => {
            let (files, outs) = split(dispatch(&seeds, jobs, |s| beam::run_seed(&config.beam, s))?);
            (files, beam::aggregate(&outs))
        }
        Experiment::Csi => {
            let (files, outs) = split(dispatch(&seeds, jobs, |s| csi::run_seed(&config.csi, s))?);
            (files, csi::aggregate(&outs))
        }
    };

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut seed_files = Vec::new();
    for (seed, artifacts) in &per_seed {
        for a in artifacts {
            write(dir, a)?;
        }
        seed_files.push(SeedFiles {
            seed: *seed,
            files: artifacts.iter().map(|a| a.name.clone()).collect(),
        });
    }
    for a in &aggregate {
        write(dir, a)?;
    }
    let manifest = RunManifest {
        config: config.clone(),
        config_hash: config.config_hash(),
        versions: Versions {
            ranlab: env!("CARGO_PKG_VERSION").to_string(),
            ranlab_core: ranlab::VERSION.to_string(),
        },
        seeds: seed_files,
        aggregate_files: aggregate.iter().map(|a| a.name.clone()).collect(),
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(dir, &Artifact::new(MANIFEST_FILE, text + "\n"))?;
    Ok(manifest)
}

/// Human-readable validation report: `OK`, the hash and the defaulted
/// fields that affect the selected experiment.
pub fn validation_report(loaded: &LoadedConfig) -> String {
    let sections = ["tilt.", "beam.", "csi."];
    let active = format!("{}.", loaded.config.experiment.name());
    let relevant: Vec<&(String, serde_json::Value)> = loaded
        .defaulted
        .iter()
        .filter(|(k, _)| k.starts_with(&active) || !sections.iter().any(|s| k.starts_with(s)))
        .collect();
    let mut out = format!(
        "OK: {} experiment, {} seed(s), config hash {}\n",
        loaded.config.experiment.name(),
        loaded.config.seeds.len(),
        loaded.config.config_hash()
    );
    if relevant.is_empty() {
        out.push_str("no defaulted fields\n");
    } else {
        out.push_str("defaulted fields:\n");
        for (k, v) in relevant {
            out.push_str(&format!("  {k} = {v}\n"));
        }
    }
    out
}
