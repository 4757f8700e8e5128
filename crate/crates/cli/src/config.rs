//! Experiment configuration: JSON with defaults, dotted-path overrides and
//! bounds checks that name the offending key.

use std::path::{Path, PathBuf};

use ranlab::network::{NetworkError, PropagationParams};
use ranlab::neural::Activation;
use ranlab::tilt::{FeatureCount, RewardWeights, RuleThresholds};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A configuration problem located by dotted path (`beam.alpha`,
/// `csi.latent_dims[1]`). The path is empty for whole-file problems.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", if path.is_empty() { String::new() } else { format!("{path}: ") })]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Tilt,
    Beam,
    Csi,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Tilt => "tilt",
            Experiment::Beam => "beam",
            Experiment::Csi => "csi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TiltTrain {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub weight_cap: f64,
}

impl Default for TiltTrain {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            hidden: vec![64, 64],
            weight_cap: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TiltSection {
    pub n_rings: u32,
    pub isd: f64,
    pub n_users: usize,
    pub log_days: usize,
    pub epsilon: f64,
    pub eval_days: usize,
    pub eval_seeds: usize,
    pub tilt_step: f64,
    pub tilt_min: f64,
    pub tilt_max: f64,
    pub feature_counts: Vec<usize>,
    pub reward: RewardWeights,
    pub rule: RuleThresholds,
    pub propagation: PropagationParams,
    pub train: TiltTrain,
}

impl Default for TiltSection {
    fn default() -> Self {
        Self {
            n_rings: 1,
            isd: 1000.0,
            n_users: 2000,
            log_days: 200,
            epsilon: 0.3,
            eval_days: 20,
            eval_seeds: 4,
            tilt_step: 1.0,
            tilt_min: 0.0,
            tilt_max: 16.0,
            feature_counts: vec![5, 20, 35],
            reward: RewardWeights::default(),
            rule: RuleThresholds::default(),
            propagation: PropagationParams::default(),
            train: TiltTrain::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtdeSection {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub trace_every: usize,
    pub randomize_phase: bool,
    pub eval_phases: usize,
}

impl Default for CtdeSection {
    fn default() -> Self {
        let d = ranlab::beam::CtdeConfig::default();
        Self {
            actor_hidden: d.actor_hidden,
            critic_hidden: d.critic_hidden,
            hidden_activation: d.hidden_activation,
            sigma_start: d.sigma_start,
            sigma_end: d.sigma_end,
            steps: d.steps,
            batch_size: d.batch_size,
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            trace_every: d.trace_every,
            randomize_phase: d.randomize_phase,
            eval_phases: d.eval_phases,
        }
    }
}

impl CtdeSection {
    pub fn to_config(&self, alpha: f64, pae: bool, seed: u64) -> ranlab::beam::CtdeConfig {
        ranlab::beam::CtdeConfig {
            alpha,
            actor_hidden: self.actor_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
            hidden_activation: self.hidden_activation,
            sigma_start: self.sigma_start,
            sigma_end: self.sigma_end,
            steps: self.steps,
            batch_size: self.batch_size,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            seed,
            trace_every: self.trace_every,
            pae,
            randomize_phase: self.randomize_phase,
            eval_phases: self.eval_phases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamSection {
    pub m: usize,
    pub snr_db: f64,
    /// Weight of the PAE comparison run.
    pub alpha: f64,
    pub sweep_alphas: Vec<f64>,
    pub grid_n: usize,
    /// Also train without PAE at `alpha`.
    pub compare_without_pae: bool,
    /// Random beam pairs for the brute-force boundary check; 0 skips it.
    pub brute_force_pairs: usize,
    pub ctde: CtdeSection,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self {
            m: 2,
            snr_db: 10.0,
            alpha: 0.5,
            sweep_alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            grid_n: 201,
            compare_without_pae: true,
            brute_force_pairs: 0,
            ctde: CtdeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsiSection {
    pub n_tx: usize,
    pub n_paths: usize,
    pub n_samples: usize,
    pub epochs: usize,
    pub latent_dims: Vec<usize>,
    pub bits: Vec<u32>,
    pub hidden: Vec<usize>,
    pub latent_activation: Activation,
    pub latent_range: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Held-out samples whose codes are written to the feedback file.
    pub feedback_records: usize,
}

impl Default for CsiSection {
    fn default() -> Self {
        Self {
            n_tx: 32,
            n_paths: 3,
            n_samples: 10_000,
            epochs: 20,
            latent_dims: vec![4, 8, 16],
            bits: vec![4],
            hidden: vec![128],
            latent_activation: Activation::Tanh,
            latent_range: 1.0,
            batch_size: 64,
            lr: 1e-3,
            feedback_records: 100,
        }
    }
}

impl CsiSection {
    pub fn ae_config(&self, latent_dim: usize, bits: u32) -> ranlab::csi::AeConfig {
        ranlab::csi::AeConfig {
            n_tx: self.n_tx,
            latent_dim,
            bits,
            hidden: self.hidden.clone(),
            hidden_activation: Activation::Relu,
            latent_activation: self.latent_activation,
            latent_range: self.latent_range,
            batch_size: self.batch_size,
            lr: self.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub tilt: TiltSection,
    pub beam: BeamSection,
    pub csi: CsiSection,
}

/// Default output directory, relative to the working directory.
pub const DEFAULT_OUTPUT_DIR: &str = "ranlab-out";

fn defaults_tree() -> Value {
    let cfg = ExperimentConfig {
        experiment: Experiment::Tilt,
        seeds: vec![1, 2, 3, 4, 5],
        output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
        tilt: TiltSection::default(),
        beam: BeamSection::default(),
        csi: CsiSection::default(),
    };
    let mut v = serde_json::to_value(cfg).expect("defaults serialize");
    v.as_object_mut().expect("object").remove("experiment");
    v
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn check_known(user: &Map<String, Value>, defaults: &Map<String, Value>, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in user {
        if prefix.is_empty() && k == "experiment" {
            continue;
        }
        let path = join(prefix, k);
        match defaults.get(k) {
            None => return Err(ConfigError::new(path, "unknown key")),
            Some(Value::Object(d)) => match v {
                Value::Object(u) => check_known(u, d, &path)?,
                _ => return Err(ConfigError::new(path, "expected an object")),
            },
            Some(_) => {}
        }
    }
    Ok(())
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn defaulted_leaves(defaults: &Value, user: Option<&Value>, prefix: &str, out: &mut Vec<(String, Value)>) {
    match defaults {
        Value::Object(d) => {
            for (k, v) in d {
                let u = user.and_then(|u| u.get(k));
                defaulted_leaves(v, u, &join(prefix, k), out);
            }
        }
        leaf => {
            if user.is_none() {
                out.push((prefix.to_string(), leaf.clone()));
            }
        }
    }
}

/// Parses `key=value`; the value is JSON when it parses as JSON and a plain
/// string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::new("", format!("override `{s}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::new("", format!("override `{s}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn apply_override(user: &mut Value, defaults: &Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if key != "experiment" {
        let mut node = defaults;
        for (i, p) in parts.iter().enumerate() {
            let here = parts[..=i].join(".");
            node = match node.get(*p) {
                Some(n) => n,
                None => return Err(ConfigError::new(key, "unknown key")),
            };
            if i + 1 < parts.len() && !node.is_object() {
                return Err(ConfigError::new(here, "is not an object"));
            }
        }
    }
    let mut slot = user;
    for p in &parts[..parts.len() - 1] {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(key, "parent is not an object"))?;
        slot = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    slot.as_object_mut()
        .ok_or_else(|| ConfigError::new(key, "parent is not an object"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A parsed, validated configuration and the fields that took defaults.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub defaulted: Vec<(String, Value)>,
}

/// Parses JSON text, applies `overrides`, fills defaults and validates.
pub fn load_str(text: &str, overrides: &[(String, Value)]) -> Result<LoadedConfig, ConfigError> {
    let mut user: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
    if !user.is_object() {
        return Err(ConfigError::new("", "config must be a JSON object"));
    }
    let defaults = defaults_tree();
    for (k, v) in overrides {
        apply_override(&mut user, &defaults, k, v.clone())?;
    }
    check_known(user.as_object().expect("object"), defaults.as_object().expect("object"), "")?;
    if user.get("experiment").is_none() {
        return Err(ConfigError::new("experiment", "missing experiment tag (tilt, beam or csi)"));
    }
    let mut defaulted = Vec::new();
    defaulted_leaves(&defaults, Some(&user), "", &mut defaulted);
    let mut merged = defaults;
    merge(&mut merged, &user);
    let config: ExperimentConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(LoadedConfig { config, defaulted })
}

pub fn load_file(path: &Path, overrides: &[(String, Value)]) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    load_str(&text, overrides)
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be a positive number, got {v}")))
    }
}

fn in_range(path: &str, v: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must lie in [{lo}, {hi}], got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be at least {min}, got {v}")))
    }
}

fn widths(path: &str, v: &[usize]) -> Result<(), ConfigError> {
    match v.iter().position(|&w| w == 0) {
        Some(i) => Err(ConfigError::new(format!("{path}[{i}]"), "layer width must be positive")),
        None => Ok(()),
    }
}

fn nonempty<T>(path: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        Err(ConfigError::new(path, "must not be empty"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    /// Bounds checks for every section, so `validate` catches problems in
    /// sections the selected experiment does not use.
    pub fn validate(&self) -> Result<(), ConfigError> {
        nonempty("seeds", &self.seeds)?;
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::new("seeds", "seeds must be distinct"));
        }
        self.validate_tilt()?;
        self.validate_beam()?;
        self.validate_csi()
    }

    fn validate_tilt(&self) -> Result<(), ConfigError> {
        let t = &self.tilt;
        positive("tilt.isd", t.isd)?;
        at_least("tilt.n_users", t.n_users, 1)?;
        at_least("tilt.log_days", t.log_days, 2)?;
        at_least("tilt.eval_days", t.eval_days, 2)?;
        at_least("tilt.eval_seeds", t.eval_seeds, 1)?;
        if !(t.epsilon > 0.0 && t.epsilon <= 1.0) {
            return Err(ConfigError::new("tilt.epsilon", format!("must lie in (0, 1], got {}", t.epsilon)));
        }
        positive("tilt.tilt_step", t.tilt_step)?;
        if !(t.tilt_min.is_finite() && t.tilt_max.is_finite() && t.tilt_min < t.tilt_max) {
            return Err(ConfigError::new("tilt.tilt_max", "must exceed tilt.tilt_min"));
        }
        nonempty("tilt.feature_counts", &t.feature_counts)?;
        let cells = 3 * (1 + 3 * t.n_rings as usize * (t.n_rings as usize + 1));
        for (i, &fc) in t.feature_counts.iter().enumerate() {
            let path = format!("tilt.feature_counts[{i}]");
            let fc = FeatureCount::new(fc).map_err(|e| ConfigError::new(&path, e.to_string()))?;
            if fc.neighbors() >= cells {
                return Err(ConfigError::new(
                    path,
                    format!("needs {} neighbors but the layout has {cells} cells", fc.neighbors()),
                ));
            }
        }
        in_range("tilt.reward.beta", t.reward.beta, 0.0, 1.0)?;
        in_range("tilt.reward.mu", t.reward.mu, 0.0, 1.0)?;
        positive("tilt.reward.cap_norm", t.reward.cap_norm)?;
        if !(t.rule.cov_low < t.rule.cov_high) {
            return Err(ConfigError::new("tilt.rule.cov_high", "must exceed tilt.rule.cov_low"));
        }
        t.propagation.validate().map_err(|e| match e {
            NetworkError::InvalidParam { name, value } => {
                ConfigError::new(format!("tilt.propagation.{name}"), format!("invalid value {value}"))
            }
            other => ConfigError::new("tilt.propagation", other.to_string()),
        })?;
        at_least("tilt.train.epochs", t.train.epochs, 1)?;
        at_least("tilt.train.batch_size", t.train.batch_size, 1)?;
        positive("tilt.train.lr", t.train.lr)?;
        widths("tilt.train.hidden", &t.train.hidden)?;
        if !(t.train.weight_cap >= 1.0) {
            return Err(ConfigError::new("tilt.train.weight_cap", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_beam(&self) -> Result<(), ConfigError> {
        let b = &self.beam;
        at_least("beam.m", b.m, 2)?;
        if !b.snr_db.is_finite() {
            return Err(ConfigError::new("beam.snr_db", "must be finite"));
        }
        in_range("beam.alpha", b.alpha, 0.0, 1.0)?;
        for (i, &a) in b.sweep_alphas.iter().enumerate() {
            in_range(&format!("beam.sweep_alphas[{i}]"), a, 0.0, 1.0)?;
        }
        at_least("beam.grid_n", b.grid_n, 2)?;
        let c = &b.ctde;
        widths("beam.ctde.actor_hidden", &c.actor_hidden)?;
        widths("beam.ctde.critic_hidden", &c.critic_hidden)?;
        for (path, v) in [("beam.ctde.sigma_start", c.sigma_start), ("beam.ctde.sigma_end", c.sigma_end)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::new(path, format!("must be >= 0, got {v}")));
            }
        }
        at_least("beam.ctde.steps", c.steps, 1)?;
        at_least("beam.ctde.batch_size", c.batch_size, 1)?;
        positive("beam.ctde.actor_lr", c.actor_lr)?;
        positive("beam.ctde.critic_lr", c.critic_lr)?;
        at_least("beam.ctde.trace_every", c.trace_every, 1)?;
        at_least("beam.ctde.eval_phases", c.eval_phases, 1)?;
        Ok(())
    }

    fn validate_csi(&self) -> Result<(), ConfigError> {
        let c = &self.csi;
        at_least("csi.n_tx", c.n_tx, 1)?;
        at_least("csi.n_paths", c.n_paths, 1)?;
        at_least("csi.n_samples", c.n_samples, 2)?;
        at_least("csi.epochs", c.epochs, 1)?;
        nonempty("csi.latent_dims", &c.latent_dims)?;
        for (i, &l) in c.latent_dims.iter().enumerate() {
            let path = format!("csi.latent_dims[{i}]");
            at_least(&path, l, 1)?;
            if l > 2 * c.n_tx {
                return Err(ConfigError::new(path, format!("must not exceed 2·n_tx = {}", 2 * c.n_tx)));
            }
        }
        nonempty("csi.bits", &c.bits)?;
        for (i, &b) in c.bits.iter().enumerate() {
            if !(1..=ranlab::neural::UniformQuantizer::MAX_BITS).contains(&b) {
                return Err(ConfigError::new(format!("csi.bits[{i}]"), format!("must lie in 1..=24, got {b}")));
            }
        }
        widths("csi.hidden", &c.hidden)?;
        positive("csi.latent_range", c.latent_range)?;
        at_least("csi.batch_size", c.batch_size, 1)?;
        positive("csi.lr", c.lr)?;
        Ok(())
    }

    /// The fields that determine results: experiment tag, seeds and the
    /// selected experiment's section.
    pub fn canonical_value(&self) -> Value {
        let section = match self.experiment {
            Experiment::Tilt => serde_json::to_value(&self.tilt),
            Experiment::Beam => serde_json::to_value(&self.beam),
            Experiment::Csi => serde_json::to_value(&self.csi),
        }
        .expect("section serializes");
        let mut m = Map::new();
        m.insert("experiment".into(), Value::String(self.experiment.name().into()));
        m.insert("seeds".into(), serde_json::to_value(&self.seeds).expect("seeds serialize"));
        m.insert(self.experiment.name().into(), section);
        Value::Object(m)
    }

    /// SHA-256 of the canonical value serialized with sorted keys.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_value()).expect("value serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
