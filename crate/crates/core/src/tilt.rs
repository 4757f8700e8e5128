//! Offline reinforcement learning for antenna tilt.
//!
//! A rule-based policy with ε-exploration changes tilts once per day and the
//! resulting transitions are logged together with the probability the logging
//! policy assigned to each emitted action. A shared per-cell Q-network with
//! zero discount is then regressed on the logged rewards, either plainly
//! (direct method) or with capped, self-normalized inverse-propensity sample
//! weights. The greedy policy of the Q-network is evaluated by rolling it
//! forward in the simulator against the rule-based baseline.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{
    evaluate_network, KpiVector, NetworkError, NetworkLayout, PropagationParams,
};
use crate::neural::{Activation, AdamConfig, AdamState, DenseNet, Gradients, NeuralError};
use crate::rng::{child_seed, seeded, shuffle, LabRng};

/// Neighbors averaged into the reward.
pub const REWARD_NEIGHBORS: usize = 6;

const EXPLORATION_STREAM: u64 = 0xE5_0001;
const INITIAL_TILT_STREAM: u64 = 0xE5_0002;

#[derive(Debug, Error)]
pub enum TiltError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("unsupported feature count {0}; expected 5, 20 or 35")]
    FeatureCount(usize),
    #[error("epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("need at least 2 days, got {0}")]
    TooFewDays(usize),
    #[error("experience log is empty")]
    EmptyLog,
    #[error("transition {index}: feature length {got}, expected {expected}")]
    FeatureLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("transition {index}: propensity {value} not in (0, 1]")]
    Propensity { index: usize, value: f64 },
    #[error("invalid action index {0}")]
    Action(u8),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("layout has {available} other cells, {needed} needed")]
    TooFewNeighbors { available: usize, needed: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("log format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tilt adjustment chosen by a cell agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum TiltAction {
    /// Decrease downtilt.
    Uptilt = 0,
    /// Increase downtilt.
    Downtilt = 1,
    NoChange = 2,
}

impl TiltAction {
    pub const ALL: [TiltAction; 3] = [TiltAction::Uptilt, TiltAction::Downtilt, TiltAction::NoChange];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Signed change of the downtilt angle.
    pub fn tilt_delta(self, step: f64) -> f64 {
        match self {
            TiltAction::Uptilt => -step,
            TiltAction::Downtilt => step,
            TiltAction::NoChange => 0.0,
        }
    }
}

impl From<TiltAction> for u8 {
    fn from(a: TiltAction) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for TiltAction {
    type Error = TiltError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(TiltAction::Uptilt),
            1 => Ok(TiltAction::Downtilt),
            2 => Ok(TiltAction::NoChange),
            other => Err(TiltError::Action(other)),
        }
    }
}

/// Input width of the Q-network: own KPIs plus 0, 3 or 6 neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "usize", try_from = "usize")]
pub struct FeatureCount(usize);

impl FeatureCount {
    pub const OWN: FeatureCount = FeatureCount(5);
    pub const NEAR: FeatureCount = FeatureCount(20);
    pub const WIDE: FeatureCount = FeatureCount(35);

    pub fn new(n: usize) -> Result<Self, TiltError> {
        match n {
            5 | 20 | 35 => Ok(FeatureCount(n)),
            other => Err(TiltError::FeatureCount(other)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn neighbors(self) -> usize {
        self.0 / KpiVector::LEN - 1
    }
}

impl From<FeatureCount> for usize {
    fn from(f: FeatureCount) -> usize {
        f.0
    }
}

impl TryFrom<usize> for FeatureCount {
    type Error = TiltError;

    fn try_from(n: usize) -> Result<Self, Self::Error> {
        FeatureCount::new(n)
    }
}

/// Fixed affine standardization `(kpi - offset) / scale`, per KPI in
/// `(coverage, capacity, mean_sinr_db, edge_sinr_db, load)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureScaling {
    pub offset: [f64; 5],
    pub scale: [f64; 5],
}

impl Default for FeatureScaling {
    fn default() -> Self {
        Self {
            offset: [0.5, 2.0, 5.0, -5.0, 100.0],
            scale: [0.25, 1.0, 10.0, 10.0, 50.0],
        }
    }
}

impl FeatureScaling {
    fn validate(&self) -> Result<(), TiltError> {
        let ok = self.offset.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(TiltError::Config("feature scaling must be finite with positive scales".into()));
        }
        Ok(())
    }

    fn apply(&self, k: &KpiVector, out: &mut Vec<f64>) {
        for (i, v) in k.to_array().into_iter().enumerate() {
            out.push((v - self.offset[i]) / self.scale[i]);
        }
    }
}

/// Reward weights: `beta` trades coverage against normalized capacity
/// within a cell, `mu` trades the own cell against its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub beta: f64,
    pub mu: f64,
    pub cap_norm: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            beta: 0.5,
            mu: 0.5,
            cap_norm: 5.0,
        }
    }
}

impl RewardWeights {
    fn validate(&self) -> Result<(), TiltError> {
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.mu) {
            return Err(TiltError::Config(format!(
                "beta and mu must lie in [0, 1], got {} and {}",
                self.beta, self.mu
            )));
        }
        if !(self.cap_norm.is_finite() && self.cap_norm > 0.0) {
            return Err(TiltError::Config(format!("cap_norm must be positive, got {}", self.cap_norm)));
        }
        Ok(())
    }

    /// Per-cell utility `beta·coverage + (1 − beta)·capacity / cap_norm`.
    pub fn cell_utility(&self, k: &KpiVector) -> f64 {
        self.beta * k.coverage + (1.0 - self.beta) * k.capacity / self.cap_norm
    }
}

/// Thresholds of the deployed rule-based tilt policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleThresholds {
    pub cov_low: f64,
    pub cov_high: f64,
    pub cap_low: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            cov_low: 0.9,
            cov_high: 0.99,
            cap_low: 2.5,
        }
    }
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<(), TiltError> {
        if !(self.cov_low < self.cov_high) {
            return Err(TiltError::Config(format!(
                "rule thresholds need cov_low < cov_high, got {} and {}",
                self.cov_low, self.cov_high
            )));
        }
        Ok(())
    }

    /// Thresholds that never trigger a tilt change.
    pub fn never() -> Self {
        Self {
            cov_low: f64::NEG_INFINITY,
            cov_high: f64::INFINITY,
            cap_low: f64::NEG_INFINITY,
        }
    }
}

/// Deterministic rule: poor coverage uptilts, good coverage with poor
/// capacity downtilts, otherwise no change.
pub fn rule_action(own: &KpiVector, t: &RuleThresholds) -> TiltAction {
    if own.coverage < t.cov_low {
        TiltAction::Uptilt
    } else if own.coverage > t.cov_high && own.capacity < t.cap_low {
        TiltAction::Downtilt
    } else {
        TiltAction::NoChange
    }
}

/// ε-mixed rule: with probability ε a uniformly random action, otherwise the
/// rule action. Returns the emitted action and its logging probability.
pub fn rule_based_action(
    own: &KpiVector,
    thresholds: &RuleThresholds,
    epsilon: f64,
    rng: &mut LabRng,
) -> Result<(TiltAction, f64), TiltError> {
    check_epsilon(epsilon)?;
    let rule = rule_action(own, thresholds);
    let action = if rng.random::<f64>() < epsilon {
        TiltAction::ALL[rng.random_range(0..3)]
    } else {
        rule
    };
    Ok((action, logging_propensity(action, rule, epsilon)))
}

/// Probability that the ε-mixed rule emits `action` when the rule says `rule`.
pub fn logging_propensity(action: TiltAction, rule: TiltAction, epsilon: f64) -> f64 {
    let greedy = if action == rule { 1.0 - epsilon } else { 0.0 };
    greedy + epsilon / 3.0
}

fn check_epsilon(epsilon: f64) -> Result<(), TiltError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(TiltError::Epsilon(epsilon));
    }
    Ok(())
}

/// Simulator settings shared by log generation and policy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltEnv {
    pub layout: NetworkLayout,
    pub params: PropagationParams,
    pub n_users: usize,
    pub tilt_step: f64,
    pub reward: RewardWeights,
    pub scaling: FeatureScaling,
    pub rule: RuleThresholds,
}

impl TiltEnv {
    pub fn new(layout: NetworkLayout, params: PropagationParams, n_users: usize) -> Self {
        Self {
            layout,
            params,
            n_users,
            tilt_step: 1.0,
            reward: RewardWeights::default(),
            scaling: FeatureScaling::default(),
            rule: RuleThresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TiltError> {
        self.params.validate()?;
        self.layout.tilt_bounds.validate()?;
        self.reward.validate()?;
        self.scaling.validate()?;
        self.rule.validate()?;
        if self.n_users == 0 {
            return Err(NetworkError::NoUsers.into());
        }
        if !(self.tilt_step.is_finite() && self.tilt_step > 0.0) {
            return Err(TiltError::Config(format!("tilt_step must be positive, got {}", self.tilt_step)));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a digest of the serialized environment, in hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("environment serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Feature vector of `cell_id`: its own scaled KPIs followed by those of its
/// nearest neighbors (by site distance, then cell id).
pub fn build_features(
    kpis: &[KpiVector],
    cell_id: usize,
    layout: &NetworkLayout,
    feature_count: FeatureCount,
    scaling: &FeatureScaling,
) -> Result<Vec<f64>, TiltError> {
    let neighbors = nearest(layout, cell_id, feature_count.neighbors())?;
    Ok(features_with(kpis, cell_id, &neighbors, scaling))
}

fn features_with(
    kpis: &[KpiVector],
    cell_id: usize,
    neighbors: &[usize],
    scaling: &FeatureScaling,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(KpiVector::LEN * (1 + neighbors.len()));
    scaling.apply(&kpis[cell_id], &mut out);
    for &n in neighbors {
        scaling.apply(&kpis[n], &mut out);
    }
    out
}

fn nearest(layout: &NetworkLayout, cell_id: usize, k: usize) -> Result<Vec<usize>, TiltError> {
    let mut all = layout.neighbors(cell_id)?;
    if all.len() < k {
        return Err(TiltError::TooFewNeighbors {
            available: all.len(),
            needed: k,
        });
    }
    all.truncate(k);
    Ok(all)
}

/// `μ·g(own) + (1 − μ)·mean g(neighbor)` over the six nearest neighbors
/// (all of them in layouts with fewer cells).
pub fn reward(
    kpis_after: &[KpiVector],
    cell_id: usize,
    layout: &NetworkLayout,
    weights: &RewardWeights,
) -> Result<f64, TiltError> {
    let mut neighbors = layout.neighbors(cell_id)?;
    neighbors.truncate(REWARD_NEIGHBORS);
    Ok(reward_with(kpis_after, cell_id, &neighbors, weights))
}

fn reward_with(kpis: &[KpiVector], cell_id: usize, neighbors: &[usize], w: &RewardWeights) -> f64 {
    let own = w.cell_utility(&kpis[cell_id]);
    if neighbors.is_empty() {
        return own;
    }
    let nb = neighbors.iter().map(|&n| w.cell_utility(&kpis[n])).sum::<f64>()
        / neighbors.len() as f64;
    w.mu * own + (1.0 - w.mu) * nb
}

/// Per-cell neighbor lists used for features and rewards.
struct Neighborhood {
    features: Vec<Vec<usize>>,
    reward: Vec<Vec<usize>>,
}

impl Neighborhood {
    fn new(layout: &NetworkLayout, feature_neighbors: usize) -> Result<Self, TiltError> {
        let mut features = Vec::with_capacity(layout.n_cells());
        let mut reward = Vec::with_capacity(layout.n_cells());
        for c in 0..layout.n_cells() {
            let all = layout.neighbors(c)?;
            if all.len() < feature_neighbors {
                return Err(TiltError::TooFewNeighbors {
                    available: all.len(),
                    needed: feature_neighbors,
                });
            }
            features.push(all[..feature_neighbors].to_vec());
            reward.push(all[..all.len().min(REWARD_NEIGHBORS)].to_vec());
        }
        Ok(Self { features, reward })
    }
}

/// Greedy Q-network policy shared by all cells.
#[derive(Debug, Clone, PartialEq)]
pub struct QPolicy {
    pub net: DenseNet,
    pub feature_count: FeatureCount,
}

impl QPolicy {
    pub fn new(net: DenseNet) -> Result<Self, TiltError> {
        let feature_count = FeatureCount::new(net.input_dim())?;
        if net.output_dim() != 3 {
            return Err(TiltError::Config(format!(
                "Q-network must have 3 outputs, has {}",
                net.output_dim()
            )));
        }
        Ok(Self { net, feature_count })
    }

    /// Action with the largest Q-value; ties resolve to the lowest index.
    pub fn act(&self, features: &[f64]) -> Result<TiltAction, TiltError> {
        let q = self.net.forward(features)?;
        Ok(TiltAction::ALL[argmax(&q)])
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum TiltPolicy {
    RuleBased(RuleThresholds),
    GreedyQ(QPolicy),
}

impl TiltPolicy {
    fn feature_neighbors(&self) -> usize {
        match self {
            TiltPolicy::RuleBased(_) => 0,
            TiltPolicy::GreedyQ(q) => q.feature_count.neighbors(),
        }
    }
}

/// One logged decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub day: u32,
    pub cell_id: usize,
    pub features: Vec<f64>,
    pub action: TiltAction,
    pub reward: f64,
    pub propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub env_config_hash: String,
    pub seed: u64,
    pub feature_count: FeatureCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceLog {
    pub env_config_hash: String,
    pub seed: u64,
    pub feature_count: FeatureCount,
    pub transitions: Vec<Transition>,
}

impl ExperienceLog {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Keeps only the leading features. Own KPIs come first and neighbors
    /// are sorted by distance, so a 35-feature log narrows exactly to the
    /// 20- or 5-feature log of the same run.
    pub fn project(&self, feature_count: FeatureCount) -> Result<ExperienceLog, TiltError> {
        if feature_count > self.feature_count {
            return Err(TiltError::Config(format!(
                "cannot widen a {}-feature log to {}",
                self.feature_count.get(),
                feature_count.get()
            )));
        }
        let n = feature_count.get();
        Ok(ExperienceLog {
            env_config_hash: self.env_config_hash.clone(),
            seed: self.seed,
            feature_count,
            transitions: self
                .transitions
                .iter()
                .map(|t| Transition {
                    features: t.features[..n].to_vec(),
                    ..t.clone()
                })
                .collect(),
        })
    }

    /// Replaces propensities with the empirical frequency of each action,
    /// for logs whose logging probabilities were not recorded.
    pub fn with_empirical_propensities(&self) -> ExperienceLog {
        let mut counts = [0usize; 3];
        for t in &self.transitions {
            counts[t.action.index()] += 1;
        }
        let total = self.transitions.len().max(1) as f64;
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.propensity = counts[t.action.index()] as f64 / total;
        }
        out
    }

    /// Fraction of transitions per action index.
    pub fn action_frequencies(&self) -> [f64; 3] {
        let mut counts = [0.0; 3];
        for t in &self.transitions {
            counts[t.action.index()] += 1.0;
        }
        let n = self.transitions.len().max(1) as f64;
        counts.map(|c| c / n)
    }

    /// JSON Lines: one header object, then one transition per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TiltError> {
        let header = LogHeader {
            env_config_hash: self.env_config_hash.clone(),
            seed: self.seed,
            feature_count: self.feature_count,
        };
        writeln!(w, "{}", serde_json::to_string(&header).map_err(fmt_err)?)?;
        for t in &self.transitions {
            writeln!(w, "{}", serde_json::to_string(t).map_err(fmt_err)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<ExperienceLog, TiltError> {
        let mut lines = r.lines();
        let header: LogHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?).map_err(fmt_err)?,
            None => return Err(TiltError::Format("missing header line".into())),
        };
        let mut transitions = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line).map_err(fmt_err)?;
            transitions.push(t);
        }
        let log = ExperienceLog {
            env_config_hash: header.env_config_hash,
            seed: header.seed,
            feature_count: header.feature_count,
            transitions,
        };
        check_log(&log, log.feature_count, false)?;
        Ok(log)
    }
}

fn fmt_err(e: serde_json::Error) -> TiltError {
    TiltError::Format(e.to_string())
}

/// Result of simulating one day-to-day decision round.
struct DayStep {
    kpis_before: Vec<KpiVector>,
    decisions: Vec<(TiltAction, f64)>,
    kpis_after: Vec<KpiVector>,
}

/// Rolls the network forward `n_days - 1` decision rounds from `layout`'s
/// tilts. Day `d` users are dropped with `child_seed(seed, d)`, so rollouts
/// with the same seed see identical users regardless of the policy.
fn rollout<F>(
    env: &TiltEnv,
    mut layout: NetworkLayout,
    n_days: usize,
    seed: u64,
    mut decide: F,
) -> Result<Vec<DayStep>, TiltError>
where
    F: FnMut(usize, &[KpiVector]) -> Result<(TiltAction, f64), TiltError>,
{
    if n_days < 2 {
        return Err(TiltError::TooFewDays(n_days));
    }
    let drop_seed = |day: usize| child_seed(seed, day as u64);
    let (_, mut kpis) = evaluate_network(&layout, &env.params, env.n_users, drop_seed(0))?;
    let mut steps = Vec::with_capacity(n_days - 1);
    for day in 0..n_days - 1 {
        let mut decisions = Vec::with_capacity(layout.n_cells());
        for cell in 0..layout.n_cells() {
            decisions.push(decide(cell, &kpis)?);
        }
        for (cell, (action, _)) in decisions.iter().enumerate() {
            let tilt = layout.cells[cell].tilt + action.tilt_delta(env.tilt_step);
            layout.set_tilt(cell, tilt)?;
        }
        let (_, next) = evaluate_network(&layout, &env.params, env.n_users, drop_seed(day + 1))?;
        steps.push(DayStep {
            kpis_before: std::mem::replace(&mut kpis, next.clone()),
            decisions,
            kpis_after: next,
        });
    }
    Ok(steps)
}

/// Logs `n_days - 1` rounds of the ε-mixed rule policy, one transition per
/// cell per round, starting from the environment layout's tilts.
pub fn generate_log(
    env: &TiltEnv,
    epsilon: f64,
    feature_count: FeatureCount,
    n_days: usize,
    seed: u64,
) -> Result<ExperienceLog, TiltError> {
    env.validate()?;
    check_epsilon(epsilon)?;
    let hood = Neighborhood::new(&env.layout, feature_count.neighbors())?;
    let mut rng = seeded(child_seed(seed, EXPLORATION_STREAM));
    let rule = env.rule;
    let steps = rollout(env, env.layout.clone(), n_days, seed, |cell, kpis| {
        rule_based_action(&kpis[cell], &rule, epsilon, &mut rng)
    })?;
    let mut transitions = Vec::with_capacity(steps.len() * env.layout.n_cells());
    for (day, step) in steps.iter().enumerate() {
        for (cell, &(action, propensity)) in step.decisions.iter().enumerate() {
            transitions.push(Transition {
                day: day as u32,
                cell_id: cell,
                features: features_with(&step.kpis_before, cell, &hood.features[cell], &env.scaling),
                action,
                reward: reward_with(&step.kpis_after, cell, &hood.reward[cell], &env.reward),
                propensity,
            });
        }
    }
    Ok(ExperienceLog {
        env_config_hash: env.config_hash(),
        seed,
        feature_count,
        transitions,
    })
}

/// Q-network training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub feature_count: FeatureCount,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Upper bound on an inverse-propensity weight before normalization.
    pub weight_cap: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature_count: FeatureCount::WIDE,
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            hidden: vec![64, 64],
            weight_cap: 20.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TiltError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TiltError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TiltError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_cap >= 1.0) {
            return Err(TiltError::Config(format!("weight_cap must be >= 1, got {}", self.weight_cap)));
        }
        if self.hidden.contains(&0) {
            return Err(TiltError::Config("hidden layer of width 0".into()));
        }
        Ok(())
    }

    fn architecture(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut sizes = vec![self.feature_count.get()];
        sizes.extend(&self.hidden);
        sizes.push(3);
        let mut acts = vec![Activation::Relu; self.hidden.len()];
        acts.push(Activation::Linear);
        (sizes, acts)
    }
}

/// Per-sample weighting of the squared reward-regression error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleWeighting {
    /// Direct method: every sample counts once.
    Uniform,
    /// `min(1/propensity, cap)`, divided by its batch mean.
    InversePropensity { cap: f64 },
}

/// Raw inverse-propensity weight before batch normalization.
pub fn propensity_weight(propensity: f64, cap: f64) -> f64 {
    (1.0 / propensity).min(cap)
}

/// Self-normalized weights; a batch of identical weights maps to exactly 1.
pub fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    if raw.windows(2).all(|w| w[0] == w[1]) {
        return vec![1.0; raw.len()];
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter().map(|w| w / mean).collect()
}

fn check_log(log: &ExperienceLog, fc: FeatureCount, need_propensity: bool) -> Result<(), TiltError> {
    if log.transitions.is_empty() {
        return Err(TiltError::EmptyLog);
    }
    for (index, t) in log.transitions.iter().enumerate() {
        if t.features.len() != fc.get() {
            return Err(TiltError::FeatureLength {
                index,
                expected: fc.get(),
                got: t.features.len(),
            });
        }
        let p_ok = t.propensity > 0.0 && t.propensity <= 1.0;
        if (need_propensity && !p_ok) || t.propensity.is_nan() {
            return Err(TiltError::Propensity {
                index,
                value: t.propensity,
            });
        }
    }
    Ok(())
}

/// Regresses `Q(s)[a]` onto logged rewards. Only the logged action's output
/// receives gradient; there is no bootstrap target. `on_epoch` sees the
/// network and mean weighted loss after every epoch.
pub fn train_q_with<F>(
    log: &ExperienceLog,
    cfg: &TrainConfig,
    seed: u64,
    weighting: SampleWeighting,
    mut on_epoch: F,
) -> Result<DenseNet, TiltError>
where
    F: FnMut(usize, &DenseNet, f64),
{
    cfg.validate()?;
    let need_p = matches!(weighting, SampleWeighting::InversePropensity { .. });
    check_log(log, cfg.feature_count, need_p)?;
    let mut rng = seeded(seed);
    let (sizes, acts) = cfg.architecture();
    let mut net = DenseNet::new(&sizes, &acts, &mut rng)?;
    let mut adam = AdamState::for_net(&net, AdamConfig::with_lr(cfg.lr));
    let mut grads = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..log.len()).collect();

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let raw: Vec<f64> = match weighting {
                SampleWeighting::Uniform => vec![1.0; batch.len()],
                SampleWeighting::InversePropensity { cap } => batch
                    .iter()
                    .map(|&i| propensity_weight(log.transitions[i].propensity, cap))
                    .collect(),
            };
            let weights = normalize_weights(&raw);
            let inv_n = 1.0 / batch.len() as f64;
            grads.fill_zero();
            for (&i, &w) in batch.iter().zip(&weights) {
                let t = &log.transitions[i];
                let trace = net.forward_trace(&t.features)?;
                let a = t.action.index();
                let err = trace.output()[a] - t.reward;
                loss_sum += w * err * err;
                let mut dy = [0.0; 3];
                dy[a] = 2.0 * w * err * inv_n;
                net.backward_into(&trace, &dy, &mut grads)?;
            }
            adam.step_net(&mut net, &grads)?;
        }
        let loss = loss_sum / log.len() as f64;
        if !loss.is_finite() {
            return Err(TiltError::Diverged { epoch, loss });
        }
        on_epoch(epoch, &net, loss);
    }
    Ok(net)
}

/// Direct method: unweighted reward regression.
pub fn train_dm(log: &ExperienceLog, cfg: &TrainConfig, seed: u64) -> Result<DenseNet, TiltError> {
    train_q_with(log, cfg, seed, SampleWeighting::Uniform, |_, _, _| {})
}

/// Propensity-weighted direct method.
pub fn train_propensity_dm(
    log: &ExperienceLog,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<DenseNet, TiltError> {
    let weighting = SampleWeighting::InversePropensity {
        cap: cfg.weight_cap,
    };
    train_q_with(log, cfg, seed, weighting, |_, _, _| {})
}

/// Mean rewards of a policy and of the rule-based baseline over the same
/// initial tilts and user drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub mean_reward: f64,
    pub baseline_mean_reward: f64,
    pub gain_pct: f64,
}

/// Greedy rollout of `policy` for each evaluation seed.
///
/// Each seed draws fresh initial tilts (uniform integers inside the bounds)
/// shared by the policy and the baseline. Means run over cells, decision
/// rounds and seeds.
pub fn evaluate_policy(
    env: &TiltEnv,
    policy: &TiltPolicy,
    n_days: usize,
    eval_seeds: &[u64],
) -> Result<PolicyEvaluation, TiltError> {
    env.validate()?;
    if n_days < 2 {
        return Err(TiltError::TooFewDays(n_days));
    }
    if eval_seeds.is_empty() {
        return Err(TiltError::Config("no evaluation seeds".into()));
    }
    let baseline = TiltPolicy::RuleBased(env.rule);
    let mut policy_sum = 0.0;
    let mut base_sum = 0.0;
    for &seed in eval_seeds {
        let start = initial_layout(env, seed)?;
        let own = mean_rollout_reward(env, &start, policy, n_days, seed)?;
        policy_sum += own;
        base_sum += if policy == &baseline {
            own
        } else {
            mean_rollout_reward(env, &start, &baseline, n_days, seed)?
        };
    }
    let k = eval_seeds.len() as f64;
    let mean_reward = policy_sum / k;
    let baseline_mean_reward = base_sum / k;
    Ok(PolicyEvaluation {
        mean_reward,
        baseline_mean_reward,
        gain_pct: 100.0 * (mean_reward - baseline_mean_reward) / baseline_mean_reward.abs(),
    })
}

/// Copy of the environment layout with tilts redrawn from `seed`.
pub fn initial_layout(env: &TiltEnv, seed: u64) -> Result<NetworkLayout, TiltError> {
    let mut layout = env.layout.clone();
    let mut rng = seeded(child_seed(seed, INITIAL_TILT_STREAM));
    let b = layout.tilt_bounds;
    let (lo, hi) = (b.min.ceil() as i64, b.max.floor() as i64);
    for cell in 0..layout.n_cells() {
        let t = if lo <= hi {
            rng.random_range(lo..=hi) as f64
        } else {
            0.5 * (b.min + b.max)
        };
        layout.set_tilt(cell, t)?;
    }
    Ok(layout)
}

/// Mean per-cell reward of a greedy rollout from `start`.
pub fn mean_rollout_reward(
    env: &TiltEnv,
    start: &NetworkLayout,
    policy: &TiltPolicy,
    n_days: usize,
    seed: u64,
) -> Result<f64, TiltError> {
    let hood = Neighborhood::new(start, policy.feature_neighbors())?;
    let steps = rollout(env, start.clone(), n_days, seed, |cell, kpis| {
        let action = match policy {
            TiltPolicy::RuleBased(t) => rule_action(&kpis[cell], t),
            TiltPolicy::GreedyQ(q) => {
                q.act(&features_with(kpis, cell, &hood.features[cell], &env.scaling))?
            }
        };
        Ok((action, 1.0))
    })?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for step in &steps {
        for cell in 0..start.n_cells() {
            sum += reward_with(&step.kpis_after, cell, &hood.reward[cell], &env.reward);
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Tilts reached after a greedy rollout, for inspection and tests.
pub fn final_tilts(
    env: &TiltEnv,
    start: &NetworkLayout,
    policy: &TiltPolicy,
    n_days: usize,
    seed: u64,
) -> Result<Vec<f64>, TiltError> {
    let hood = Neighborhood::new(start, policy.feature_neighbors())?;
    let mut layout = start.clone();
    let steps = rollout(env, start.clone(), n_days, seed, |cell, kpis| {
        let action = match policy {
            TiltPolicy::RuleBased(t) => rule_action(&kpis[cell], t),
            TiltPolicy::GreedyQ(q) => {
                q.act(&features_with(kpis, cell, &hood.features[cell], &env.scaling))?
            }
        };
        Ok((action, 1.0))
    })?;
    for step in &steps {
        for (cell, (a, _)) in step.decisions.iter().enumerate() {
            let t = layout.cells[cell].tilt + a.tilt_delta(env.tilt_step);
            layout.set_tilt(cell, t)?;
        }
    }
    Ok(layout.tilts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_layout;
    use proptest::prelude::*;
    use rand::Rng;

    fn kpi(coverage: f64, capacity: f64) -> KpiVector {
        KpiVector {
            coverage,
            capacity,
            mean_sinr_db: 3.0,
            edge_sinr_db: -4.0,
            load: 90,
        }
    }

    fn small_env(seed: u64) -> TiltEnv {
        TiltEnv::new(build_layout(1, 1000.0, seed).unwrap(), PropagationParams::default(), 300)
    }

    fn synthetic_log(n: usize, fc: FeatureCount, seed: u64, f: impl Fn(&[f64], usize) -> f64) -> ExperienceLog {
        let mut rng = seeded(seed);
        let transitions = (0..n)
            .map(|i| {
                let features: Vec<f64> = (0..fc.get()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = rng.random_range(0..3usize);
                Transition {
                    day: i as u32,
                    cell_id: 0,
                    reward: f(&features, a),
                    features,
                    action: TiltAction::ALL[a],
                    propensity: 1.0 / 3.0,
                }
            })
            .collect();
        ExperienceLog {
            env_config_hash: String::new(),
            seed,
            feature_count: fc,
            transitions,
        }
    }

    #[test]
    fn rule_branches() {
        let t = RuleThresholds::default();
        assert_eq!(rule_action(&kpi(0.5, 1.0), &t), TiltAction::Uptilt);
        assert_eq!(rule_action(&kpi(0.995, 1.0), &t), TiltAction::Downtilt);
        assert_eq!(rule_action(&kpi(0.995, 4.0), &t), TiltAction::NoChange);
        assert_eq!(rule_action(&kpi(0.95, 1.0), &t), TiltAction::NoChange);
    }

    #[test]
    fn tiny_epsilon_follows_rule() {
        let mut rng = seeded(5);
        for _ in 0..200 {
            let (a, p) = rule_based_action(&kpi(0.5, 1.0), &RuleThresholds::default(), 1e-12, &mut rng).unwrap();
            assert_eq!(a, TiltAction::Uptilt);
            assert!((p - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn logged_propensities() {
        assert!((logging_propensity(TiltAction::NoChange, TiltAction::NoChange, 0.3) - 0.8).abs() < 1e-15);
        assert!((logging_propensity(TiltAction::Uptilt, TiltAction::NoChange, 0.3) - 0.1).abs() < 1e-15);
        let total: f64 = TiltAction::ALL
            .iter()
            .map(|&a| logging_propensity(a, TiltAction::Downtilt, 0.3))
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_action_rates_match_propensities() {
        let mut rng = seeded(9);
        let mut counts = [0usize; 3];
        let n = 60_000;
        for _ in 0..n {
            let (a, _) = rule_based_action(&kpi(0.5, 1.0), &RuleThresholds::default(), 0.3, &mut rng).unwrap();
            counts[a.index()] += 1;
        }
        for a in TiltAction::ALL {
            let expected = logging_propensity(a, TiltAction::Uptilt, 0.3);
            let got = counts[a.index()] as f64 / n as f64;
            assert!((got - expected).abs() < 0.01, "{a:?}: {got} vs {expected}");
        }
    }

    #[test]
    fn epsilon_bounds() {
        let mut rng = seeded(1);
        let t = RuleThresholds::default();
        for eps in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(rule_based_action(&kpi(0.5, 1.0), &t, eps, &mut rng), Err(TiltError::Epsilon(_))));
        }
        let (_, p) = rule_based_action(&kpi(0.5, 1.0), &t, 1.0, &mut rng).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn action_codes_round_trip() {
        for a in TiltAction::ALL {
            assert_eq!(TiltAction::try_from(u8::from(a)).unwrap(), a);
        }
        assert!(TiltAction::try_from(3).is_err());
        assert_eq!(TiltAction::Uptilt.tilt_delta(1.0), -1.0);
        assert_eq!(TiltAction::Downtilt.tilt_delta(1.0), 1.0);
        assert_eq!(TiltAction::NoChange.tilt_delta(1.0), 0.0);
    }

    #[test]
    fn feature_counts() {
        for n in [5, 20, 35] {
            assert_eq!(FeatureCount::new(n).unwrap().get(), n);
        }
        for n in [0, 4, 6, 21, 40] {
            assert!(matches!(FeatureCount::new(n), Err(TiltError::FeatureCount(_))));
        }
    }

    #[test]
    fn features_follow_distance_order() {
        let layout = build_layout(1, 500.0, 3).unwrap();
        let kpis: Vec<KpiVector> = (0..layout.n_cells())
            .map(|c| kpi(c as f64 / 100.0, c as f64 / 10.0))
            .collect();
        let scaling = FeatureScaling::default();
        let cell = 7;
        let own_site = layout.sites[layout.cells[cell].site_index];
        let mut others: Vec<(f64, usize)> = (0..layout.n_cells())
            .filter(|&c| c != cell)
            .map(|c| {
                let s = layout.sites[layout.cells[c].site_index];
                ((s[0] - own_site[0]).hypot(s[1] - own_site[1]), c)
            })
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for fc in [FeatureCount::OWN, FeatureCount::NEAR, FeatureCount::WIDE] {
            let v = build_features(&kpis, cell, &layout, fc, &scaling).unwrap();
            assert_eq!(v.len(), fc.get());
            let order: Vec<usize> = std::iter::once(cell)
                .chain(others.iter().map(|o| o.1))
                .take(fc.get() / 5)
                .collect();
            for (block, &c) in order.iter().enumerate() {
                let k = kpis[c].to_array();
                for i in 0..5 {
                    let expected = (k[i] - scaling.offset[i]) / scaling.scale[i];
                    assert_eq!(v[block * 5 + i], expected);
                }
            }
            assert_eq!(v, build_features(&kpis, cell, &layout, fc, &scaling).unwrap());
        }
    }

    #[test]
    fn reward_examples() {
        let layout = build_layout(1, 500.0, 1).unwrap();
        let n = layout.n_cells();
        let mut rng = seeded(4);
        let kpis: Vec<KpiVector> = (0..n)
            .map(|_| kpi(rng.random_range(0.0..1.0), rng.random_range(0.0..6.0)))
            .collect();
        let only_cov = RewardWeights {
            beta: 1.0,
            mu: 1.0,
            cap_norm: 5.0,
        };
        assert_eq!(reward(&kpis, 4, &layout, &only_cov).unwrap(), kpis[4].coverage);

        let same = vec![kpi(0.9, 3.0); n];
        for mu in [0.0, 0.3, 1.0] {
            let w = RewardWeights { mu, ..Default::default() };
            let r = reward(&same, 2, &layout, &w).unwrap();
            assert!((r - w.cell_utility(&same[0])).abs() < 1e-15);
        }

        let w = RewardWeights {
            beta: 0.3,
            mu: 0.6,
            cap_norm: 4.0,
        };
        for cell in 0..n {
            let nb = layout.neighbors(cell).unwrap();
            let g = |c: usize| 0.3 * kpis[c].coverage + 0.7 * kpis[c].capacity / 4.0;
            let mean_nb: f64 = nb[..6].iter().map(|&c| g(c)).sum::<f64>() / 6.0;
            let expected = 0.6 * g(cell) + 0.4 * mean_nb;
            assert!((reward(&kpis, cell, &layout, &w).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn log_has_one_transition_per_cell_per_round() {
        let env = small_env(2);
        let log = generate_log(&env, 0.3, FeatureCount::WIDE, 2, 11).unwrap();
        assert_eq!(log.len(), 21);
        let log = generate_log(&env, 0.3, FeatureCount::NEAR, 4, 11).unwrap();
        assert_eq!(log.len(), 63);
        for t in &log.transitions {
            assert_eq!(t.features.len(), 20);
            assert!(t.features.iter().all(|x| x.is_finite()));
            assert!((t.propensity - 0.8).abs() < 1e-12 || (t.propensity - 0.1).abs() < 1e-12);
        }
        assert!(matches!(
            generate_log(&env, 0.3, FeatureCount::WIDE, 1, 11),
            Err(TiltError::TooFewDays(1))
        ));
    }

    #[test]
    fn log_is_deterministic_and_projects() {
        let env = small_env(2);
        let a = generate_log(&env, 0.3, FeatureCount::WIDE, 3, 5).unwrap();
        let b = generate_log(&env, 0.3, FeatureCount::WIDE, 3, 5).unwrap();
        assert_eq!(a, b);
        let narrow = generate_log(&env, 0.3, FeatureCount::OWN, 3, 5).unwrap();
        assert_eq!(a.project(FeatureCount::OWN).unwrap(), narrow);
        assert!(narrow.project(FeatureCount::WIDE).is_err());
    }

    #[test]
    fn log_jsonl_round_trip() {
        let env = small_env(2);
        let log = generate_log(&env, 0.3, FeatureCount::NEAR, 3, 8).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["feature_count"], 20);
        let first: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["action", "cell_id", "day", "features", "propensity", "reward"]);
        assert_eq!(ExperienceLog::read_jsonl(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn propensity_weights() {
        let raw = [propensity_weight(0.1, 20.0), propensity_weight(0.8, 20.0)];
        assert!((raw[0] / raw[1] - 8.0).abs() < 1e-12);
        let w = normalize_weights(&raw);
        assert!((w[0] / w[1] - 8.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() / 2.0 - 1.0).abs() < 1e-12);
        assert_eq!(propensity_weight(0.01, 20.0), 20.0);
        assert_eq!(normalize_weights(&[3.0; 5]), vec![1.0; 5]);
    }

    #[test]
    fn constant_reward_is_fit() {
        let log = synthetic_log(2000, FeatureCount::OWN, 1, |_, _| 0.7);
        let cfg = TrainConfig {
            feature_count: FeatureCount::OWN,
            epochs: 30,
            ..Default::default()
        };
        let net = train_dm(&log, &cfg, 3).unwrap();
        let mse = log
            .transitions
            .iter()
            .map(|t| (net.forward(&t.features).unwrap()[t.action.index()] - 0.7).powi(2))
            .sum::<f64>()
            / log.len() as f64;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn linear_reward_argmax_is_recovered() {
        let w = [[0.5, -0.3, 0.2, 0.0, 0.1], [-0.4, 0.6, 0.0, 0.2, -0.1], [0.1, 0.1, -0.5, 0.3, 0.2]];
        let f = move |s: &[f64], a: usize| w[a].iter().zip(s).map(|(x, y)| x * y).sum::<f64>();
        let log = synthetic_log(6000, FeatureCount::OWN, 2, f);
        let cfg = TrainConfig {
            feature_count: FeatureCount::OWN,
            epochs: 30,
            ..Default::default()
        };
        let policy = QPolicy::new(train_dm(&log, &cfg, 5).unwrap()).unwrap();
        let held_out = synthetic_log(1000, FeatureCount::OWN, 77, f);
        let hits = held_out
            .transitions
            .iter()
            .filter(|t| {
                let truth: Vec<f64> = (0..3).map(|a| f(&t.features, a)).collect();
                policy.act(&t.features).unwrap().index() == argmax(&truth)
            })
            .count();
        assert!(hits >= 950, "{hits}/1000");
    }

    #[test]
    fn uniform_log_gives_identical_trajectories() {
        let env = small_env(4);
        let log = generate_log(&env, 1.0, FeatureCount::NEAR, 6, 2).unwrap();
        let cfg = TrainConfig {
            feature_count: FeatureCount::NEAR,
            epochs: 4,
            batch_size: 16,
            ..Default::default()
        };
        let mut dm = Vec::new();
        let mut pdm = Vec::new();
        train_q_with(&log, &cfg, 9, SampleWeighting::Uniform, |_, n, l| dm.push((n.params(), l))).unwrap();
        let cap = SampleWeighting::InversePropensity { cap: cfg.weight_cap };
        train_q_with(&log, &cfg, 9, cap, |_, n, l| pdm.push((n.params(), l))).unwrap();
        assert_eq!(dm, pdm);
    }

    #[test]
    fn training_is_deterministic() {
        let log = synthetic_log(300, FeatureCount::OWN, 3, |s, a| s[a]);
        let cfg = TrainConfig {
            feature_count: FeatureCount::OWN,
            epochs: 2,
            ..Default::default()
        };
        assert_eq!(train_dm(&log, &cfg, 1).unwrap(), train_dm(&log, &cfg, 1).unwrap());
        assert_eq!(
            train_propensity_dm(&log, &cfg, 1).unwrap(),
            train_propensity_dm(&log, &cfg, 1).unwrap()
        );
    }

    #[test]
    fn training_rejects_bad_logs() {
        let cfg = TrainConfig::default();
        let empty = ExperienceLog {
            env_config_hash: String::new(),
            seed: 0,
            feature_count: FeatureCount::WIDE,
            transitions: Vec::new(),
        };
        assert!(matches!(train_dm(&empty, &cfg, 0), Err(TiltError::EmptyLog)));
        let narrow = synthetic_log(10, FeatureCount::OWN, 1, |_, _| 0.0);
        assert!(matches!(train_dm(&narrow, &cfg, 0), Err(TiltError::FeatureLength { .. })));
    }

    #[test]
    fn baseline_against_itself_gains_nothing() {
        let env = small_env(6);
        let e = evaluate_policy(&env, &TiltPolicy::RuleBased(env.rule), 4, &[1, 2]).unwrap();
        assert_eq!(e.gain_pct, 0.0);
        assert_eq!(e.mean_reward, e.baseline_mean_reward);
        let again = evaluate_policy(&env, &TiltPolicy::RuleBased(env.rule), 4, &[1, 2]).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn doing_nothing_loses_to_the_rule() {
        // steep tilts open coverage holes that the rule closes
        let mut env = small_env(6);
        env.n_users = 1000;
        env.layout.tilt_bounds = crate::network::TiltBounds { min: 12.0, max: 16.0 };
        env.rule.cap_low = 0.0;
        let never = TiltPolicy::RuleBased(RuleThresholds::never());
        let e = evaluate_policy(&env, &never, 15, &[1, 2, 3]).unwrap();
        assert!(e.gain_pct < 0.0, "{e:?}");
    }

    #[test]
    fn greedy_rule_reaches_the_bounds() {
        let env = small_env(1);
        let start = initial_layout(&env, 3).unwrap();
        let always_up = RuleThresholds {
            cov_low: 2.0,
            cov_high: 3.0,
            cap_low: 0.0,
        };
        let tilts = final_tilts(&env, &start, &TiltPolicy::RuleBased(always_up), 20, 1).unwrap();
        assert!(tilts.iter().all(|&t| t == env.layout.tilt_bounds.min));
    }

    proptest! {
        #[test]
        fn tilts_stay_in_bounds(actions in prop::collection::vec(0u8..3, 1..60), step in 0.5f64..4.0, start in 0.0f64..16.0) {
            let mut layout = build_layout(0, 500.0, 1).unwrap();
            layout.set_tilt(0, start).unwrap();
            let b = layout.tilt_bounds;
            for a in actions {
                let a = TiltAction::try_from(a).unwrap();
                let t = layout.cells[0].tilt + a.tilt_delta(step);
                layout.set_tilt(0, t).unwrap();
                prop_assert!(layout.cells[0].tilt >= b.min && layout.cells[0].tilt <= b.max);
            }
        }

        #[test]
        fn argmax_survives_positive_affine_maps(x in prop::collection::vec(-2.0f64..2.0, 5), scale in 0.01f64..100.0, shift in -50.0f64..50.0, seed in 0u64..1000) {
            let cfg = TrainConfig { feature_count: FeatureCount::OWN, ..Default::default() };
            let (sizes, acts) = cfg.architecture();
            let net = DenseNet::new(&sizes, &acts, &mut seeded(seed)).unwrap();
            let mut mapped = net.clone();
            let last = mapped.n_layers() - 1;
            let (w, b) = mapped.layer_mut(last);
            w.iter_mut().for_each(|v| *v *= scale);
            b.iter_mut().for_each(|v| *v = *v * scale + shift);
            let q = net.forward(&x).unwrap();
            let mut sorted = q.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted[2] - sorted[1] > 1e-9);
            prop_assert_eq!(QPolicy::new(net).unwrap().act(&x).unwrap(), QPolicy::new(mapped).unwrap().act(&x).unwrap());
        }
    }
}
