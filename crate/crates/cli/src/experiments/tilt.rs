//! Offline tilt learning: log the ε-mixed rule, train DM and propensity-DM
//! Q-networks per feature count, and evaluate them against the rule.

use ranlab::network::{build_layout_with, CellDefaults, TiltBounds};
use ranlab::rng::child_seed;
use ranlab::tilt::{
    generate_log, initial_layout, mean_rollout_reward, train_dm, train_propensity_dm, FeatureCount, PolicyEvaluation, QPolicy,
    TiltEnv, TiltError, TiltPolicy, TrainConfig,
};

use super::{mean, Artifact, ExperimentError, SeedOutput};
use crate::config::TiltSection;
use crate::report::{grouped_bars, num, Csv};

const TRAIN_STREAM: u64 = 0x7117_0001;
const EVAL_STREAM: u64 = 0x7117_1000;

/// Offline learning scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Rule,
    Dm,
    PropensityDm,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rule => "rule",
            Scheme::Dm => "dm",
            Scheme::PropensityDm => "pdm",
        }
    }
}

/// Evaluated reward of one scheme at one feature count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub scheme: Scheme,
    pub features: usize,
    pub eval: PolicyEvaluation,
}

/// Builds the environment of one seed: a fresh layout and the configured
/// propagation, reward and rule settings.
pub fn environment(cfg: &TiltSection, seed: u64) -> Result<TiltEnv, ExperimentError> {
    let defaults = CellDefaults {
        tilt_bounds: TiltBounds {
            min: cfg.tilt_min,
            max: cfg.tilt_max,
        },
        ..CellDefaults::default()
    };
    let layout = build_layout_with(i64::from(cfg.n_rings), cfg.isd, seed, &defaults)
        .map_err(|source| ExperimentError::Network { seed, source })?;
    let mut env = TiltEnv::new(layout, cfg.propagation.clone(), cfg.n_users);
    env.tilt_step = cfg.tilt_step;
    env.reward = cfg.reward;
    env.rule = cfg.rule;
    Ok(env)
}

/// Evaluation seeds derived from the run seed.
pub fn eval_seeds(cfg: &TiltSection, seed: u64) -> Vec<u64> {
    (0..cfg.eval_seeds as u64).map(|i| child_seed(seed, EVAL_STREAM + i)).collect()
}

pub fn train_config(cfg: &TiltSection, feature_count: FeatureCount) -> TrainConfig {
    TrainConfig {
        feature_count,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr: cfg.train.lr,
        hidden: cfg.train.hidden.clone(),
        weight_cap: cfg.train.weight_cap,
    }
}

/// Mean greedy-rollout reward over the evaluation seeds, each starting
/// from its own random initial tilts.
pub fn evaluate(env: &TiltEnv, policy: &TiltPolicy, n_days: usize, seeds: &[u64]) -> Result<f64, TiltError> {
    let mut sum = 0.0;
    for &s in seeds {
        let start = initial_layout(env, s)?;
        sum += mean_rollout_reward(env, &start, policy, n_days, s)?;
    }
    Ok(sum / seeds.len() as f64)
}

fn scored(scheme: Scheme, features: usize, mean_reward: f64, baseline: f64) -> Score {
    Score {
        scheme,
        features,
        eval: PolicyEvaluation {
            mean_reward,
            baseline_mean_reward: baseline,
            gain_pct: 100.0 * (mean_reward - baseline) / baseline.abs(),
        },
    }
}

/// Full pipeline for one seed: scores sorted by (scheme, features) with the
/// rule baseline first.
pub fn run_seed(cfg: &TiltSection, seed: u64) -> Result<SeedOutput<Vec<Score>>, ExperimentError> {
    let wrap = |source: TiltError| ExperimentError::Tilt { seed, source };
    let env = environment(cfg, seed)?;
    let mut counts: Vec<FeatureCount> = cfg
        .feature_counts
        .iter()
        .map(|&n| FeatureCount::new(n))
        .collect::<Result<_, _>>()
        .map_err(wrap)?;
    counts.sort_unstable();
    counts.dedup();
    let widest = *counts.last().expect("validated nonempty");
    let log = generate_log(&env, cfg.epsilon, widest, cfg.log_days, seed).map_err(wrap)?;
    let evals = eval_seeds(cfg, seed);
    let train_seed = child_seed(seed, TRAIN_STREAM);

    let mut artifacts = Vec::new();
    let mut log_text = Vec::new();
    log.write_jsonl(&mut log_text).map_err(wrap)?;
    artifacts.push(Artifact::new(
        format!("tilt_seed{seed}_log.jsonl"),
        String::from_utf8(log_text).expect("jsonl is utf-8"),
    ));

    let base = evaluate(&env, &TiltPolicy::RuleBased(env.rule), cfg.eval_days, &evals).map_err(wrap)?;
    let mut scores = vec![scored(Scheme::Rule, FeatureCount::OWN.get(), base, base)];
    for &fc in &counts {
        let projected = log.project(fc).map_err(wrap)?;
        let tc = train_config(cfg, fc);
        for scheme in [Scheme::Dm, Scheme::PropensityDm] {
            let net = match scheme {
                Scheme::Dm => train_dm(&projected, &tc, train_seed),
                _ => train_propensity_dm(&projected, &tc, train_seed),
            }
            .map_err(wrap)?;
            artifacts.push(Artifact::new(
                format!("tilt_seed{seed}_{}{}.json", scheme.name(), fc.get()),
                net.to_json(),
            ));
            let policy = TiltPolicy::GreedyQ(QPolicy::new(net).map_err(wrap)?);
            let reward = evaluate(&env, &policy, cfg.eval_days, &evals).map_err(wrap)?;
            scores.push(scored(scheme, fc.get(), reward, base));
        }
    }
    scores.sort_by_key(|s| (s.scheme, s.features));

    let mut csv = Csv::new(&["seed", "scheme", "features", "mean_reward", "baseline_mean_reward", "gain_pct"]);
    for s in &scores {
        csv.row(&[
            seed.to_string(),
            s.scheme.name().to_string(),
            s.features.to_string(),
            num(s.eval.mean_reward),
            num(s.eval.baseline_mean_reward),
            num(s.eval.gain_pct),
        ]);
    }
    artifacts.push(Artifact::new(format!("tilt_seed{seed}_gain.csv"), csv.into_string()));
    Ok(SeedOutput {
        seed,
        artifacts,
        summary: scores,
    })
}

/// Seed-averaged score per (scheme, features). Gains are recomputed from
/// the averaged rewards.
pub fn average(outputs: &[SeedOutput<Vec<Score>>]) -> Vec<Score> {
    let Some(first) = outputs.first() else {
        return Vec::new();
    };
    first
        .summary
        .iter()
        .map(|s| {
            let same = || {
                outputs
                    .iter()
                    .flat_map(|o| o.summary.iter())
                    .filter(move |x| x.scheme == s.scheme && x.features == s.features)
            };
            let m = mean(same().map(|x| x.eval.mean_reward));
            let b = mean(same().map(|x| x.eval.baseline_mean_reward));
            scored(s.scheme, s.features, m, b)
        })
        .collect()
}

pub fn aggregate(outputs: &[SeedOutput<Vec<Score>>]) -> Vec<Artifact> {
    let avg = average(outputs);
    let mut csv = Csv::new(&["scheme", "features", "mean_reward", "baseline_mean_reward", "gain_pct", "n_seeds"]);
    for s in &avg {
        csv.row(&[
            s.scheme.name().to_string(),
            s.features.to_string(),
            num(s.eval.mean_reward),
            num(s.eval.baseline_mean_reward),
            num(s.eval.gain_pct),
            outputs.len().to_string(),
        ]);
    }
    let mut features: Vec<usize> = avg.iter().filter(|s| s.scheme != Scheme::Rule).map(|s| s.features).collect();
    features.sort_unstable();
    features.dedup();
    let groups: Vec<String> = features.iter().map(|f| format!("{f} features")).collect();
    let series = [Scheme::Dm, Scheme::PropensityDm];
    let values: Vec<Vec<f64>> = series
        .iter()
        .map(|&sc| {
            features
                .iter()
                .map(|&f| {
                    avg.iter()
                        .find(|s| s.scheme == sc && s.features == f)
                        .map_or(f64::NAN, |s| s.eval.gain_pct)
                })
                .collect()
        })
        .collect();
    let svg = grouped_bars(
        "Gain over the rule-based policy",
        "gain (%)",
        &groups,
        &["DM".to_string(), "propensity DM".to_string()],
        &values,
    );
    vec![
        Artifact::new("tilt_aggregate.csv", csv.into_string()),
        Artifact::new("tilt_gain.svg", svg),
    ]
}
