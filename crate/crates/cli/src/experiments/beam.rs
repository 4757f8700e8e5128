//! Two-cell CTDE beamforming: an α sweep with PAE against the MRT–ZF oracle
//! boundary, plus a no-PAE comparison run.

use ranlab::beam::{
    hausdorff, oracle_weighted_max, pareto_oracle, sampled_boundary, train_ctde, BeamError, BoundaryPoint,
    MisoChannel, RatePair,
};
use ranlab::rng::child_seed;

use super::{mean, Artifact, ExperimentError, SeedOutput};
use crate::config::BeamSection;
use crate::report::{num, xy_chart, Csv, Series};

const BRUTE_FORCE_STREAM: u64 = 0xBEA_1001;

/// Final greedy rates of one trained actor pair against the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub alpha: f64,
    pub pae: bool,
    pub rates: RatePair,
    pub oracle_max: f64,
    pub capacity: [f64; 2],
}

impl RunSummary {
    pub fn weighted(&self) -> f64 {
        self.rates.weighted(self.alpha)
    }

    /// Gap between the oracle maximum and the achieved weighted sum.
    pub fn deficit(&self) -> f64 {
        self.oracle_max - self.weighted()
    }

    /// Rate of user `k` as a fraction of its single-user capacity.
    pub fn capacity_fraction(&self, k: usize) -> f64 {
        let r = if k == 0 { self.rates.r1 } else { self.rates.r2 };
        r / self.capacity[k]
    }
}

/// Everything one seed produced, for the aggregate and for tests.
#[derive(Debug, Clone)]
pub struct BeamSeed {
    pub runs: Vec<RunSummary>,
    pub boundary: Vec<BoundaryPoint>,
    /// Hausdorff distance to the brute-force boundary, when requested.
    pub brute_force_gap: Option<f64>,
}

/// Runs as (alpha, pae): the sweep with PAE, then the optional no-PAE run.
pub fn run_plan(cfg: &BeamSection) -> Vec<(f64, bool)> {
    let mut plan: Vec<(f64, bool)> = cfg.sweep_alphas.iter().map(|&a| (a, true)).collect();
    if cfg.compare_without_pae {
        if !plan.contains(&(cfg.alpha, true)) {
            plan.push((cfg.alpha, true));
        }
        plan.push((cfg.alpha, false));
    }
    plan
}

fn pae_flag(pae: bool) -> &'static str {
    if pae {
        "1"
    } else {
        "0"
    }
}

fn lambda(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn run_seed(cfg: &BeamSection, seed: u64) -> Result<SeedOutput<BeamSeed>, ExperimentError> {
    let wrap = |source: BeamError| ExperimentError::Beam { seed, source };
    let ch = MisoChannel::random(cfg.m, cfg.snr_db, seed).map_err(wrap)?;
    let boundary = pareto_oracle(&ch, cfg.grid_n).map_err(wrap)?;
    let capacity = [ch.single_user_capacity(0), ch.single_user_capacity(1)];

    let mut trajectory = Csv::new(&["alpha", "step", "r1", "r2", "pae_flag", "seed"]);
    let mut runs = Vec::new();
    for (alpha, pae) in run_plan(cfg) {
        let run = train_ctde(&ch, &cfg.ctde.to_config(alpha, pae, seed)).map_err(wrap)?;
        for p in &run.trace {
            trajectory.row(&[
                num(alpha),
                p.step.to_string(),
                num(p.rates.r1),
                num(p.rates.r2),
                pae_flag(pae).to_string(),
                seed.to_string(),
            ]);
        }
        runs.push(RunSummary {
            alpha,
            pae,
            rates: run.final_rates,
            oracle_max: oracle_weighted_max(&boundary, alpha),
            capacity,
        });
    }

    let brute_force_gap = if cfg.brute_force_pairs > 0 {
        let sampled = sampled_boundary(&ch, cfg.brute_force_pairs, child_seed(seed, BRUTE_FORCE_STREAM))
            .map_err(wrap)?;
        let oracle: Vec<RatePair> = boundary.iter().map(|b| b.rates).collect();
        Some(hausdorff(&oracle, &sampled))
    } else {
        None
    };

    let mut bcsv = Csv::new(&["lambda1", "lambda2", "r1", "r2"]);
    for b in &boundary {
        bcsv.row(&[lambda(b.lambda1), lambda(b.lambda2), num(b.rates.r1), num(b.rates.r2)]);
    }
    let mut summary = Csv::new(&[
        "seed", "alpha", "pae_flag", "r1", "r2", "weighted", "oracle_max", "deficit", "capacity1", "capacity2",
    ]);
    for r in &runs {
        summary.row(&[
            seed.to_string(),
            num(r.alpha),
            pae_flag(r.pae).to_string(),
            num(r.rates.r1),
            num(r.rates.r2),
            num(r.weighted()),
            num(r.oracle_max),
            num(r.deficit()),
            num(capacity[0]),
            num(capacity[1]),
        ]);
    }
    let mut artifacts = vec![
        Artifact::new(format!("beam_seed{seed}_trajectory.csv"), trajectory.into_string()),
        Artifact::new(format!("beam_seed{seed}_boundary.csv"), bcsv.into_string()),
        Artifact::new(format!("beam_seed{seed}_summary.csv"), summary.into_string()),
    ];
    if let Some(gap) = brute_force_gap {
        let mut c = Csv::new(&["seed", "n_pairs", "hausdorff"]);
        c.row(&[seed.to_string(), cfg.brute_force_pairs.to_string(), num(gap)]);
        artifacts.push(Artifact::new(format!("beam_seed{seed}_bruteforce.csv"), c.into_string()));
    }
    Ok(SeedOutput {
        seed,
        artifacts,
        summary: BeamSeed {
            runs,
            boundary,
            brute_force_gap,
        },
    })
}

/// Seed average of one (alpha, pae) run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedRun {
    pub alpha: f64,
    pub pae: bool,
    pub r1: f64,
    pub r2: f64,
    pub weighted: f64,
    pub oracle_max: f64,
    pub deficit: f64,
    /// Mean of achieved weighted sum over the oracle maximum.
    pub oracle_fraction: f64,
    pub capacity_fraction: [f64; 2],
}

pub fn average(outputs: &[SeedOutput<BeamSeed>]) -> Vec<AveragedRun> {
    let Some(first) = outputs.first() else {
        return Vec::new();
    };
    first
        .summary
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let all = || outputs.iter().map(move |o| &o.summary.runs[i]);
            AveragedRun {
                alpha: r.alpha,
                pae: r.pae,
                r1: mean(all().map(|x| x.rates.r1)),
                r2: mean(all().map(|x| x.rates.r2)),
                weighted: mean(all().map(|x| x.weighted())),
                oracle_max: mean(all().map(|x| x.oracle_max)),
                deficit: mean(all().map(|x| x.deficit())),
                oracle_fraction: mean(all().map(|x| x.weighted() / x.oracle_max)),
                capacity_fraction: [
                    mean(all().map(|x| x.capacity_fraction(0))),
                    mean(all().map(|x| x.capacity_fraction(1))),
                ],
            }
        })
        .collect()
}

pub fn aggregate(outputs: &[SeedOutput<BeamSeed>]) -> Vec<Artifact> {
    let mut csv = Csv::new(&[
        "alpha",
        "pae_flag",
        "r1",
        "r2",
        "weighted",
        "oracle_max",
        "deficit",
        "weighted_over_oracle",
        "r1_over_capacity1",
        "r2_over_capacity2",
        "n_seeds",
    ]);
    for a in average(outputs) {
        csv.row(&[
            num(a.alpha),
            pae_flag(a.pae).to_string(),
            num(a.r1),
            num(a.r2),
            num(a.weighted),
            num(a.oracle_max),
            num(a.deficit),
            num(a.oracle_fraction),
            num(a.capacity_fraction[0]),
            num(a.capacity_fraction[1]),
            outputs.len().to_string(),
        ]);
    }
    let mut artifacts = vec![Artifact::new("beam_aggregate.csv", csv.into_string())];
    if let Some(first) = outputs.first() {
        artifacts.push(Artifact::new("beam_region.svg", region_chart(first)));
    }
    artifacts
}

/// Rate region of one seed: oracle boundary with the learned points.
fn region_chart(out: &SeedOutput<BeamSeed>) -> String {
    let runs = &out.summary.runs;
    let points = |pae: bool| -> Vec<(f64, f64)> {
        runs.iter().filter(|r| r.pae == pae).map(|r| (r.rates.r1, r.rates.r2)).collect()
    };
    let mut series = vec![
        Series {
            label: "oracle boundary".into(),
            points: out.summary.boundary.iter().map(|b| (b.rates.r1, b.rates.r2)).collect(),
            line: true,
            dashed: false,
            markers: false,
        },
        Series {
            label: "CTDE with PAE".into(),
            points: points(true),
            line: false,
            dashed: false,
            markers: true,
        },
    ];
    let without = points(false);
    if !without.is_empty() {
        series.push(Series {
            label: "CTDE without PAE".into(),
            points: without,
            line: false,
            dashed: false,
            markers: true,
        });
    }
    xy_chart(
        &format!("Rate region, seed {}", out.seed),
        "r1 (bit/s/Hz)",
        "r2 (bit/s/Hz)",
        &series,
    )
}
