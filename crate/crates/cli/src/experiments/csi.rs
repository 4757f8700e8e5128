//! CSI compression: autoencoder against the principal-component baseline
//! over a grid of latent sizes and bit widths.

use ranlab::csi::{
    linear_baseline, metrics_csv, sample_channels, split_dataset, train_autoencoder, write_feedback, CsiError,
    FeedbackRecord, ReconMetrics,
};

use super::{mean, Artifact, ExperimentError, SeedOutput};
use crate::config::CsiSection;
use crate::report::{num, xy_chart, Csv, Series};

/// Held-out quality of both codecs at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub latent_dim: usize,
    pub bits: u32,
    pub feedback_bits: usize,
    pub ae: ReconMetrics,
    pub linear: ReconMetrics,
}

pub fn run_seed(cfg: &CsiSection, seed: u64) -> Result<SeedOutput<Vec<RdPoint>>, ExperimentError> {
    let wrap = |source: CsiError| ExperimentError::Csi { seed, source };
    let data = sample_channels(cfg.n_samples, cfg.n_tx, cfg.n_paths, seed).map_err(wrap)?;
    let (train, val) = split_dataset(&data).map_err(wrap)?;
    let mut artifacts = Vec::new();
    let mut points = Vec::new();
    for &bits in &cfg.bits {
        for &latent_dim in &cfg.latent_dims {
            let trained = train_autoencoder(&data, &cfg.ae_config(latent_dim, bits), cfg.epochs, seed).map_err(wrap)?;
            let tag = format!("csi_seed{seed}_l{latent_dim}_b{bits}");
            artifacts.push(Artifact::new(format!("{tag}_metrics.csv"), metrics_csv(&trained.history)));
            let records = val
                .iter()
                .take(cfg.feedback_records)
                .enumerate()
                .map(|(i, s)| {
                    Ok(FeedbackRecord {
                        sample_id: train.len() + i,
                        codes: trained.ae.encode(&s.h)?,
                    })
                })
                .collect::<Result<Vec<_>, CsiError>>()
                .map_err(wrap)?;
            let mut buf = Vec::new();
            write_feedback(&records, &mut buf).map_err(wrap)?;
            artifacts.push(Artifact::new(
                format!("{tag}_feedback.jsonl"),
                String::from_utf8(buf).expect("jsonl is utf-8"),
            ));
            points.push(RdPoint {
                latent_dim,
                bits,
                feedback_bits: trained.ae.feedback_bits(),
                ae: trained.ae.evaluate(val).map_err(wrap)?,
                linear: linear_baseline(&data, latent_dim, bits).map_err(wrap)?,
            });
        }
    }
    let mut csv = rd_table();
    for p in &points {
        csv.row(&rd_row(&seed.to_string(), p));
    }
    artifacts.push(Artifact::new(format!("csi_seed{seed}_rate_distortion.csv"), csv.into_string()));
    Ok(SeedOutput {
        seed,
        artifacts,
        summary: points,
    })
}

fn rd_table() -> Csv {
    Csv::new(&[
        "seed",
        "latent_dim",
        "bits",
        "feedback_bits",
        "ae_nmse_db",
        "ae_cosine",
        "linear_nmse_db",
        "linear_cosine",
    ])
}

fn rd_row(seed: &str, p: &RdPoint) -> Vec<String> {
    vec![
        seed.to_string(),
        p.latent_dim.to_string(),
        p.bits.to_string(),
        p.feedback_bits.to_string(),
        num(p.ae.nmse_db),
        num(p.ae.cosine_similarity),
        num(p.linear.nmse_db),
        num(p.linear.cosine_similarity),
    ]
}

/// Seed-averaged metrics per operating point, in configuration order.
pub fn average(outputs: &[SeedOutput<Vec<RdPoint>>]) -> Vec<RdPoint> {
    let Some(first) = outputs.first() else {
        return Vec::new();
    };
    first
        .summary
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let all = || outputs.iter().map(move |o| &o.summary[i]);
            RdPoint {
                ae: ReconMetrics {
                    nmse_db: mean(all().map(|x| x.ae.nmse_db)),
                    cosine_similarity: mean(all().map(|x| x.ae.cosine_similarity)),
                },
                linear: ReconMetrics {
                    nmse_db: mean(all().map(|x| x.linear.nmse_db)),
                    cosine_similarity: mean(all().map(|x| x.linear.cosine_similarity)),
                },
                ..*p
            }
        })
        .collect()
}

pub fn aggregate(outputs: &[SeedOutput<Vec<RdPoint>>]) -> Vec<Artifact> {
    let avg = average(outputs);
    let mut csv = rd_table();
    for p in &avg {
        csv.row(&rd_row("mean", p));
    }
    let mut bits: Vec<u32> = avg.iter().map(|p| p.bits).collect();
    bits.sort_unstable();
    bits.dedup();
    let mut series = Vec::new();
    for &b in &bits {
        let mut pts: Vec<&RdPoint> = avg.iter().filter(|p| p.bits == b).collect();
        pts.sort_by_key(|p| p.feedback_bits);
        series.push(Series {
            label: format!("autoencoder B={b}"),
            points: pts.iter().map(|p| (p.feedback_bits as f64, p.ae.nmse_db)).collect(),
            line: true,
            dashed: false,
            markers: true,
        });
        series.push(Series {
            label: format!("linear B={b}"),
            points: pts.iter().map(|p| (p.feedback_bits as f64, p.linear.nmse_db)).collect(),
            line: true,
            dashed: true,
            markers: true,
        });
    }
    let svg = xy_chart("CSI rate-distortion", "feedback bits", "NMSE (dB)", &series);
    vec![
        Artifact::new("csi_aggregate.csv", csv.into_string()),
        Artifact::new("csi_rate_distortion.svg", svg),
    ]
}
