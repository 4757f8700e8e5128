//! Autoencoder CSI compression.
//!
//! The UE encodes its channel estimate into `latent_dim` quantized values of
//! `bits` bits each; the base station decodes the codes back to a channel.
//! A truncated principal-component projection with the same quantizer serves
//! as a fixed-budget linear reference.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{complex_normal, from_reals, to_reals};
use crate::neural::{Activation, AdamConfig, AdamState, DenseNet, Gradients, NeuralError, UniformQuantizer};
use crate::rng::{child_seed, seeded, shuffle};

/// Lowest NMSE reported, in dB.
pub const NMSE_FLOOR_DB: f64 = -100.0;
/// Fraction of a dataset used for training; the tail is held out.
pub const TRAIN_FRACTION: f64 = 0.9;
/// Candidate quantizer half-ranges for principal coefficients, in units of
/// the coefficient's standard deviation. The largest training magnitude is
/// always a candidate as well.
pub const LINEAR_LOADINGS: [f64; 6] = [1.5, 2.0, 2.5, 3.0, 4.0, 5.0];

const SHUFFLE_STREAM: u64 = 0xC51_0001;

#[derive(Debug, Error)]
pub enum CsiError {
    #[error("invalid size: {0}")]
    Size(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("malformed feedback record: {0}")]
    Format(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiSample {
    pub h: Vec<Complex64>,
}

impl CsiSample {
    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn power(&self) -> f64 {
        self.h.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Half-wavelength ULA response `e^{iπ m sin θ}`.
pub fn steering_vector(n_tx: usize, theta: f64) -> Vec<Complex64> {
    let phase = std::f64::consts::PI * theta.sin();
    (0..n_tx)
        .map(|m| Complex64::from_polar(1.0, phase * m as f64))
        .collect()
}

/// Few-path geometric channels `Σ_p g_p·a(θ_p)` with `θ_p` uniform on
/// `[−π/2, π/2]` and `g_p ~ CN(0, 1/n_paths)`, rescaled so the dataset's
/// mean power per antenna is exactly one.
pub fn sample_channels(n: usize, n_tx: usize, n_paths: usize, seed: u64) -> Result<Vec<CsiSample>, CsiError> {
    if n == 0 || n_tx == 0 || n_paths == 0 {
        return Err(CsiError::Size(format!(
            "n={n}, n_tx={n_tx}, n_paths={n_paths} must all be positive"
        )));
    }
    let mut rng = seeded(seed);
    let path_scale = (1.0 / n_paths as f64).sqrt();
    let mut data: Vec<CsiSample> = (0..n)
        .map(|_| {
            let mut h = vec![Complex64::ZERO; n_tx];
            for _ in 0..n_paths {
                let theta = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
                let g = complex_normal(1, &mut rng)[0] * path_scale;
                for (hm, a) in h.iter_mut().zip(steering_vector(n_tx, theta)) {
                    *hm += g * a;
                }
            }
            CsiSample { h }
        })
        .collect();
    let mean_power = data.iter().map(CsiSample::power).sum::<f64>() / (n * n_tx) as f64;
    if !(mean_power > 0.0 && mean_power.is_finite()) {
        return Err(CsiError::Size(format!("degenerate dataset power {mean_power}")));
    }
    let s = mean_power.sqrt().recip();
    for sample in &mut data {
        sample.h.iter_mut().for_each(|c| *c *= s);
    }
    Ok(data)
}

/// Splits at [`TRAIN_FRACTION`]: leading samples train, the rest validate.
/// Both parts are nonempty whenever the dataset has two or more samples.
pub fn split_dataset(data: &[CsiSample]) -> Result<(&[CsiSample], &[CsiSample]), CsiError> {
    if data.len() < 2 {
        return Err(CsiError::EmptyDataset);
    }
    let cut = ((data.len() as f64 * TRAIN_FRACTION).round() as usize).clamp(1, data.len() - 1);
    Ok(data.split_at(cut))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    pub nmse_db: f64,
    pub cosine_similarity: f64,
}

/// `10·log10(Σ‖H − Ĥ‖² / Σ‖H‖²)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(h: &[&[Complex64]], h_hat: &[&[Complex64]]) -> f64 {
    let mut err = 0.0;
    let mut power = 0.0;
    for (a, b) in h.iter().zip(h_hat) {
        err += a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
        power += a.iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    if power == 0.0 {
        return 0.0;
    }
    let ratio = err / power;
    if ratio <= 0.0 {
        return NMSE_FLOOR_DB;
    }
    (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
}

/// `|HᴴĤ| / (‖H‖·‖Ĥ‖)`, or zero when either vector vanishes.
pub fn cosine_similarity(h: &[Complex64], h_hat: &[Complex64]) -> f64 {
    let dot: Complex64 = h.iter().zip(h_hat).map(|(a, b)| a.conj() * b).sum();
    let na = h.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let nb = h_hat.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot.norm() / (na * nb)).clamp(0.0, 1.0)
}

/// NMSE over the set and mean per-sample cosine similarity.
pub fn recon_metrics(h: &[&[Complex64]], h_hat: &[&[Complex64]]) -> ReconMetrics {
    let cos = if h.is_empty() {
        0.0
    } else {
        h.iter()
            .zip(h_hat)
            .map(|(a, b)| cosine_similarity(a, b))
            .sum::<f64>()
            / h.len() as f64
    };
    ReconMetrics {
        nmse_db: nmse_db(h, h_hat),
        cosine_similarity: cos,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub n_tx: usize,
    pub latent_dim: usize,
    pub bits: u32,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Encoder output activation; the quantizer spans `±latent_range`.
    pub latent_activation: Activation,
    pub latent_range: f64,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            n_tx: 32,
            latent_dim: 8,
            bits: 4,
            hidden: vec![128],
            hidden_activation: Activation::Relu,
            latent_activation: Activation::Tanh,
            latent_range: 1.0,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<(), CsiError> {
        if self.n_tx == 0 {
            return Err(CsiError::Config("n_tx must be positive".into()));
        }
        if self.latent_dim == 0 || self.latent_dim > 2 * self.n_tx {
            return Err(CsiError::Config(format!(
                "latent_dim must lie in 1..={}, got {}",
                2 * self.n_tx,
                self.latent_dim
            )));
        }
        if self.hidden.contains(&0) {
            return Err(CsiError::Config("hidden layer of width 0".into()));
        }
        if !(self.latent_range.is_finite() && self.latent_range > 0.0) {
            return Err(CsiError::Config(format!("latent_range {}", self.latent_range)));
        }
        if self.batch_size == 0 {
            return Err(CsiError::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CsiError::Config(format!("lr {}", self.lr)));
        }
        UniformQuantizer::new(self.bits, -self.latent_range, self.latent_range)?;
        Ok(())
    }
}

/// Encoder, quantizer and decoder. Only codes cross from encoder to decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: DenseNet,
    pub quantizer: UniformQuantizer,
    pub decoder: DenseNet,
}

impl Autoencoder {
    pub fn new(cfg: &AeConfig, seed: u64) -> Result<Self, CsiError> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let io = 2 * cfg.n_tx;
        let mut enc_sizes = vec![io];
        enc_sizes.extend(&cfg.hidden);
        enc_sizes.push(cfg.latent_dim);
        let mut enc_acts = vec![cfg.hidden_activation; cfg.hidden.len()];
        enc_acts.push(cfg.latent_activation);
        let dec_sizes: Vec<usize> = enc_sizes.iter().rev().copied().collect();
        let mut dec_acts = vec![cfg.hidden_activation; cfg.hidden.len()];
        dec_acts.push(Activation::Linear);
        Ok(Self {
            encoder: DenseNet::new(&enc_sizes, &enc_acts, &mut rng)?,
            quantizer: UniformQuantizer::new(cfg.bits, -cfg.latent_range, cfg.latent_range)?,
            decoder: DenseNet::new(&dec_sizes, &dec_acts, &mut rng)?,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.encoder.input_dim() / 2
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn feedback_bits(&self) -> usize {
        self.latent_dim() * self.quantizer.bits() as usize
    }

    pub fn encode(&self, h: &[Complex64]) -> Result<Vec<u32>, CsiError> {
        if h.len() != self.n_tx() {
            return Err(CsiError::Dimension {
                expected: self.n_tx(),
                got: h.len(),
            });
        }
        let z = self.encoder.forward(&to_reals(h))?;
        Ok(self.quantizer.quantize(&z).0)
    }

    pub fn decode(&self, codes: &[u32]) -> Result<Vec<Complex64>, CsiError> {
        if codes.len() != self.latent_dim() {
            return Err(CsiError::Dimension {
                expected: self.latent_dim(),
                got: codes.len(),
            });
        }
        let z = self.quantizer.dequantize(codes)?;
        Ok(from_reals(&self.decoder.forward(&z)?))
    }

    pub fn reconstruct(&self, h: &[Complex64]) -> Result<Vec<Complex64>, CsiError> {
        self.decode(&self.encode(h)?)
    }

    pub fn evaluate(&self, data: &[CsiSample]) -> Result<ReconMetrics, CsiError> {
        let rec: Vec<Vec<Complex64>> = data.iter().map(|s| self.reconstruct(&s.h)).collect::<Result<_, _>>()?;
        let h: Vec<&[Complex64]> = data.iter().map(|s| s.h.as_slice()).collect();
        let hh: Vec<&[Complex64]> = rec.iter().map(Vec::as_slice).collect();
        Ok(recon_metrics(&h, &hh))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean squared error per real dimension over the training split.
    pub train_loss: f64,
    pub validation: ReconMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainedAe {
    pub ae: Autoencoder,
    pub history: Vec<EpochMetrics>,
}

impl TrainedAe {
    pub fn final_metrics(&self) -> Option<ReconMetrics> {
        self.history.last().map(|e| e.validation)
    }
}

/// Minimizes reconstruction MSE through the quantizer with a straight-through
/// gradient; reports held-out metrics after every epoch.
pub fn train_autoencoder(data: &[CsiSample], cfg: &AeConfig, epochs: usize, seed: u64) -> Result<TrainedAe, CsiError> {
    if data.is_empty() {
        return Err(CsiError::EmptyDataset);
    }
    cfg.validate()?;
    if let Some(bad) = data.iter().find(|s| s.dim() != cfg.n_tx) {
        return Err(CsiError::Dimension {
            expected: cfg.n_tx,
            got: bad.dim(),
        });
    }
    let (train, val) = split_dataset(data)?;
    let mut ae = Autoencoder::new(cfg, seed)?;
    let mut enc_opt = AdamState::for_net(&ae.encoder, AdamConfig::with_lr(cfg.lr));
    let mut dec_opt = AdamState::for_net(&ae.decoder, AdamConfig::with_lr(cfg.lr));
    let mut enc_g = Gradients::zeros_like(&ae.encoder);
    let mut dec_g = Gradients::zeros_like(&ae.decoder);
    let inputs: Vec<Vec<f64>> = train.iter().map(|s| to_reals(&s.h)).collect();
    let dim = 2 * cfg.n_tx;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut rng = seeded(child_seed(seed, SHUFFLE_STREAM));
    let mut history = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            enc_g.fill_zero();
            dec_g.fill_zero();
            let scale = 2.0 / (batch.len() * dim) as f64;
            for &i in batch {
                let x = &inputs[i];
                let enc_t = ae.encoder.forward_trace(x)?;
                let z = enc_t.output();
                let (_, zq) = ae.quantizer.quantize(z);
                let dec_t = ae.decoder.forward_trace(&zq)?;
                let err: Vec<f64> = dec_t.output().iter().zip(x).map(|(a, b)| a - b).collect();
                loss_sum += err.iter().map(|e| e * e).sum::<f64>();
                let dy: Vec<f64> = err.iter().map(|e| e * scale).collect();
                let dzq = ae.decoder.backward_into(&dec_t, &dy, &mut dec_g)?;
                let dz = ae.quantizer.straight_through(z, &dzq);
                ae.encoder.backward_into(&enc_t, &dz, &mut enc_g)?;
            }
            enc_opt.step_net(&mut ae.encoder, &enc_g)?;
            dec_opt.step_net(&mut ae.decoder, &dec_g)?;
        }
        let train_loss = loss_sum / (inputs.len() * dim) as f64;
        if !train_loss.is_finite() {
            return Err(CsiError::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        history.push(EpochMetrics {
            epoch,
            train_loss,
            validation: ae.evaluate(val)?,
        });
    }
    Ok(TrainedAe { ae, history })
}

/// Truncated principal-component codec fitted on a training split.
#[derive(Debug, Clone)]
pub struct LinearCodec {
    /// Columns are the retained principal directions (real, `2·n_tx` rows).
    pub basis: DMatrix<f64>,
    pub quantizers: Vec<UniformQuantizer>,
}

impl LinearCodec {
    /// Uncentered second-moment eigenbasis. Each coefficient gets the
    /// quantizer range that minimizes its squared error on the training split.
    pub fn fit(train: &[CsiSample], latent_dim: usize, bits: u32) -> Result<Self, CsiError> {
        let first = train.first().ok_or(CsiError::EmptyDataset)?;
        let dim = 2 * first.dim();
        if latent_dim > dim {
            return Err(CsiError::Config(format!("latent_dim {latent_dim} exceeds {dim}")));
        }
        let mut xs = Vec::with_capacity(train.len());
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for s in train {
            if s.dim() != first.dim() {
                return Err(CsiError::Dimension {
                    expected: first.dim(),
                    got: s.dim(),
                });
            }
            let x = DVector::from_vec(to_reals(&s.h));
            cov.ger(1.0, &x, &x, 1.0);
            xs.push(x);
        }
        cov /= train.len() as f64;
        let eig = SymmetricEigen::new(cov);
        let mut idx: Vec<usize> = (0..dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let keep = &idx[..latent_dim];
        let basis = DMatrix::from_fn(dim, latent_dim, |r, c| eig.eigenvectors[(r, keep[c])]);
        let coeffs: Vec<DVector<f64>> = xs.iter().map(|x| basis.tr_mul(x)).collect();
        let quantizers = (0..latent_dim)
            .map(|i| {
                let col: Vec<f64> = coeffs.iter().map(|c| c[i]).collect();
                best_quantizer(&col, bits)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { basis, quantizers })
    }

    pub fn reconstruct(&self, h: &[Complex64]) -> Result<Vec<Complex64>, CsiError> {
        if 2 * h.len() != self.basis.nrows() {
            return Err(CsiError::Dimension {
                expected: self.basis.nrows() / 2,
                got: h.len(),
            });
        }
        let x = DVector::from_vec(to_reals(h));
        let coeffs = self.basis.tr_mul(&x);
        let q = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&self.quantizers).map(|(&c, qz)| qz.quantize(&[c]).1[0]),
        );
        let rec = &self.basis * q;
        Ok(from_reals(rec.as_slice()))
    }
}

fn best_quantizer(values: &[f64], bits: u32) -> Result<UniformQuantizer, CsiError> {
    let sigma = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut best: Option<(f64, UniformQuantizer)> = None;
    for range in LINEAR_LOADINGS.iter().map(|k| k * sigma).chain([peak]) {
        let range = range.max(f64::MIN_POSITIVE.sqrt());
        let q = UniformQuantizer::new(bits, -range, range)?;
        let err: f64 = values.iter().zip(q.quantize(values).1).map(|(v, r)| (v - r).powi(2)).sum();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, q));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Held-out metrics of the principal-component codec at the same bit budget.
pub fn linear_baseline(data: &[CsiSample], latent_dim: usize, bits: u32) -> Result<ReconMetrics, CsiError> {
    let (train, val) = split_dataset(data)?;
    let codec = LinearCodec::fit(train, latent_dim, bits)?;
    let rec: Vec<Vec<Complex64>> = val.iter().map(|s| codec.reconstruct(&s.h)).collect::<Result<_, _>>()?;
    let h: Vec<&[Complex64]> = val.iter().map(|s| s.h.as_slice()).collect();
    let hh: Vec<&[Complex64]> = rec.iter().map(Vec::as_slice).collect();
    Ok(recon_metrics(&h, &hh))
}

/// One feedback message as carried over the air.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub sample_id: usize,
    pub codes: Vec<u32>,
}

pub fn write_feedback<W: Write>(records: &[FeedbackRecord], mut out: W) -> Result<(), CsiError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| CsiError::Format(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_feedback<R: BufRead>(input: R) -> Result<Vec<FeedbackRecord>, CsiError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CsiError::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Per-epoch metrics as CSV with header `epoch,nmse_db,cosine`.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,nmse_db,cosine\n");
    for e in history {
        s.push_str(&format!(
            "{},{},{}\n",
            e.epoch, e.validation.nmse_db, e.validation.cosine_similarity
        ));
    }
    s
}
