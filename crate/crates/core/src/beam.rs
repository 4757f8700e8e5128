//! Two-cell MISO downlink beamforming.
//!
//! Two `M`-antenna base stations each serve one single-antenna user and
//! interfere with each other's user. The module provides the achievable
//! rates, the MRT/ZF-combination rate-region oracle, a random-beam
//! brute-force region, phase ambiguity elimination (PAE) and
//! centralized-critic / decentralized-actor training.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{sigmoid, Activation, AdamConfig, AdamState, DenseNet, Gradients, NeuralError};
use crate::rng::{child_seed, seeded, LabRng};

/// Relative slack allowed on the per-BS power constraint.
pub const POWER_TOLERANCE: f64 = 1e-9;

const CHANNEL_STREAM: u64 = 0xBEA_0001;
const PHASE_STREAM: u64 = 0xBEA_0002;
const NOISE_STREAM: u64 = 0xBEA_0003;
const EVAL_PHASE_STREAM: u64 = 0xBEA_0004;

pub type CVec = Vec<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("beam {bs} power {power} exceeds budget {budget}")]
    PowerViolation { bs: usize, power: f64, budget: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("channel vector is zero")]
    ZeroChannel,
    #[error("invalid channel: {0}")]
    Channel(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: critic loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// `aᴴb`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

fn scaled(a: &[Complex64], s: f64) -> CVec {
    a.iter().map(|x| x * s).collect()
}

/// Interleaves real and imaginary parts.
pub fn to_reals(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn from_reals(r: &[f64]) -> CVec {
    r.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Complex standard normal vector, `CN(0, I)`.
pub fn complex_normal(m: usize, rng: &mut LabRng) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..m)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect()
}

/// Channels of the two-cell interference channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisoChannel {
    pub m: usize,
    /// `h[j][k]` is the channel from BS `j` to user `k`.
    pub h: [[CVec; 2]; 2],
    pub noise_power: f64,
    pub power_budget: f64,
}

impl MisoChannel {
    pub fn new(h: [[CVec; 2]; 2], noise_power: f64, power_budget: f64) -> Result<Self, BeamError> {
        let m = h[0][0].len();
        if m < 2 {
            return Err(BeamError::Channel(format!("need M >= 2 antennas, got {m}")));
        }
        for v in h.iter().flatten() {
            if v.len() != m {
                return Err(BeamError::Dimension {
                    expected: m,
                    got: v.len(),
                });
            }
            if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(BeamError::Channel("non-finite entry".into()));
            }
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(BeamError::Channel(format!("noise power {noise_power}")));
        }
        if !(power_budget.is_finite() && power_budget > 0.0) {
            return Err(BeamError::Channel(format!("power budget {power_budget}")));
        }
        Ok(Self {
            m,
            h,
            noise_power,
            power_budget,
        })
    }

    /// I.i.d. `CN(0, 1)` channels, unit noise and `P = 10^(snr_db/10)`.
    pub fn random(m: usize, snr_db: f64, seed: u64) -> Result<Self, BeamError> {
        let mut rng = seeded(child_seed(seed, CHANNEL_STREAM));
        let mut draw = || complex_normal(m, &mut rng);
        let h = [[draw(), draw()], [draw(), draw()]];
        Self::new(h, 1.0, 10f64.powf(snr_db / 10.0))
    }

    /// Multiplies `h[j][k]` by `e^{i·phases[j][k]}`.
    pub fn rotated(&self, phases: &[[f64; 2]; 2]) -> Self {
        let mut out = self.clone();
        for (row, ph) in out.h.iter_mut().zip(phases) {
            for (h, &theta) in row.iter_mut().zip(ph) {
                let u = Complex64::from_polar(1.0, theta);
                h.iter_mut().for_each(|c| *c *= u);
            }
        }
        out
    }

    /// `log2(1 + P‖h_kk‖² / σ²)`.
    pub fn single_user_capacity(&self, k: usize) -> f64 {
        (1.0 + self.power_budget * norm_sqr(&self.h[k][k]) / self.noise_power).log2()
    }

    /// Observation of BS `j`: its channels to both users, real/imag
    /// interleaved, optionally phase-canonicalized.
    pub fn local_observation(&self, j: usize, pae_on: bool) -> Vec<f64> {
        let pair = [self.h[j][0].clone(), self.h[j][1].clone()];
        let pair = if pae_on { pae(&pair) } else { pair.to_vec() };
        pair.iter().flat_map(|v| to_reals(v)).collect()
    }

    /// All four channel vectors, ordered `h11, h12, h21, h22`.
    pub fn global_observation(&self, pae_on: bool) -> Vec<f64> {
        let all: Vec<CVec> = self.h.iter().flatten().cloned().collect();
        let all = if pae_on { pae(&all) } else { all };
        all.iter().flat_map(|v| to_reals(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub w: [CVec; 2],
}

impl BeamformerSet {
    pub fn zero(m: usize) -> Self {
        Self {
            w: [vec![Complex64::ZERO; m], vec![Complex64::ZERO; m]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub r1: f64,
    pub r2: f64,
}

impl RatePair {
    pub fn weighted(&self, alpha: f64) -> f64 {
        alpha * self.r1 + (1.0 - alpha) * self.r2
    }

    pub fn dominates(&self, other: &RatePair) -> bool {
        self.r1 >= other.r1 && self.r2 >= other.r2 && (self.r1 > other.r1 || self.r2 > other.r2)
    }

}

/// Achievable rates treating interference as noise.
pub fn rates(ch: &MisoChannel, bf: &BeamformerSet) -> Result<RatePair, BeamError> {
    for (bs, w) in bf.w.iter().enumerate() {
        if w.len() != ch.m {
            return Err(BeamError::Dimension {
                expected: ch.m,
                got: w.len(),
            });
        }
        let power = norm_sqr(w);
        if power > ch.power_budget * (1.0 + POWER_TOLERANCE) {
            return Err(BeamError::PowerViolation {
                bs,
                power,
                budget: ch.power_budget,
            });
        }
    }
    Ok(rates_unchecked(ch, &bf.w[0], &bf.w[1]))
}

fn rates_unchecked(ch: &MisoChannel, w1: &[Complex64], w2: &[Complex64]) -> RatePair {
    let rate = |k: usize, own: &[Complex64], other: &[Complex64]| {
        let j = 1 - k;
        let signal = inner(&ch.h[k][k], own).norm_sqr();
        let interference = inner(&ch.h[j][k], other).norm_sqr();
        (1.0 + signal / (ch.noise_power + interference)).log2()
    };
    RatePair {
        r1: rate(0, w1, w2),
        r2: rate(1, w2, w1),
    }
}

/// Maximum-ratio transmission at full power.
pub fn mrt(h_own: &[Complex64], power: f64) -> Result<CVec, BeamError> {
    let n = norm_sqr(h_own).sqrt();
    if n == 0.0 {
        return Err(BeamError::ZeroChannel);
    }
    Ok(scaled(h_own, power.sqrt() / n))
}

/// Full-power beam along the part of `h_own` orthogonal to `h_cross`.
/// Returns the zero vector when the two channels are parallel.
pub fn zf(h_own: &[Complex64], h_cross: &[Complex64], power: f64) -> Result<CVec, BeamError> {
    let own_n2 = norm_sqr(h_own);
    let cross_n2 = norm_sqr(h_cross);
    if own_n2 == 0.0 || cross_n2 == 0.0 {
        return Err(BeamError::ZeroChannel);
    }
    let coef = inner(h_cross, h_own) / cross_n2;
    let proj: CVec = h_own.iter().zip(h_cross).map(|(a, c)| a - c * coef).collect();
    let n2 = norm_sqr(&proj);
    if n2 <= 1e-24 * own_n2 {
        return Ok(vec![Complex64::ZERO; h_own.len()]);
    }
    Ok(scaled(&proj, (power / n2).sqrt()))
}

/// Phase ambiguity elimination: rotates each vector so its first nonzero
/// entry becomes real and nonnegative. Moduli are unchanged and the
/// operation is idempotent. All-zero vectors pass through.
pub fn pae(h_list: &[CVec]) -> Vec<CVec> {
    h_list.iter().map(|h| pae_one(h)).collect()
}

fn pae_one(h: &[Complex64]) -> CVec {
    let Some(r) = h.iter().find(|c| c.re != 0.0 || c.im != 0.0) else {
        return h.to_vec();
    };
    let n = r.norm();
    let u = r.conj() / n;
    h.iter()
        .map(|c| if std::ptr::eq(c, r) { Complex64::new(n, 0.0) } else { c * u })
        .collect()
}

/// One point of the oracle boundary. `None` marks a silent BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub rates: RatePair,
}

/// `√P·(λ·mrt + (1 − λ)·zf)/‖·‖`.
fn combined_beam(mrt_b: &[Complex64], zf_b: &[Complex64], lambda: f64, power: f64) -> CVec {
    let v: CVec = mrt_b
        .iter()
        .zip(zf_b)
        .map(|(a, b)| a * lambda + b * (1.0 - lambda))
        .collect();
    let n2 = norm_sqr(&v);
    if n2 == 0.0 {
        return v;
    }
    scaled(&v, (power / n2).sqrt())
}

/// Pareto boundary from the λ-grid MRT/ZF family plus single-user corners.
///
/// Falls back to [`sampled_boundary`] when a BS's own and cross channels are
/// parallel (no zero-forcing direction).
pub fn pareto_oracle(ch: &MisoChannel, grid_n: usize) -> Result<Vec<BoundaryPoint>, BeamError> {
    if grid_n < 2 {
        return Err(BeamError::Config(format!("grid_n must be >= 2, got {grid_n}")));
    }
    let p = ch.power_budget;
    let mrts = [mrt(&ch.h[0][0], p)?, mrt(&ch.h[1][1], p)?];
    let zfs = [zf(&ch.h[0][0], &ch.h[0][1], p)?, zf(&ch.h[1][1], &ch.h[1][0], p)?];
    if zfs.iter().any(|z| norm_sqr(z) == 0.0) {
        let pairs = sampled_boundary(ch, 1_000_000, 0)?;
        return Ok(pairs
            .into_iter()
            .map(|rates| BoundaryPoint {
                lambda1: None,
                lambda2: None,
                rates,
            })
            .collect());
    }
    let lambdas: Vec<f64> = (0..grid_n).map(|i| i as f64 / (grid_n - 1) as f64).collect();
    let beams: [Vec<CVec>; 2] = [0, 1].map(|j| {
        lambdas
            .iter()
            .map(|&l| combined_beam(&mrts[j], &zfs[j], l, p))
            .collect()
    });
    let mut points = Vec::with_capacity(grid_n * grid_n + 2);
    for (i1, w1) in beams[0].iter().enumerate() {
        for (i2, w2) in beams[1].iter().enumerate() {
            points.push(BoundaryPoint {
                lambda1: Some(lambdas[i1]),
                lambda2: Some(lambdas[i2]),
                rates: rates_unchecked(ch, w1, w2),
            });
        }
    }
    let silent = vec![Complex64::ZERO; ch.m];
    points.push(BoundaryPoint {
        lambda1: Some(1.0),
        lambda2: None,
        rates: rates_unchecked(ch, &mrts[0], &silent),
    });
    points.push(BoundaryPoint {
        lambda1: None,
        lambda2: Some(1.0),
        rates: rates_unchecked(ch, &silent, &mrts[1]),
    });
    Ok(pareto_filter_by(points, |p| p.rates))
}

/// Non-dominated subset sorted by ascending `r1` (so `r2` is
/// nonincreasing). Exact duplicates are kept once.
pub fn pareto_filter(points: Vec<RatePair>) -> Vec<RatePair> {
    pareto_filter_by(points, |p| *p)
}

fn pareto_filter_by<T, F: Fn(&T) -> RatePair>(mut points: Vec<T>, key: F) -> Vec<T> {
    points.sort_by(|a, b| {
        let (a, b) = (key(a), key(b));
        b.r1.total_cmp(&a.r1).then(b.r2.total_cmp(&a.r2))
    });
    let mut kept = Vec::new();
    let mut best_r2 = f64::NEG_INFINITY;
    for p in points {
        let r = key(&p);
        if r.r2 > best_r2 {
            best_r2 = r.r2;
            kept.push(p);
        }
    }
    kept.reverse();
    kept
}

/// Uniformly random beam direction with a uniform power fraction.
pub fn random_beam(m: usize, power: f64, rng: &mut LabRng) -> CVec {
    let d = complex_normal(m, rng);
    let frac: f64 = rng.random();
    let n2 = norm_sqr(&d);
    scaled(&d, (frac * power / n2).sqrt())
}

/// Uniformly random beam direction at full power.
pub fn random_full_power_beam(m: usize, power: f64, rng: &mut LabRng) -> CVec {
    let d = complex_normal(m, rng);
    let n2 = norm_sqr(&d);
    scaled(&d, (power / n2).sqrt())
}

/// Beams of one BS reduced to those not beaten on both own gain (higher)
/// and leakage (lower), as `(gain, leakage)` pairs.
fn gain_leakage_front(ch: &MisoChannel, j: usize, beams: &[CVec]) -> Vec<(f64, f64)> {
    let mut gl: Vec<(f64, f64)> = beams
        .iter()
        .map(|w| (inner(&ch.h[j][j], w).norm_sqr(), inner(&ch.h[j][1 - j], w).norm_sqr()))
        .collect();
    gl.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut front = Vec::new();
    let mut least_leak = f64::INFINITY;
    for p in gl {
        if p.1 < least_leak {
            least_leak = p.1;
            front.push(p);
        }
    }
    front
}

/// Pareto boundary of `n_pairs` random feasible beam pairs.
///
/// Each BS draws `√n_pairs` full-power directions (one of them replaced by
/// the silent beam) and every combination is evaluated, so the boundary sees
/// `n_pairs` distinct pairs. Beams beaten on both gain and leakage cannot
/// reach the boundary and are skipped before pairing.
pub fn sampled_boundary(ch: &MisoChannel, n_pairs: usize, seed: u64) -> Result<Vec<RatePair>, BeamError> {
    let per_bs = (n_pairs as f64).sqrt().ceil() as usize;
    if per_bs < 2 {
        return Err(BeamError::Config(format!("too few samples: {n_pairs}")));
    }
    let mut rng = seeded(seed);
    let silent = vec![Complex64::ZERO; ch.m];
    let mut beams: [Vec<CVec>; 2] = [vec![silent.clone()], vec![silent]];
    for list in beams.iter_mut() {
        for _ in 1..per_bs {
            list.push(random_full_power_beam(ch.m, ch.power_budget, &mut rng));
        }
    }
    let g1 = gain_leakage_front(ch, 0, &beams[0]);
    let g2 = gain_leakage_front(ch, 1, &beams[1]);
    let mut points = Vec::with_capacity(g1.len() * g2.len());
    for &(s1, leak1) in &g1 {
        for &(s2, leak2) in &g2 {
            points.push(RatePair {
                r1: (1.0 + s1 / (ch.noise_power + leak2)).log2(),
                r2: (1.0 + s2 / (ch.noise_power + leak1)).log2(),
            });
        }
    }
    Ok(pareto_filter(points))
}

/// Boundary of the region dominated by `points` as axis-aligned segments
/// `[x0, y0, x1, y1]`, from the `r2` axis to the `r1` axis.
fn staircase(points: &[RatePair]) -> Vec<[f64; 4]> {
    let front = pareto_filter(points.to_vec());
    let Some(first) = front.first() else {
        return vec![[0.0; 4]];
    };
    let mut segs = vec![[0.0, first.r2, first.r1, first.r2]];
    for w in front.windows(2) {
        segs.push([w[0].r1, w[0].r2, w[0].r1, w[1].r2]);
        segs.push([w[0].r1, w[1].r2, w[1].r1, w[1].r2]);
    }
    let last = front[front.len() - 1];
    segs.push([last.r1, last.r2, last.r1, 0.0]);
    segs
}

fn segment_distance(x: f64, y: f64, s: &[f64; 4]) -> f64 {
    let (dx, dy) = (s[2] - s[0], s[3] - s[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((x - s[0]) * dx + (y - s[1]) * dy) / l2).clamp(0.0, 1.0)
    };
    (x - s[0] - t * dx).hypot(y - s[1] - t * dy)
}

/// Spacing of the probe points along a boundary in [`hausdorff`].
pub const HAUSDORFF_STEP: f64 = 1e-3;

/// Symmetric Hausdorff distance between the boundaries of the regions
/// dominated by two point sets.
///
/// Each boundary is probed at points no more than [`HAUSDORFF_STEP`] apart,
/// so the result is exact to within half a step.
pub fn hausdorff(a: &[RatePair], b: &[RatePair]) -> f64 {
    let directed = |x: &[[f64; 4]], y: &[[f64; 4]]| {
        let mut worst: f64 = 0.0;
        for s in x {
            let len = (s[2] - s[0]).abs() + (s[3] - s[1]).abs();
            let n = (len / HAUSDORFF_STEP).ceil().max(1.0) as usize;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                let (px, py) = (s[0] + t * (s[2] - s[0]), s[1] + t * (s[3] - s[1]));
                let d = y.iter().map(|q| segment_distance(px, py, q)).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        worst
    };
    let (sa, sb) = (staircase(a), staircase(b));
    directed(&sa, &sb).max(directed(&sb, &sa))
}

/// Largest `α·r1 + (1 − α)·r2` over boundary points.
pub fn oracle_weighted_max(boundary: &[BoundaryPoint], alpha: f64) -> f64 {
    boundary
        .iter()
        .map(|p| p.rates.weighted(alpha))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maps `2M + 1` actor outputs to a feasible beam: the first `2M` values
/// give the direction, `sigmoid` of the last gives the power fraction.
pub fn beam_from_raw(raw: &[f64], power: f64) -> CVec {
    let m2 = raw.len() - 1;
    let dn = raw[..m2].iter().map(|x| x * x).sum::<f64>().sqrt();
    if dn == 0.0 {
        return vec![Complex64::ZERO; m2 / 2];
    }
    let amp = (sigmoid(raw[m2]) * power).sqrt();
    from_reals(&raw[..m2].iter().map(|x| amp * x / dn).collect::<Vec<_>>())
}

/// Pulls `dL/dw` (beam as interleaved reals) back to the raw outputs.
pub fn beam_backward(raw: &[f64], power: f64, grad_w: &[f64]) -> Vec<f64> {
    let m2 = raw.len() - 1;
    let d = &raw[..m2];
    let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = vec![0.0; raw.len()];
    if dn == 0.0 {
        return out;
    }
    let p = sigmoid(raw[m2]);
    let amp = (p * power).sqrt();
    let u_dot_g: f64 = d.iter().zip(grad_w).map(|(x, g)| x / dn * g).sum();
    for i in 0..m2 {
        out[i] = amp / dn * (grad_w[i] - d[i] / dn * u_dot_g);
    }
    // d√(pP)/dz = √P · √p · (1 − p) / 2
    out[m2] = power.sqrt() * p.sqrt() * (1.0 - p) / 2.0 * u_dot_g;
    out
}

/// Beam chosen by `actor` for a local observation.
pub fn actor_forward(actor: &DenseNet, local_obs: &[f64], power: f64) -> Result<CVec, BeamError> {
    let raw = actor.forward(local_obs)?;
    if raw.len() < 3 || raw.len() % 2 == 0 {
        return Err(BeamError::Config(format!(
            "actor must output 2M + 1 values, got {}",
            raw.len()
        )));
    }
    Ok(beam_from_raw(&raw, power))
}

/// Centralized-critic / decentralized-actor training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtdeConfig {
    /// Weight of user 1's rate in the shared reward.
    pub alpha: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub seed: u64,
    pub trace_every: usize,
    /// Phase-canonicalize channel inputs of actors and critic.
    pub pae: bool,
    /// Draw a fresh global phase for every channel vector of every sample.
    pub randomize_phase: bool,
    /// Phase draws averaged when reporting greedy rates with randomized
    /// phases.
    pub eval_phases: usize,
}

impl Default for CtdeConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            hidden_activation: Activation::Tanh,
            sigma_start: 0.1,
            sigma_end: 0.01,
            steps: 3000,
            batch_size: 32,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            seed: 0,
            trace_every: 50,
            pae: true,
            randomize_phase: true,
            eval_phases: 16,
        }
    }
}

impl CtdeConfig {
    pub fn validate(&self) -> Result<(), BeamError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(BeamError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.steps == 0 || self.batch_size == 0 || self.trace_every == 0 || self.eval_phases == 0 {
            return Err(BeamError::Config(
                "steps, batch_size, trace_every and eval_phases must be positive".into(),
            ));
        }
        for (name, v) in [("sigma_start", self.sigma_start), ("sigma_end", self.sigma_end)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(BeamError::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BeamError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(BeamError::Config("hidden layer of width 0".into()));
        }
        Ok(())
    }

    fn sigma_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.sigma_end;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        self.sigma_start + (self.sigma_end - self.sigma_start) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub rates: RatePair,
}

#[derive(Debug, Clone)]
pub struct CtdeRun {
    pub actors: [DenseNet; 2],
    pub critic: DenseNet,
    pub trace: Vec<TracePoint>,
    pub final_rates: RatePair,
}

fn mlp(input: usize, hidden: &[usize], output: usize, act: Activation, rng: &mut LabRng) -> Result<DenseNet, NeuralError> {
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(output);
    let mut acts = vec![act; hidden.len()];
    acts.push(Activation::Linear);
    DenseNet::new(&sizes, &acts, rng)
}

fn random_phases(rng: &mut LabRng) -> [[f64; 2]; 2] {
    let tau = std::f64::consts::TAU;
    [[rng.random::<f64>() * tau, rng.random::<f64>() * tau], [rng.random::<f64>() * tau, rng.random::<f64>() * tau]]
}

/// Trains two actors and one shared critic on one-step episodes over a
/// fixed channel, maximizing `α·r1 + (1 − α)·r2`.
///
/// Per step a batch of noisy actions is collected, the critic is regressed
/// on the observed rewards, and each actor ascends the critic's gradient
/// with respect to its own beam.
pub fn train_ctde(ch: &MisoChannel, cfg: &CtdeConfig) -> Result<CtdeRun, BeamError> {
    cfg.validate()?;
    let m = ch.m;
    let p = ch.power_budget;
    let mut init_rng = seeded(cfg.seed);
    let mut actors = [
        mlp(4 * m, &cfg.actor_hidden, 2 * m + 1, cfg.hidden_activation, &mut init_rng)?,
        mlp(4 * m, &cfg.actor_hidden, 2 * m + 1, cfg.hidden_activation, &mut init_rng)?,
    ];
    let mut critic = mlp(12 * m, &cfg.critic_hidden, 1, cfg.hidden_activation, &mut init_rng)?;
    let mut actor_opt = [
        AdamState::for_net(&actors[0], AdamConfig::with_lr(cfg.actor_lr)),
        AdamState::for_net(&actors[1], AdamConfig::with_lr(cfg.actor_lr)),
    ];
    let mut critic_opt = AdamState::for_net(&critic, AdamConfig::with_lr(cfg.critic_lr));
    let mut phase_rng = seeded(child_seed(cfg.seed, PHASE_STREAM));
    let mut noise_rng = seeded(child_seed(cfg.seed, NOISE_STREAM));
    let eval_channels = evaluation_channels(ch, cfg);

    let mut critic_grads = Gradients::zeros_like(&critic);
    let mut actor_grads = [Gradients::zeros_like(&actors[0]), Gradients::zeros_like(&actors[1])];
    let mut trace = Vec::new();
    let inv_b = 1.0 / cfg.batch_size as f64;

    for step in 0..cfg.steps {
        let sigma = cfg.sigma_at(step);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let sample = if cfg.randomize_phase {
                ch.rotated(&random_phases(&mut phase_rng))
            } else {
                ch.clone()
            };
            let obs = [sample.local_observation(0, cfg.pae), sample.local_observation(1, cfg.pae)];
            let mut beams: [CVec; 2] = Default::default();
            for j in 0..2 {
                let mut raw = actors[j].forward(&obs[j])?;
                for r in raw.iter_mut() {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    *r += sigma * z;
                }
                beams[j] = beam_from_raw(&raw, p);
            }
            let reward = rates_unchecked(&sample, &beams[0], &beams[1]).weighted(cfg.alpha);
            let global = sample.global_observation(cfg.pae);
            batch.push((obs, global, critic_input(&[], &beams), reward));
        }

        // critic regression
        critic_grads.fill_zero();
        let mut loss = 0.0;
        for (_, global, beam_part, reward) in &batch {
            let x = [global.as_slice(), beam_part.as_slice()].concat();
            let trace_c = critic.forward_trace(&x)?;
            let err = trace_c.output()[0] - reward;
            loss += err * err * inv_b;
            critic.backward_into(&trace_c, &[2.0 * err * inv_b], &mut critic_grads)?;
        }
        if !loss.is_finite() {
            return Err(BeamError::Diverged { step, loss });
        }
        critic_opt.step_net(&mut critic, &critic_grads)?;

        // actor ascent through the critic
        for g in actor_grads.iter_mut() {
            g.fill_zero();
        }
        for (obs, global, _, _) in &batch {
            let traces = [actors[0].forward_trace(&obs[0])?, actors[1].forward_trace(&obs[1])?];
            let raws = [traces[0].output().to_vec(), traces[1].output().to_vec()];
            let beams = [beam_from_raw(&raws[0], p), beam_from_raw(&raws[1], p)];
            let x = [global.as_slice(), critic_input(&[], &beams).as_slice()].concat();
            let (_, dq_dx) = critic.gradients(&x, &[1.0])?;
            let offset = global.len();
            for j in 0..2 {
                let start = offset + j * 2 * m;
                let dq_dw = &dq_dx[start..start + 2 * m];
                let dq_draw = beam_backward(&raws[j], p, dq_dw);
                let descent: Vec<f64> = dq_draw.iter().map(|g| -g * inv_b).collect();
                actors[j].backward_into(&traces[j], &descent, &mut actor_grads[j])?;
            }
        }
        for j in 0..2 {
            actor_opt[j].step_net(&mut actors[j], &actor_grads[j])?;
        }

        if step % cfg.trace_every == 0 || step + 1 == cfg.steps {
            trace.push(TracePoint {
                step,
                rates: greedy_rates(&actors, &eval_channels, cfg.pae)?,
            });
        }
    }
    let final_rates = trace.last().expect("at least one trace point").rates;
    Ok(CtdeRun {
        actors,
        critic,
        trace,
        final_rates,
    })
}

fn critic_input(prefix: &[f64], beams: &[CVec; 2]) -> Vec<f64> {
    let mut x = prefix.to_vec();
    x.extend(to_reals(&beams[0]));
    x.extend(to_reals(&beams[1]));
    x
}

/// Channels used to report greedy rates: the channel itself, or a fixed set
/// of phase-rotated copies when training randomizes phases.
fn evaluation_channels(ch: &MisoChannel, cfg: &CtdeConfig) -> Vec<MisoChannel> {
    if !cfg.randomize_phase {
        return vec![ch.clone()];
    }
    let mut rng = seeded(child_seed(cfg.seed, EVAL_PHASE_STREAM));
    (0..cfg.eval_phases)
        .map(|_| ch.rotated(&random_phases(&mut rng)))
        .collect()
}

/// Mean noiseless rates of the actors over `channels`.
pub fn greedy_rates(actors: &[DenseNet; 2], channels: &[MisoChannel], pae_on: bool) -> Result<RatePair, BeamError> {
    let mut sum = RatePair { r1: 0.0, r2: 0.0 };
    for ch in channels {
        let w1 = actor_forward(&actors[0], &ch.local_observation(0, pae_on), ch.power_budget)?;
        let w2 = actor_forward(&actors[1], &ch.local_observation(1, pae_on), ch.power_budget)?;
        let r = rates(ch, &BeamformerSet { w: [w1, w2] })?;
        sum.r1 += r.r1;
        sum.r2 += r.r2;
    }
    let n = channels.len() as f64;
    Ok(RatePair {
        r1: sum.r1 / n,
        r2: sum.r2 / n,
    })
}

#[derive(Debug, Clone)]
pub struct AlphaRun {
    pub alpha: f64,
    pub pae: bool,
    pub trace: Vec<TracePoint>,
    pub final_rates: RatePair,
}

#[derive(Debug, Clone)]
pub struct AlphaSweep {
    pub boundary: Vec<BoundaryPoint>,
    pub runs: Vec<AlphaRun>,
}

/// Trains one actor pair per α and pairs the learned rates with the oracle
/// boundary.
pub fn sweep_alpha(
    ch: &MisoChannel,
    alphas: &[f64],
    cfg: &CtdeConfig,
    with_pae: bool,
    grid_n: usize,
) -> Result<AlphaSweep, BeamError> {
    let boundary = pareto_oracle(ch, grid_n)?;
    let mut runs = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let run_cfg = CtdeConfig {
            alpha,
            pae: with_pae,
            ..cfg.clone()
        };
        let run = train_ctde(ch, &run_cfg)?;
        runs.push(AlphaRun {
            alpha,
            pae: with_pae,
            trace: run.trace,
            final_rates: run.final_rates,
        });
    }
    Ok(AlphaSweep { boundary, runs })
}
