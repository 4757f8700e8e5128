//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! [`DenseNet`] is the shared function approximator for the tilt Q-network,
//! the beamforming actors and critic, and the CSI encoder/decoder. Weights
//! are stored row-major (`out × in`) per layer, which is also the checkpoint
//! layout.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::LabRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid quantizer: {0}")]
    Quantizer(String),
    #[error("code {code} out of range for {levels} levels")]
    CodeOutOfRange { code: u32, levels: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn check_len(expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected != got {
        return Err(NeuralError::Dimension { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network. `activations[l]` is applied after layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint")]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Unvalidated checkpoint contents.
#[derive(Deserialize)]
struct Checkpoint {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<Checkpoint> for DenseNet {
    type Error = NeuralError;

    fn try_from(c: Checkpoint) -> Result<Self, Self::Error> {
        DenseNet::from_parts(c.layer_sizes, c.activations, c.weights, c.biases)
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `outputs[0]` is the input; `outputs[l + 1]` the activation of layer `l`.
    outputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("trace holds the input")
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        let pairs = self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.biases.iter_mut().zip(&other.biases));
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// Flattened in the same order as [`DenseNet::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|&x| x == 0.0))
    }
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases.
    pub fn new(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut LabRng,
    ) -> Result<Self, NeuralError> {
        validate_arch(layer_sizes, activations)?;
        let mut weights = Vec::with_capacity(activations.len());
        let mut biases = Vec::with_capacity(activations.len());
        for l in 0..activations.len() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: activations.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a network from explicit row-major weights and biases.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, NeuralError> {
        validate_arch(&layer_sizes, &activations)?;
        if weights.len() != activations.len() || biases.len() != activations.len() {
            return Err(NeuralError::Architecture(format!(
                "{} layers but {} weight and {} bias blocks",
                activations.len(),
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..activations.len() {
            check_len(layer_sizes[l] * layer_sizes[l + 1], weights[l].len())?;
            check_len(layer_sizes[l + 1], biases[l].len())?;
        }
        if weights.iter().chain(&biases).flatten().any(|x| !x.is_finite()) {
            return Err(NeuralError::Architecture("non-finite parameter".into()));
        }
        Ok(Self {
            layer_sizes,
            activations,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated nonempty")
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        check_len(self.param_count(), flat.len())?;
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|p| {
                *p = it.next().expect("length checked");
            });
        }
        Ok(())
    }

    /// Mutable access to one layer's `(weights, biases)`.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[l], &mut self.biases[l])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        check_len(self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        for l in 0..self.n_layers() {
            let (_, next) = self.layer_forward(l, &a);
            a = next;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace, NeuralError> {
        check_len(self.input_dim(), x.len())?;
        let mut outputs = Vec::with_capacity(self.n_layers() + 1);
        let mut pre = Vec::with_capacity(self.n_layers());
        outputs.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (z, a) = self.layer_forward(l, &outputs[l]);
            pre.push(z);
            outputs.push(a);
        }
        Ok(ForwardTrace { outputs, pre })
    }

    fn layer_forward(&self, l: usize, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n_in = self.layer_sizes[l];
        let w = &self.weights[l];
        let act = self.activations[l];
        let z: Vec<f64> = self.biases[l]
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b + row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect();
        let a = z.iter().map(|&v| act.apply(v)).collect();
        (z, a)
    }

    /// Accumulates parameter gradients for one traced sample into `grads`
    /// and returns the gradient with respect to the input.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        dloss_dy: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>, NeuralError> {
        check_len(self.output_dim(), dloss_dy.len())?;
        let mut delta_out = dloss_dy.to_vec();
        for l in (0..self.n_layers()).rev() {
            let n_in = self.layer_sizes[l];
            let act = self.activations[l];
            let z = &trace.pre[l];
            let a = &trace.outputs[l + 1];
            let input = &trace.outputs[l];
            let delta: Vec<f64> = delta_out
                .iter()
                .zip(z.iter().zip(a))
                .map(|(&d, (&zv, &av))| d * act.derivative(zv, av))
                .collect();
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let mut delta_in = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * input[i];
                    delta_in[i] += d * row[i];
                }
            }
            delta_out = delta_in;
        }
        Ok(delta_out)
    }

    /// Gradients of a scalar loss for input `x`, given `dLoss/dy` at the
    /// output. Returns the parameter gradients and `dLoss/dx`.
    pub fn gradients(
        &self,
        x: &[f64],
        dloss_dy: &[f64],
    ) -> Result<(Gradients, Vec<f64>), NeuralError> {
        let trace = self.forward_trace(x)?;
        let mut grads = Gradients::zeros_like(self);
        let dx = self.backward_into(&trace, dloss_dy, &mut grads)?;
        Ok((grads, dx))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(s).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }
}

fn validate_arch(layer_sizes: &[usize], activations: &[Activation]) -> Result<(), NeuralError> {
    if layer_sizes.len() < 2 {
        return Err(NeuralError::Architecture(
            "need at least input and output sizes".into(),
        ));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(NeuralError::Architecture(format!(
            "{} layer sizes need {} activations, got {}",
            layer_sizes.len(),
            layer_sizes.len() - 1,
            activations.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(NeuralError::Architecture("zero-width layer".into()));
    }
    Ok(())
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn for_net(net: &DenseNet, config: AdamConfig) -> Self {
        Self::new(net.param_count(), config)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step on a flat parameter vector.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NeuralError> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grads.len())?;
        let (c1, c2) = self.advance();
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.update(i, p, g, c1, c2);
        }
        Ok(())
    }

    /// One descent step applied in place to a network.
    pub fn step_net(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NeuralError> {
        check_len(self.m.len(), net.param_count())?;
        let (c1, c2) = self.advance();
        let mut i = 0;
        for l in 0..net.n_layers() {
            let (w, b) = net.layer_mut(l);
            let gw = &grads.weights[l];
            let gb = &grads.biases[l];
            check_len(w.len(), gw.len())?;
            check_len(b.len(), gb.len())?;
            for (p, &g) in w.iter_mut().zip(gw).chain(b.iter_mut().zip(gb)) {
                self.update(i, p, g, c1, c2);
                i += 1;
            }
        }
        Ok(())
    }

    fn advance(&mut self) -> (f64, f64) {
        self.step += 1;
        let t = self.step as i32;
        (
            1.0 - self.config.beta1.powi(t),
            1.0 - self.config.beta2.powi(t),
        )
    }

    #[inline]
    fn update(&mut self, i: usize, p: &mut f64, g: f64, c1: f64, c2: f64) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
        self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
        let m_hat = self.m[i] / c1;
        let v_hat = self.v[i] / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Midrise uniform quantizer with `2^bits` levels over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformQuantizer {
    bits: u32,
    lo: f64,
    hi: f64,
}

impl UniformQuantizer {
    pub const MAX_BITS: u32 = 24;

    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self, NeuralError> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(NeuralError::Quantizer(format!(
                "bits must be in 1..={}, got {bits}",
                Self::MAX_BITS
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(NeuralError::Quantizer(format!("bad range [{lo}, {hi}]")));
        }
        Ok(Self { bits, lo, hi })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels() as f64
    }

    pub fn code(&self, x: f64) -> u32 {
        let max = (self.levels() - 1) as f64;
        let c = ((x.clamp(self.lo, self.hi) - self.lo) / self.step()).floor();
        c.clamp(0.0, max) as u32
    }

    pub fn level(&self, code: u32) -> Result<f64, NeuralError> {
        if u64::from(code) >= self.levels() {
            return Err(NeuralError::CodeOutOfRange {
                code,
                levels: self.levels(),
            });
        }
        Ok(self.lo + (code as f64 + 0.5) * self.step())
    }

    /// Codes and their reconstruction levels.
    pub fn quantize(&self, v: &[f64]) -> (Vec<u32>, Vec<f64>) {
        let codes: Vec<u32> = v.iter().map(|&x| self.code(x)).collect();
        let deq = codes
            .iter()
            .map(|&c| self.lo + (c as f64 + 0.5) * self.step())
            .collect();
        (codes, deq)
    }

    pub fn dequantize(&self, codes: &[u32]) -> Result<Vec<f64>, NeuralError> {
        codes.iter().map(|&c| self.level(c)).collect()
    }

    /// Straight-through gradient: identity inside the range, zero outside.
    pub fn straight_through(&self, v: &[f64], upstream: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(upstream)
            .map(|(&x, &g)| if x >= self.lo && x <= self.hi { g } else { 0.0 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn linear(w: Vec<f64>, b: Vec<f64>, n_in: usize, n_out: usize) -> DenseNet {
        DenseNet::from_parts(vec![n_in, n_out], vec![Activation::Linear], vec![w], vec![b]).unwrap()
    }

    #[test]
    fn identity_net() {
        let net = linear(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn affine_scalar() {
        let net = linear(vec![2.0], vec![1.0], 1, 1);
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn relu_kills_negative_preactivations() {
        let net = DenseNet::from_parts(
            vec![2, 3, 1],
            vec![Activation::Relu, Activation::Linear],
            vec![vec![-1.0; 6], vec![1.0; 3]],
            vec![vec![-0.5; 3], vec![0.0]],
        )
        .unwrap();
        let t = net.forward_trace(&[1.0, 2.0]).unwrap();
        assert_eq!(t.outputs[1], vec![0.0; 3]);
        assert_eq!(t.output(), &[0.0]);
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let net = linear(vec![2.0], vec![1.0], 1, 1);
        assert_eq!(
            net.forward(&[1.0, 2.0]),
            Err(NeuralError::Dimension {
                expected: 1,
                got: 2
            })
        );
        assert!(net.gradients(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let net = linear(vec![0.3, -0.2, 0.5, 0.7, 0.1, -0.4], vec![0.0; 2], 3, 2);
        let x = [1.0, -2.0, 0.5];
        let (g, dx) = net.gradients(&x, &[0.0, 1.0]).unwrap();
        assert_eq!(g.weights[0], vec![0.0, 0.0, 0.0, 1.0, -2.0, 0.5]);
        assert_eq!(g.biases[0], vec![0.0, 1.0]);
        assert_eq!(dx, vec![0.7, 0.1, -0.4]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(1);
        let net = DenseNet::new(
            &[4, 6, 3],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let (g, dx) = net.gradients(&[0.1, 0.2, -0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_architecture() {
        let mut rng = seeded(1);
        assert!(DenseNet::new(&[3], &[], &mut rng).is_err());
        assert!(DenseNet::new(&[3, 2], &[], &mut rng).is_err());
        assert!(DenseNet::new(&[3, 0, 2], &[Activation::Relu; 2], &mut rng).is_err());
        assert!(DenseNet::from_parts(vec![1, 1], vec![Activation::Linear], vec![vec![1.0, 2.0]], vec![vec![0.0]]).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = seeded(5);
        let net = DenseNet::new(&[10, 20], &[Activation::Linear], &mut rng).unwrap();
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(net.weights()[0].iter().all(|w| w.abs() <= limit));
        assert!(net.biases()[0].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn checkpoint_json_layout() {
        let net = linear(vec![1.5, -2.0], vec![0.25], 2, 1);
        let json = net.to_json();
        assert_eq!(
            json,
            r#"{"layer_sizes":[2,1],"activations":["linear"],"weights":[[1.5,-2.0]],"biases":[[0.25]]}"#
        );
        assert_eq!(DenseNet::from_json(&json).unwrap(), net);
        let bad = r#"{"layer_sizes":[2,1],"activations":["linear"],"weights":[[1.5]],"biases":[[0.25]]}"#;
        assert!(DenseNet::from_json(bad).is_err());
    }

    #[test]
    fn params_flat_roundtrip() {
        let mut rng = seeded(2);
        let mut net = DenseNet::new(&[3, 4, 2], &[Activation::Relu, Activation::Linear], &mut rng)
            .unwrap();
        let p = net.params();
        assert_eq!(p.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let doubled: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        net.set_params(&doubled).unwrap();
        assert_eq!(net.params(), doubled);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.0];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut st = AdamState::new(3, cfg);
        let mut p = vec![0.0; 3];
        st.step(&mut p, &[5.0, -0.2, 1e-3]).unwrap();
        assert_abs_diff_eq!(p[0], -0.01, epsilon = 1e-8);
        assert_abs_diff_eq!(p[1], 0.01, epsilon = 1e-8);
        assert_abs_diff_eq!(p[2], -0.01, epsilon = 1e-7);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut st = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0; 3];
        assert!(st.step(&mut p, &[0.0; 3]).is_err());
    }

    #[test]
    fn adam_scalar_quadratic() {
        // f(w) = (w - 3)^2, gradient 2(w - 3); the reference value comes from
        // an independent scalar Adam recurrence run in double precision.
        let mut st = AdamState::new(1, AdamConfig::with_lr(0.3));
        let mut w = [0.0];
        for _ in 0..100 {
            let g = [2.0 * (w[0] - 3.0)];
            st.step(&mut w, &g).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 1e-2, "w = {}", w[0]);
        assert_abs_diff_eq!(w[0], 2.99118997160107, epsilon = 1e-10);
    }

    #[test]
    fn adam_net_matches_flat() {
        let mut rng = seeded(4);
        let net = DenseNet::new(&[3, 5, 2], &[Activation::Tanh, Activation::Linear], &mut rng)
            .unwrap();
        let (g, _) = net.gradients(&[0.3, -0.1, 0.8], &[1.0, -0.5]).unwrap();
        let mut a = net.clone();
        let mut sa = AdamState::for_net(&a, AdamConfig::default());
        sa.step_net(&mut a, &g).unwrap();
        let mut flat = net.params();
        let mut sb = AdamState::new(flat.len(), AdamConfig::default());
        sb.step(&mut flat, &g.flatten()).unwrap();
        assert_eq!(a.params(), flat);
    }

    #[test]
    fn quantizer_examples() {
        let q = UniformQuantizer::new(2, -1.0, 1.0).unwrap();
        let (codes, deq) = q.quantize(&[0.3, 5.0, -5.0, -0.3]);
        assert_eq!(codes, vec![2, 3, 0, 1]);
        assert_eq!(deq, vec![0.25, 0.75, -0.75, -0.25]);
        assert_eq!(q.dequantize(&codes).unwrap(), deq);
        assert!(q.dequantize(&[4]).is_err());
    }

    #[test]
    fn quantizer_rejects_bad_config() {
        assert!(UniformQuantizer::new(0, -1.0, 1.0).is_err());
        assert!(UniformQuantizer::new(3, 1.0, 1.0).is_err());
        assert!(UniformQuantizer::new(3, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn straight_through_masks_out_of_range() {
        let q = UniformQuantizer::new(3, -1.0, 1.0).unwrap();
        let g = q.straight_through(&[0.5, 1.5, -1.0, -2.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g, vec![1.0, 0.0, 3.0, 0.0]);
    }
}
