//! Dense networks with exact reverse-mode gradients, Adam, and target
//! updates.
//!
//! Layers are affine maps with an activation tag; gradients are computed by
//! hand per layer (this is the whole autodiff story: dense layers only, one
//! sample at a time). Serialization flattens each weight matrix row-major so
//! checkpoints are plain arrays plus shape metadata.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
    None,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `w[out][in]`
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

/// Fully-connected network. Construct with [`DenseNet::new`]; the
/// serialized form is `{sizes, activations, weights, biases}` with one flat
/// row-major weight array per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetSnapshot", try_from = "NetSnapshot")]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct NetSnapshot {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<DenseNet> for NetSnapshot {
    fn from(net: DenseNet) -> Self {
        NetSnapshot {
            sizes: net.sizes.clone(),
            activations: net.layers.iter().map(|l| l.act).collect(),
            weights: net
                .layers
                .iter()
                .map(|l| l.w.iter().flatten().copied().collect())
                .collect(),
            biases: net.layers.iter().map(|l| l.b.clone()).collect(),
        }
    }
}

impl TryFrom<NetSnapshot> for DenseNet {
    type Error = CoreError;

    fn try_from(snap: NetSnapshot) -> Result<Self> {
        let n_layers = snap.sizes.len().saturating_sub(1);
        if snap.activations.len() != n_layers
            || snap.weights.len() != n_layers
            || snap.biases.len() != n_layers
        {
            return Err(CoreError::DimensionMismatch {
                context: "net snapshot",
                expected: n_layers,
                got: snap.activations.len(),
            });
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (n_in, n_out) = (snap.sizes[l], snap.sizes[l + 1]);
            if snap.weights[l].len() != n_in * n_out || snap.biases[l].len() != n_out {
                return Err(CoreError::DimensionMismatch {
                    context: "net snapshot layer",
                    expected: n_in * n_out,
                    got: snap.weights[l].len(),
                });
            }
            layers.push(Layer {
                w: snap.weights[l].chunks(n_in).map(<[f64]>::to_vec).collect(),
                b: snap.biases[l].clone(),
                act: snap.activations[l],
            });
        }
        let net = DenseNet {
            sizes: snap.sizes,
            layers,
        };
        net.check_architecture()?;
        Ok(net)
    }
}

impl DenseNet {
    /// Random init: every weight and bias uniform in +-1/sqrt(fan_in), drawn
    /// layer by layer, weights row-major before biases.
    pub fn new(sizes: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::invalid("DenseNet", "need at least two layer sizes"));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(CoreError::DimensionMismatch {
                context: "activations",
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &act) in activations.iter().enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let scale = 1.0 / math::sqrt(n_in as f64);
            let mut draw = || rng.gen_range(-scale..scale);
            let w = (0..n_out)
                .map(|_| (0..n_in).map(|_| draw()).collect())
                .collect();
            let b = (0..n_out).map(|_| draw()).collect();
            layers.push(Layer { w, b, act });
        }
        let net = DenseNet {
            sizes: sizes.to_vec(),
            layers,
        };
        net.check_architecture()?;
        Ok(net)
    }

    /// All-zero parameters; used by tests that need hand-set weights.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(CoreError::invalid("DenseNet", "need at least two layer sizes"));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(CoreError::DimensionMismatch {
                context: "activations",
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        let layers = activations
            .iter()
            .enumerate()
            .map(|(l, &act)| Layer {
                w: vec![vec![0.0; sizes[l]]; sizes[l + 1]],
                b: vec![0.0; sizes[l + 1]],
                act,
            })
            .collect();
        let net = DenseNet {
            sizes: sizes.to_vec(),
            layers,
        };
        net.check_architecture()?;
        Ok(net)
    }

    fn check_architecture(&self) -> Result<()> {
        for (l, &size) in self.sizes.iter().enumerate() {
            if size == 0 {
                return Err(CoreError::IndexOutOfRange {
                    context: "layer size",
                    index: l,
                    len: 0,
                });
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.act == Activation::Softmax && l != self.layers.len() - 1 {
                return Err(CoreError::invalid(
                    "DenseNet",
                    alloc::format!("softmax at layer {l} is only allowed as the final activation"),
                ));
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty sizes")
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.sizes == other.sizes
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.act == b.act)
    }

    /// Affine + activation composition, keeping every intermediate for the
    /// backward pass.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(CoreError::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let z: Vec<f64> = layer
                .w
                .iter()
                .zip(&layer.b)
                .map(|(row, &b)| b + math::dot(row, &x))
                .collect();
            let y = match layer.act {
                Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                Activation::Tanh => z.iter().map(|&v| math::tanh(v)).collect(),
                Activation::Softmax => math::softmax(&z, 1.0),
                Activation::None => z.clone(),
            };
            inputs.push(x);
            preacts.push(z);
            outputs.push(y.clone());
            x = y;
        }
        Ok(ForwardCache {
            inputs,
            preacts,
            outputs,
        })
    }

    /// Output of a forward pass without keeping the cache.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.into_output())
    }

    /// Exact reverse-mode gradients for the scalar loss whose gradient with
    /// respect to the network output is `dout`. Parameter gradients
    /// accumulate into `grads`; the return value is the loss gradient with
    /// respect to the network input.
    ///
    /// The relu subgradient at exactly zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64], grads: &mut Grads) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.layers.len() {
            return Err(CoreError::DimensionMismatch {
                context: "backward cache",
                expected: self.layers.len(),
                got: cache.inputs.len(),
            });
        }
        if dout.len() != self.output_dim() || grads.w.len() != self.layers.len() {
            return Err(CoreError::DimensionMismatch {
                context: "backward output gradient",
                expected: self.output_dim(),
                got: dout.len(),
            });
        }
        let mut d = dout.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.preacts[l];
            let y = &cache.outputs[l];
            let x = &cache.inputs[l];
            let dz: Vec<f64> = match layer.act {
                Activation::Relu => d
                    .iter()
                    .zip(z)
                    .map(|(&g, &zv)| if zv > 0.0 { g } else { 0.0 })
                    .collect(),
                Activation::Tanh => d.iter().zip(y).map(|(&g, &yv)| g * (1.0 - yv * yv)).collect(),
                Activation::Softmax => {
                    let inner = math::dot(&d, y);
                    d.iter().zip(y).map(|(&g, &yv)| yv * (g - inner)).collect()
                }
                Activation::None => d.clone(),
            };
            for (o, &dzo) in dz.iter().enumerate() {
                let wrow = &mut grads.w[l][o];
                for (i, &xi) in x.iter().enumerate() {
                    wrow[i] += dzo * xi;
                }
                grads.b[l][o] += dzo;
            }
            let mut dx = vec![0.0; x.len()];
            for (o, &dzo) in dz.iter().enumerate() {
                for (i, &wv) in self.layers[l].w[o].iter().enumerate() {
                    dx[i] += wv * dzo;
                }
            }
            d = dx;
        }
        Ok(d)
    }

    /// Iterates all parameters as (layer, flat index within layer) for tests
    /// and finite differences; weights first, row-major, then biases.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() * l.w[0].len() + l.b.len())
            .sum()
    }

    pub fn param(&self, idx: usize) -> f64 {
        *self.locate(idx)
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        self.locate_mut(idx)
    }

    fn locate(&self, mut idx: usize) -> &f64 {
        for layer in &self.layers {
            let wn = layer.w.len() * layer.w[0].len();
            if idx < wn {
                let n_in = layer.w[0].len();
                return &layer.w[idx / n_in][idx % n_in];
            }
            idx -= wn;
            if idx < layer.b.len() {
                return &layer.b[idx];
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    fn locate_mut(&mut self, mut idx: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let wn = layer.w.len() * layer.w[0].len();
            if idx < wn {
                let n_in = layer.w[0].len();
                return &mut layer.w[idx / n_in][idx % n_in];
            }
            idx -= wn;
            if idx < layer.b.len() {
                return &mut layer.b[idx];
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Grad entry matching [`DenseNet::param`] indexing.
    pub fn grad_entry(grads: &Grads, net: &DenseNet, mut idx: usize) -> f64 {
        for (l, layer) in net.layers.iter().enumerate() {
            let wn = layer.w.len() * layer.w[0].len();
            if idx < wn {
                let n_in = layer.w[0].len();
                return grads.w[l][idx / n_in][idx % n_in];
            }
            idx -= wn;
            if idx < layer.b.len() {
                return grads.b[l][idx];
            }
            idx -= layer.b.len();
        }
        panic!("gradient index out of range");
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.outputs.pop().expect("at least one layer")
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    /// `w[layer][out][in]`
    pub w: Vec<Vec<Vec<f64>>>,
    /// `b[layer][out]`
    pub b: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Grads {
            w: net
                .layers
                .iter()
                .map(|l| vec![vec![0.0; l.w[0].len()]; l.w.len()])
                .collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for layer in &mut self.w {
            for row in layer {
                row.fill(0.0);
            }
        }
        for row in &mut self.b {
            row.fill(0.0);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.w {
            for row in layer {
                for g in row {
                    *g *= c;
                }
            }
        }
        for row in &mut self.b {
            for g in row {
                *g *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for layer in &self.w {
            for row in layer {
                for &g in row {
                    worst = worst.max(g.abs());
                }
            }
        }
        for row in &self.b {
            for &g in row {
                worst = worst.max(g.abs());
            }
        }
        worst
    }
}

/// Adam accumulators shaped like one network's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Grads,
    pub v: Grads,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        AdamState {
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction. Non-finite gradients abort with the
/// offending tensor named.
pub fn adam_step(net: &mut DenseNet, grads: &Grads, lr: f64, state: &mut AdamState) -> Result<()> {
    check_finite(grads)?;
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - pow_u64(state.beta1, t);
    let bc2 = 1.0 - pow_u64(state.beta2, t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
    };
    for (l, layer) in net.layers.iter_mut().enumerate() {
        for (o, row) in layer.w.iter_mut().enumerate() {
            for (i, p) in row.iter_mut().enumerate() {
                update(p, grads.w[l][o][i], &mut state.m.w[l][o][i], &mut state.v.w[l][o][i]);
            }
        }
        for (o, p) in layer.b.iter_mut().enumerate() {
            update(p, grads.b[l][o], &mut state.m.b[l][o], &mut state.v.b[l][o]);
        }
    }
    Ok(())
}

fn pow_u64(base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

fn check_finite(grads: &Grads) -> Result<()> {
    for (l, layer) in grads.w.iter().enumerate() {
        if layer.iter().flatten().any(|g| !g.is_finite()) {
            return Err(CoreError::InvalidArgument {
                context: "adam_step",
                detail: non_finite_msg("weights", l),
            });
        }
    }
    for (l, row) in grads.b.iter().enumerate() {
        if row.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::InvalidArgument {
                context: "adam_step",
                detail: non_finite_msg("biases", l),
            });
        }
    }
    Ok(())
}

fn non_finite_msg(tensor: &str, layer: usize) -> String {
    alloc::format!("non-finite gradient in layer {layer} {tensor}")
}

/// `target <- sigma * online + (1 - sigma) * target`, elementwise.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, sigma: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(CoreError::invalid("soft_update", "architecture mismatch"));
    }
    if !(0.0..=1.0).contains(&sigma) {
        return Err(CoreError::invalid("soft_update", "sigma outside [0, 1]"));
    }
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        for (tr, or) in tl.w.iter_mut().zip(&ol.w) {
            for (t, &o) in tr.iter_mut().zip(or) {
                *t = sigma * o + (1.0 - sigma) * *t;
            }
        }
        for (t, &o) in tl.b.iter_mut().zip(&ol.b) {
            *t = sigma * o + (1.0 - sigma) * *t;
        }
    }
    Ok(())
}

/// Full parameter copy.
pub fn hard_update(target: &mut DenseNet, online: &DenseNet) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(CoreError::invalid("hard_update", "architecture mismatch"));
    }
    target.layers.clone_from(&online.layers);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_net_with_relu_outputs_zero() {
        let net = DenseNet::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Relu]).unwrap();
        let out = net.infer(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_echoes_input() {
        let mut net = DenseNet::zeros(&[3, 3], &[Activation::None]).unwrap();
        for i in 0..3 {
            net.layers[0].w[i][i] = 1.0;
        }
        let x = [0.3, -1.5, 2.0];
        assert_eq!(net.infer(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn final_softmax_on_equal_logits_is_uniform() {
        let net = DenseNet::zeros(&[2, 2], &[Activation::Softmax]).unwrap();
        let out = net.infer(&[5.0, -3.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = DenseNet::zeros(&[3, 2], &[Activation::None]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn softmax_must_be_final() {
        let err = DenseNet::zeros(&[2, 2, 2], &[Activation::Softmax, Activation::None]);
        assert!(err.is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let net = DenseNet::new(&[3, 5, 2], &[Activation::Tanh, Activation::None], &mut rng(1)).unwrap();
        let cache = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let mut grads = Grads::zeros_like(&net);
        net.backward(&cache, &[0.0, 0.0], &mut grads).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = DenseNet::new(&[3, 2], &[Activation::None], &mut rng(2)).unwrap();
        let x = [0.5, -1.0, 2.0];
        let c = [0.7, -0.3];
        let cache = net.forward(&x).unwrap();
        let mut grads = Grads::zeros_like(&net);
        let dx = net.backward(&cache, &c, &mut grads).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.w[0][o][i], c[o] * x[i]);
            }
            assert_eq!(grads.b[0][o], c[o]);
        }
        for i in 0..3 {
            let expect: f64 = (0..2).map(|o| net.layers[0].w[o][i] * c[o]).sum();
            assert!((dx[i] - expect).abs() < 1e-15);
        }
    }

    /// Central finite differences on the scalar loss `sum(output * c)`.
    fn finite_difference_check(sizes: &[usize], acts: &[Activation], seed: u64) {
        let net = DenseNet::new(sizes, acts, &mut rng(seed)).unwrap();
        let mut r = rng(seed + 1000);
        let x: Vec<f64> = (0..sizes[0]).map(|_| r.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| r.gen_range(-1.0..1.0)).collect();

        let cache = net.forward(&x).unwrap();
        let mut grads = Grads::zeros_like(&net);
        net.backward(&cache, &c, &mut grads).unwrap();

        let loss = |net: &DenseNet| -> f64 { math::dot(&net.infer(&x).unwrap(), &c) };
        let h = 1e-5;
        for idx in 0..net.param_count() {
            let mut plus = net.clone();
            *plus.param_mut(idx) += h;
            let mut minus = net.clone();
            *minus.param_mut(idx) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = DenseNet::grad_entry(&grads, &net, idx);
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {idx}: analytic {an} vs fd {fd}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(&[4, 8, 8, 3], &[Activation::Relu, Activation::Relu, Activation::None], 7);
        finite_difference_check(&[4, 8, 8, 3], &[Activation::Tanh, Activation::Tanh, Activation::Softmax], 8);
        finite_difference_check(&[3, 6, 1], &[Activation::Relu, Activation::Tanh], 9);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut net = DenseNet::new(&[2, 3], &[Activation::None], &mut rng(3)).unwrap();
        let before = net.clone();
        let grads = Grads::zeros_like(&net);
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &grads, 3e-4, &mut state).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        let mut net = DenseNet::zeros(&[1, 1], &[Activation::None]).unwrap();
        let mut grads = Grads::zeros_like(&net);
        grads.w[0][0][0] = 1.0;
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &grads, 0.001, &mut state).unwrap();
        let expected = -0.001 * (1.0 / (1.0 + 1e-8));
        assert!((net.layers[0].w[0][0] - expected).abs() < 1e-18);
    }

    #[test]
    fn adam_moves_against_a_constant_gradient() {
        let mut net = DenseNet::zeros(&[1, 1], &[Activation::None]).unwrap();
        let mut grads = Grads::zeros_like(&net);
        grads.w[0][0][0] = 0.5;
        let mut state = AdamState::new(&net);
        for _ in 0..50 {
            adam_step(&mut net, &grads, 0.01, &mut state).unwrap();
        }
        assert!(net.layers[0].w[0][0] < -0.1);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut net = DenseNet::zeros(&[2, 2], &[Activation::None]).unwrap();
        let mut grads = Grads::zeros_like(&net);
        grads.b[0][0] = f64::NAN;
        let mut state = AdamState::new(&net);
        let err = adam_step(&mut net, &grads, 0.001, &mut state).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("layer 0 biases"), "{msg}");
    }

    #[test]
    fn soft_update_endpoints_and_rate() {
        let online = DenseNet::new(&[2, 3], &[Activation::Relu], &mut rng(4)).unwrap();
        let mut target = DenseNet::new(&[2, 3], &[Activation::Relu], &mut rng(5)).unwrap();

        let mut full = target.clone();
        soft_update(&mut full, &online, 1.0).unwrap();
        assert_eq!(full, online);

        let mut frozen = target.clone();
        soft_update(&mut frozen, &online, 0.0).unwrap();
        assert_eq!(frozen, target);

        let ones = {
            let mut n = DenseNet::zeros(&[2, 3], &[Activation::Relu]).unwrap();
            for row in &mut n.layers[0].w {
                row.fill(1.0);
            }
            n.layers[0].b.fill(1.0);
            n
        };
        let mut zero = DenseNet::zeros(&[2, 3], &[Activation::Relu]).unwrap();
        soft_update(&mut zero, &ones, 0.005).unwrap();
        assert_eq!(zero.layers[0].w[0][0], 0.005);

        // with the online net frozen the gap contracts geometrically
        let mut gap_prev = f64::INFINITY;
        for _ in 0..5 {
            soft_update(&mut target, &online, 0.3).unwrap();
            let gap: f64 = (0..target.param_count())
                .map(|i| (target.param(i) - online.param(i)).abs())
                .fold(0.0, f64::max);
            assert!(gap < gap_prev);
            gap_prev = gap;
        }
    }

    #[test]
    fn hard_update_makes_forwards_agree_bitwise() {
        let online = DenseNet::new(&[3, 4, 2], &[Activation::Tanh, Activation::None], &mut rng(6)).unwrap();
        let mut target = DenseNet::new(&[3, 4, 2], &[Activation::Tanh, Activation::None], &mut rng(7)).unwrap();
        hard_update(&mut target, &online).unwrap();
        let x = [0.1, -0.4, 0.9];
        assert_eq!(target.infer(&x).unwrap(), online.infer(&x).unwrap());
    }

    #[test]
    fn update_rejects_architecture_mismatch() {
        let a = DenseNet::zeros(&[2, 3], &[Activation::None]).unwrap();
        let mut b = DenseNet::zeros(&[2, 4], &[Activation::None]).unwrap();
        assert!(soft_update(&mut b, &a, 0.5).is_err());
        assert!(hard_update(&mut b, &a).is_err());
    }

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let a = DenseNet::new(&[4, 8, 2], &[Activation::Relu, Activation::None], &mut rng(42)).unwrap();
        let b = DenseNet::new(&[4, 8, 2], &[Activation::Relu, Activation::None], &mut rng(42)).unwrap();
        assert_eq!(a, b);
        let bound0 = 1.0 / math::sqrt(4.0);
        for row in &a.layers[0].w {
            for &w in row {
                assert!(w.abs() <= bound0);
            }
        }
        let bound1 = 1.0 / math::sqrt(8.0);
        for row in &a.layers[1].w {
            for &w in row {
                assert!(w.abs() <= bound1);
            }
        }
    }

    #[test]
    fn serde_round_trip_is_lossless() {
        let net = DenseNet::new(
            &[4, 8, 3],
            &[Activation::Relu, Activation::Softmax],
            &mut rng(11),
        )
        .unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: DenseNet = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
        let x = [0.2, -0.7, 1.3, 0.05];
        assert_eq!(net.infer(&x).unwrap(), back.infer(&x).unwrap());
    }

    #[test]
    fn snapshot_rejects_inconsistent_shapes() {
        let json = r#"{"sizes":[2,3],"activations":["none"],"weights":[[1,2,3,4,5]],"biases":[[0,0,0]]}"#;
        assert!(serde_json::from_str::<DenseNet>(json).is_err());
    }
}
