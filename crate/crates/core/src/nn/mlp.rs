use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Nonlinearity on the last layer.
///
/// `Squash` maps each output into `center ± half_range` with a scaled tanh,
/// which is how the actor is kept inside the bounding box of the action
/// embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Squash {
        center: Vec<f64>,
        half_range: Vec<f64>,
    },
}

impl OutputActivation {
    /// Squashing into the axis-aligned box `[low, high]`.
    pub fn squash_to_box(low: &[f64], high: &[f64]) -> Self {
        let center = low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect();
        let half_range = low.iter().zip(high).map(|(l, h)| 0.5 * (h - l)).collect();
        OutputActivation::Squash { center, half_range }
    }
}

/// Dense layer with row-major `outputs × inputs` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    #[inline]
    fn affine_into(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + dot(row, input);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fully connected feed-forward network in 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden: Activation,
    output: OutputActivation,
}

/// Intermediate values of one forward pass, consumed by backpropagation.
#[derive(Clone, Debug)]
pub struct Tape {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape has at least the input")
    }
}

/// Per-layer parameter gradients plus the gradient with respect to the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrad>,
    pub input: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradientBundle {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
            input: vec![0.0; net.input_size()],
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.params_mut().for_each(|g| *g *= factor);
        self.input.iter_mut().for_each(|g| *g *= factor);
    }

    /// Euclidean norm over parameter gradients (the input gradient excluded).
    pub fn param_norm(&self) -> f64 {
        self.params().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params().chain(self.input.iter()).all(|g| g.is_finite())
    }

    pub fn shape_matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self.input.len() == net.input_size()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len())
    }
}

impl Mlp {
    /// Network with every parameter set to zero.
    pub fn zeros(layer_sizes: &[usize], hidden: Activation, output: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output sizes"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if let OutputActivation::Squash { center, half_range } = &output {
            let out = *layer_sizes.last().unwrap();
            Error::check_dim("squash center", out, center.len())?;
            Error::check_dim("squash half-range", out, half_range.len())?;
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Mlp {
            layers,
            hidden,
            output,
        })
    }

    /// Weights and biases drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden: Activation,
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> &OutputActivation {
        &self.output
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameters in snapshot order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("network input", self.input_size(), input.len())?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            next.resize(layer.outputs, 0.0);
            layer.affine_into(&current, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = self.hidden.apply(*v));
            } else {
                self.apply_output(&mut next);
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    fn apply_output(&self, z: &mut [f64]) {
        if let OutputActivation::Squash { center, half_range } = &self.output {
            for ((v, c), h) in z.iter_mut().zip(center).zip(half_range) {
                *v = c + h * v.tanh();
            }
        }
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<Tape> {
        Error::check_dim("network input", self.input_size(), input.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.affine_into(activations.last().unwrap(), &mut z);
            let mut a = z.clone();
            if i < last {
                a.iter_mut().for_each(|v| *v = self.hidden.apply(*v));
            } else {
                self.apply_output(&mut a);
            }
            pre.push(z);
            activations.push(a);
        }
        Ok(Tape { activations, pre })
    }

    /// Exact gradients of `output · output_grad` with respect to every
    /// parameter and to the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<GradientBundle> {
        let tape = self.forward_tape(input)?;
        let mut grads = GradientBundle::zeros_like(self);
        self.accumulate_gradient(&tape, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's parameter gradients into `grads` and overwrites
    /// `grads.input` with the sample's input gradient.
    pub fn accumulate_gradient(
        &self,
        tape: &Tape,
        output_grad: &[f64],
        grads: &mut GradientBundle,
    ) -> Result<()> {
        Error::check_dim("output gradient", self.output_size(), output_grad.len())?;
        if !grads.shape_matches(self) {
            return Err(Error::invalid("gradient bundle does not match network shape"));
        }
        let last = self.layers.len() - 1;
        // delta = dL/dz for the current layer
        let mut delta: Vec<f64> = match &self.output {
            OutputActivation::Identity => output_grad.to_vec(),
            OutputActivation::Squash { half_range, .. } => output_grad
                .iter()
                .zip(&tape.pre[last])
                .zip(half_range)
                .map(|((g, z), h)| {
                    let t = z.tanh();
                    g * h * (1.0 - t * t)
                })
                .collect(),
        };
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &tape.activations[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                if *d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, x) in row.iter_mut().zip(input) {
                        *w += d * x;
                    }
                }
            }
            let mut upstream = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                if *d != 0.0 {
                    for (u, w) in upstream.iter_mut().zip(row) {
                        *u += d * w;
                    }
                }
            }
            if l > 0 {
                for ((u, z), y) in upstream
                    .iter_mut()
                    .zip(&tape.pre[l - 1])
                    .zip(&tape.activations[l])
                {
                    *u *= self.hidden.derivative(*z, *y);
                }
            }
            delta = upstream;
        }
        grads.input = delta;
        Ok(())
    }

    /// Evaluator that caches the first-layer contribution of a fixed input
    /// prefix, so many inputs `[prefix; suffix]` sharing the prefix can be
    /// evaluated cheaply. Used to score many candidate actions for one state.
    pub fn prefix_evaluator(&self, prefix: &[f64]) -> Result<PrefixEvaluator<'_>> {
        let first = &self.layers[0];
        if prefix.len() > first.inputs {
            return Err(Error::DimensionMismatch {
                what: "input prefix",
                expected: first.inputs,
                got: prefix.len(),
            });
        }
        let mut base = first.biases.clone();
        for (b, row) in base.iter_mut().zip(first.weights.chunks_exact(first.inputs)) {
            *b += dot(&row[..prefix.len()], prefix);
        }
        let width = self.layers.iter().map(|l| l.outputs).max().unwrap_or(0);
        Ok(PrefixEvaluator {
            net: self,
            prefix_len: prefix.len(),
            base,
            buf_a: vec![0.0; width],
            buf_b: vec![0.0; width],
        })
    }
}

pub struct PrefixEvaluator<'a> {
    net: &'a Mlp,
    prefix_len: usize,
    base: Vec<f64>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl PrefixEvaluator<'_> {
    pub fn eval(&mut self, suffix: &[f64]) -> Result<&[f64]> {
        let net = self.net;
        let first = &net.layers[0];
        Error::check_dim("input suffix", first.inputs - self.prefix_len, suffix.len())?;
        let last = net.layers.len() - 1;
        {
            let out = &mut self.buf_a[..first.outputs];
            for ((o, b), row) in out
                .iter_mut()
                .zip(&self.base)
                .zip(first.weights.chunks_exact(first.inputs))
            {
                *o = b + dot(&row[self.prefix_len..], suffix);
            }
            if last == 0 {
                net.apply_output(out);
                return Ok(&self.buf_a[..first.outputs]);
            }
            out.iter_mut().for_each(|v| *v = net.hidden.apply(*v));
        }
        let mut width = first.outputs;
        for (i, layer) in net.layers.iter().enumerate().skip(1) {
            let (src, dst) = (&self.buf_a[..width], &mut self.buf_b[..layer.outputs]);
            layer.affine_into(src, dst);
            if i < last {
                dst.iter_mut().for_each(|v| *v = net.hidden.apply(*v));
            } else {
                net.apply_output(dst);
            }
            std::mem::swap(&mut self.buf_a, &mut self.buf_b);
            width = layer.outputs;
        }
        Ok(&self.buf_a[..width])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_weight_net_outputs_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        net.layers_mut()[1].biases_mut().copy_from_slice(&[0.25, -1.5]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let mut net = Mlp::zeros(&[3, 3], Activation::Relu, OutputActivation::Identity).unwrap();
        for i in 0..3 {
            net.layers_mut()[0].weights_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.5, -7.0, 2.25];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn hand_computed_two_three_one() {
        // W1 = [[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]], b1 = [0.01, -0.02, 0.03]
        // W2 = [[0.7, -0.8, 0.9]], b2 = [0.05], tanh hidden
        let mut net = Mlp::zeros(&[2, 3, 1], Activation::Tanh, OutputActivation::Identity).unwrap();
        net.layers_mut()[0]
            .weights_mut()
            .copy_from_slice(&[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        net.layers_mut()[0].biases_mut().copy_from_slice(&[0.01, -0.02, 0.03]);
        net.layers_mut()[1].weights_mut().copy_from_slice(&[0.7, -0.8, 0.9]);
        net.layers_mut()[1].biases_mut().copy_from_slice(&[0.05]);
        // x = (1, 2): z1 = (-0.29, 1.08, 0.73)
        // tanh(z1) = (-0.2821348..., 0.7931991..., 0.6230653...)
        // y = 0.05 + 0.7*h1 - 0.8*h2 + 0.9*h3
        let h = [(-0.29f64).tanh(), 1.08f64.tanh(), 0.73f64.tanh()];
        let expected = 0.05 + 0.7 * h[0] - 0.8 * h[1] + 0.9 * h[2];
        let y = net.forward(&[1.0, 2.0]).unwrap()[0];
        assert!((y - expected).abs() < 1e-15);
        assert!((y - (-0.22129483)).abs() < 1e-7, "{y}");
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = Mlp::zeros(&[2, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1, .. })
        ));
    }

    #[test]
    fn constant_network_has_zero_input_gradient() {
        let mut net = Mlp::zeros(&[4, 5, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        net.layers_mut()[1].biases_mut()[0] = 3.0;
        let g = net.backward(&[1.0, 2.0, 3.0, 4.0], &[1.0]).unwrap();
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_output_grad_gives_zero_bundle() {
        let mut r = rng::stream(3, 0);
        let net = Mlp::new(&[3, 6, 2], Activation::Tanh, OutputActivation::Identity, &mut r).unwrap();
        let g = net.backward(&[0.3, -0.1, 0.8], &[0.0, 0.0]).unwrap();
        assert!(g.params().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn squash_output_stays_in_box() {
        let mut r = rng::stream(5, 0);
        let out = OutputActivation::squash_to_box(&[-2.0, 0.0], &[2.0, 1.0]);
        let net = Mlp::new(&[3, 8, 2], Activation::Relu, out, &mut r).unwrap();
        for i in 0..50 {
            let x = [i as f64 - 25.0, 10.0, -3.0 * i as f64];
            let y = net.forward(&x).unwrap();
            assert!((-2.0..=2.0).contains(&y[0]));
            assert!((0.0..=1.0).contains(&y[1]));
        }
    }

    #[test]
    fn prefix_evaluator_matches_full_forward() {
        let mut r = rng::stream(11, 0);
        let net = Mlp::new(&[5, 7, 6, 1], Activation::Relu, OutputActivation::Identity, &mut r).unwrap();
        let state = [0.1, -0.4, 0.9];
        let mut eval = net.prefix_evaluator(&state).unwrap();
        for a in [[0.0, 1.0], [-0.5, 0.25], [3.0, -2.0]] {
            let full: Vec<f64> = state.iter().chain(a.iter()).copied().collect();
            let expected = net.forward(&full).unwrap();
            let got = eval.eval(&a).unwrap();
            assert!((got[0] - expected[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_pure() {
        let mut r = rng::stream(2, 0);
        let net = Mlp::new(&[2, 4, 1], Activation::Relu, OutputActivation::Identity, &mut r).unwrap();
        let before = net.clone();
        let a = net.forward(&[0.5, 0.5]).unwrap();
        let b = net.forward(&[0.5, 0.5]).unwrap();
        assert_eq!(a, b);
        assert_eq!(net, before);
    }
}
