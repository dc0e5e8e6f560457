//! Leaky integrate-and-fire networks and the pilot hypernetwork.
//!
//! Each layer holds a weight matrix of shape `out x in`, a membrane decay
//! `beta` and a firing threshold. Per step the pre-reset potential is
//! `beta * v + W * input`; neurons at or above threshold emit a spike and are
//! reset to zero. The first layer of a network is driven by real-valued
//! input, later layers by the spikes of the layer below.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng::{standard_normal, Stream};
use crate::signal::LabeledExample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("hypernetwork partition does not match decoder layer inputs")]
    Partition,
    #[error("invalid layer: {0}")]
    Layer(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifLayer {
    pub weights: Matrix,
    pub beta: f64,
    pub threshold: f64,
}

impl LifLayer {
    pub fn inputs(&self) -> usize {
        self.weights.cols
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnParams {
    pub layers: Vec<LifLayer>,
}

impl SnnParams {
    /// Gaussian weights with standard deviation `gain / sqrt(fan_in)`.
    pub fn random(sizes: &[usize], beta: f64, threshold: f64, gain: f64, stream: &mut Stream) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let scale = gain / libm::sqrt(w[0] as f64);
                let data = (0..w[0] * w[1])
                    .map(|_| scale * standard_normal(stream))
                    .collect();
                LifLayer {
                    weights: Matrix::from_rows(w[1], w[0], data).expect("sized"),
                    beta,
                    threshold,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        if self.layers.is_empty() {
            return Err(SnnError::Layer("network has no layers"));
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(SnnError::Shape {
                    expected: pair[0].outputs(),
                    got: pair[1].inputs(),
                });
            }
        }
        for l in &self.layers {
            if !l.weights.is_finite() {
                return Err(SnnError::Layer("non-finite weight"));
            }
            if !(0.0..=1.0).contains(&l.beta) {
                return Err(SnnError::Layer("beta outside [0, 1]"));
            }
            if !(l.threshold > 0.0) {
                return Err(SnnError::Layer("threshold must be positive"));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, LifLayer::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LifLayer::outputs)
    }

    /// Input width of every layer, in order.
    pub fn input_widths(&self) -> Vec<usize> {
        self.layers.iter().map(LifLayer::inputs).collect()
    }
}

/// Binary matrix of `neurons x steps`, stored step-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    neurons: usize,
    steps: usize,
    bits: Vec<bool>,
}

impl SpikeTrain {
    pub fn zeros(neurons: usize, steps: usize) -> Self {
        Self {
            neurons,
            steps,
            bits: vec![false; neurons * steps],
        }
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn get(&self, neuron: usize, step: usize) -> bool {
        self.bits[step * self.neurons + neuron]
    }

    #[inline]
    pub fn set(&mut self, neuron: usize, step: usize, value: bool) {
        self.bits[step * self.neurons + neuron] = value;
    }

    pub fn column(&self, step: usize) -> &[bool] {
        &self.bits[step * self.neurons..(step + 1) * self.neurons]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// In-place LIF update; `spikes` receives the output.
pub fn lif_update(v: &mut [f64], current: &[f64], beta: f64, threshold: f64, spikes: &mut [bool]) {
    for ((v, i), s) in v.iter_mut().zip(current).zip(spikes.iter_mut()) {
        let pre = beta * *v + i;
        *s = pre >= threshold;
        *v = if *s { 0.0 } else { pre };
        debug_assert!(v.is_finite());
    }
}

/// Functional form of [`lif_update`].
pub fn lif_step(v: &[f64], current: &[f64], beta: f64, threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let mut v = v.to_vec();
    let mut s = vec![false; v.len()];
    lif_update(&mut v, current, beta, threshold, &mut s);
    (v, s)
}

/// Membranes and scratch buffers of one network run.
#[derive(Debug, Clone)]
pub struct SnnState {
    v: Vec<Vec<f64>>,
    spikes: Vec<Vec<bool>>,
    current: Vec<Vec<f64>>,
}

impl SnnState {
    pub fn new(params: &SnnParams) -> Self {
        let widths: Vec<usize> = params.layers.iter().map(LifLayer::outputs).collect();
        Self {
            v: widths.iter().map(|&n| vec![0.0; n]).collect(),
            spikes: widths.iter().map(|&n| vec![false; n]).collect(),
            current: widths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn reset(&mut self) {
        self.v.iter_mut().for_each(|v| v.fill(0.0));
        self.spikes.iter_mut().for_each(|s| s.fill(false));
    }

    pub fn membranes(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One step of every layer; returns the output layer spikes.
    pub fn step(&mut self, params: &SnnParams, input: &[f64]) -> Result<&[bool], SnnError> {
        if input.len() != params.input_dim() {
            return Err(SnnError::Shape {
                expected: params.input_dim(),
                got: input.len(),
            });
        }
        if self.v.len() != params.layers.len() {
            return Err(SnnError::Shape {
                expected: params.layers.len(),
                got: self.v.len(),
            });
        }
        for (k, layer) in params.layers.iter().enumerate() {
            let (below, rest) = self.spikes.split_at_mut(k);
            if k == 0 {
                layer.weights.matvec_into(input, &mut self.current[0]);
            } else {
                layer
                    .weights
                    .matvec_spikes_into(&below[k - 1], &mut self.current[k]);
            }
            lif_update(
                &mut self.v[k],
                &self.current[k],
                layer.beta,
                layer.threshold,
                &mut rest[0],
            );
        }
        Ok(self.spikes.last().map_or(&[], |s| s.as_slice()))
    }
}

/// Runs the encoder from step `from_step` to `l_max`, one column per step,
/// with persistent membranes. Column `k` of the result is the output for
/// step `from_step + k`.
pub fn encode(
    example: &LabeledExample,
    params: &SnnParams,
    from_step: usize,
) -> Result<SpikeTrain, SnnError> {
    if params.input_dim() != example.dim {
        return Err(SnnError::Shape {
            expected: params.input_dim(),
            got: example.dim,
        });
    }
    let from = from_step.max(1);
    let window = (example.l_max + 1).saturating_sub(from);
    let mut out = SpikeTrain::zeros(params.output_dim(), window);
    let mut state = SnnState::new(params);
    for k in 0..window {
        let s = state.step(params, example.column(from + k))?;
        for (i, &b) in s.iter().enumerate() {
            out.set(i, k, b);
        }
    }
    Ok(out)
}

/// One decoder step on the received features of a time step; returns the
/// readout spikes.
pub fn decode_step<'a>(
    features: &[f64],
    params: &SnnParams,
    state: &'a mut SnnState,
) -> Result<&'a [bool], SnnError> {
    state.step(params, features)
}

/// Dense `tanh` network mapping pilot features to per-column scalings of
/// the decoder weights. The output activation is `2 * sigmoid`, so a zero
/// pre-activation yields scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperNet {
    pub hidden: Matrix,
    pub hidden_bias: Vec<f64>,
    pub output: Matrix,
    pub output_bias: Vec<f64>,
    /// Length of each output sub-vector, one per decoder layer.
    pub partition: Vec<usize>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

impl HyperNet {
    /// Random hidden layer and a small output layer, so that the initial
    /// scalings stay close to 1.
    pub fn random(inputs: usize, hidden: usize, partition: Vec<usize>, stream: &mut Stream) -> Self {
        let outputs: usize = partition.iter().sum();
        let s1 = 1.0 / libm::sqrt(inputs.max(1) as f64);
        let s2 = 0.1 / libm::sqrt(hidden.max(1) as f64);
        let w1 = (0..hidden * inputs).map(|_| s1 * standard_normal(stream)).collect();
        let w2 = (0..outputs * hidden).map(|_| s2 * standard_normal(stream)).collect();
        Self {
            hidden: Matrix::from_rows(hidden, inputs, w1).expect("sized"),
            hidden_bias: vec![0.0; hidden],
            output: Matrix::from_rows(outputs, hidden, w2).expect("sized"),
            output_bias: vec![0.0; outputs],
            partition,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.cols
    }

    pub fn output_dim(&self) -> usize {
        self.output.rows
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        if self.hidden_bias.len() != self.hidden.rows
            || self.output.cols != self.hidden.rows
            || self.output_bias.len() != self.output.rows
        {
            return Err(SnnError::Layer("hypernetwork shapes do not chain"));
        }
        if self.partition.iter().sum::<usize>() != self.output.rows {
            return Err(SnnError::Partition);
        }
        if !self.hidden.is_finite() || !self.output.is_finite() {
            return Err(SnnError::Layer("non-finite weight"));
        }
        Ok(())
    }

    /// Hidden activations and the output scalings.
    pub fn forward_full(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SnnError> {
        if features.len() != self.input_dim() {
            return Err(SnnError::Shape {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let mut h = vec![0.0; self.hidden.rows];
        self.hidden.matvec_into(features, &mut h);
        for (x, b) in h.iter_mut().zip(&self.hidden_bias) {
            *x = libm::tanh(*x + b);
        }
        let mut z = vec![0.0; self.output.rows];
        self.output.matvec_into(&h, &mut z);
        for (x, b) in z.iter_mut().zip(&self.output_bias) {
            *x = 2.0 * sigmoid(*x + b);
        }
        Ok((h, z))
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, SnnError> {
        self.forward_full(features).map(|(_, w)| w)
    }
}

/// `theta_s = base_s * diag(omega_s)` for every decoder layer `s`, where
/// `omega` is the concatenation of the per-layer sub-vectors.
pub fn scale_decoder(omega: &[f64], partition: &[usize], base: &SnnParams) -> Result<SnnParams, SnnError> {
    if partition.len() != base.layers.len()
        || partition.iter().zip(&base.layers).any(|(&n, l)| n != l.inputs())
        || omega.len() != partition.iter().sum::<usize>()
    {
        return Err(SnnError::Partition);
    }
    let mut at = 0;
    let layers = base
        .layers
        .iter()
        .zip(partition)
        .map(|(l, &n)| {
            let w = l.weights.scale_columns(&omega[at..at + n]);
            at += n;
            LifLayer {
                weights: w,
                ..l.clone()
            }
        })
        .collect();
    Ok(SnnParams { layers })
}

/// Adapts the decoder to the current channel from the received pilots.
pub fn hyper_adapt(
    pilot_features: &[f64],
    hyper: &HyperNet,
    base: &SnnParams,
) -> Result<SnnParams, SnnError> {
    let omega = hyper.forward(pilot_features)?;
    scale_decoder(&omega, &hyper.partition, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    #[test]
    fn lif_examples() {
        let (v, s) = lif_step(&[0.5], &[0.6], 0.9, 1.0);
        assert_eq!((v[0], s[0]), (0.0, true));
        let (v, s) = lif_step(&[0.5], &[0.0], 0.9, 1.0);
        assert!((v[0] - 0.45).abs() < 1e-15);
        assert!(!s[0]);
        let mut v = vec![0.9; 3];
        let mut s = vec![false; 3];
        for _ in 0..100 {
            lif_update(&mut v, &[0.0; 3], 0.9, 1.0, &mut s);
            assert!(s.iter().all(|b| !b));
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let (_, s) = lif_step(&[0.0], &[1.0], 0.9, 1.0);
        assert!(s[0]);
    }

    fn example(dim: usize, l_max: usize, value: f64) -> LabeledExample {
        LabeledExample {
            dim,
            l_max,
            u: vec![value; dim * l_max],
            label: 0,
            l_start: 1,
        }
    }

    #[test]
    fn encode_shapes_and_silence() {
        let mut st = derive_stream(1, Purpose::Init, 0);
        let p = SnnParams::random(&[4, 8, 3], 0.9, 1.0, 1.5, &mut st);
        p.validate().unwrap();
        let x = encode(&example(4, 10, 0.0), &p, 3).unwrap();
        assert_eq!((x.neurons(), x.steps()), (3, 8));
        assert_eq!(x.count_ones(), 0);
        let a = encode(&example(4, 10, 1.3), &p, 1).unwrap();
        let b = encode(&example(4, 10, 1.3), &p, 1).unwrap();
        assert_eq!(a, b);
        assert!(encode(&example(5, 10, 0.0), &p, 1).is_err());
    }

    #[test]
    fn decoder_zero_input_is_silent() {
        let mut st = derive_stream(1, Purpose::Init, 1);
        let p = SnnParams::random(&[6, 5, 4], 0.9, 1.0, 1.5, &mut st);
        let mut state = SnnState::new(&p);
        for _ in 0..20 {
            let r = decode_step(&[0.0; 6], &p, &mut state).unwrap();
            assert_eq!(r.len(), 4);
            assert!(r.iter().all(|b| !b));
        }
    }

    #[test]
    fn column_scaling_example() {
        let base = SnnParams {
            layers: vec![LifLayer {
                weights: Matrix::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
                beta: 0.9,
                threshold: 1.0,
            }],
        };
        let out = scale_decoder(&[2.0, 1.0], &[2], &base).unwrap();
        assert_eq!(out.layers[0].weights.data, vec![2.0, 2.0, 6.0, 4.0]);
        assert_eq!(scale_decoder(&[1.0, 1.0], &[2], &base).unwrap(), base);
        assert_eq!(scale_decoder(&[1.0; 3], &[3], &base), Err(SnnError::Partition));
    }

    #[test]
    fn zero_bias_hypernet_is_identity_at_zero_input() {
        let mut st = derive_stream(1, Purpose::Init, 2);
        let base = SnnParams::random(&[6, 5, 4], 0.9, 1.0, 1.5, &mut st);
        let hyper = HyperNet::random(8, 7, base.input_widths(), &mut st);
        hyper.validate().unwrap();
        let omega = hyper.forward(&[0.0; 8]).unwrap();
        assert!(omega.iter().all(|w| *w == 1.0));
        assert_eq!(hyper_adapt(&[0.0; 8], &hyper, &base).unwrap(), base);
    }
}
