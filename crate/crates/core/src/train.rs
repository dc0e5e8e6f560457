//! Surrogate-gradient trainer for the encoder, decoder and hypernetwork.
//!
//! Training is end to end through the simulated link: the encoder runs from
//! the true onset, its spikes are time-hopped over a twin channel with noise,
//! the receiver demodulates per antenna pair, the hypernetwork rescales the
//! decoder from the pilots, and the loss is the cross-entropy of the softmax
//! of the readout spike counts. Gradients flow through the hard threshold via
//! a sigmoid surrogate. A smooth mode uses the sigmoid in the forward pass as
//! well, which makes the network differentiable and lets the analytic
//! gradient be compared with finite differences.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, SimConfig};
use crate::exec::Executor;
use crate::linalg::Matrix;
use crate::phy::{
    draw_channel, feature_len, frame_len, ChannelModelSpec, ChannelRealization, HoppingCodes,
    NoiseField,
};
use crate::pipeline::{random_models, LinkRealization, Models, TrialPolicy, TxTrigger, Decision, Radio};
use crate::rng::{derive_stream, Purpose};
use crate::signal::{fit_gaussian, Dataset, LabeledExample, SignalError};
use crate::snn::{scale_decoder, sigmoid, HyperNet, SnnParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training diverged after {retries} retries (last step size {learning_rate})")]
    Diverged { retries: usize, learning_rate: f64 },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Spike nonlinearity as seen by the trainer, applied to `v_pre - threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// Heaviside forward, sigmoid-derivative backward; the reset path is
    /// treated as constant.
    Surrogate { slope: f64 },
    /// Sigmoid forward and backward; gradients are exact.
    Smooth { slope: f64 },
}

impl SpikeFn {
    #[inline]
    fn forward(self, x: f64) -> f64 {
        match self {
            SpikeFn::Surrogate { .. } => f64::from(u8::from(x >= 0.0)),
            SpikeFn::Smooth { slope } => sigmoid(slope * x),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        let (SpikeFn::Surrogate { slope } | SpikeFn::Smooth { slope }) = self;
        let s = sigmoid(slope * x);
        slope * s * (1.0 - s)
    }

    fn exact_reset(self) -> bool {
        matches!(self, SpikeFn::Smooth { .. })
    }
}

struct LayerTrace {
    v_pre: Vec<f64>,
    s: Vec<f64>,
}

/// Forward record of one layered LIF network over `steps` steps. Inputs and
/// per-layer values are stored step-major.
pub struct NetTrace {
    steps: usize,
    inputs: Vec<f64>,
    layers: Vec<LayerTrace>,
}

impl NetTrace {
    /// Output of the last layer at step `t`.
    pub fn output(&self, t: usize) -> &[f64] {
        let l = self.layers.last().expect("at least one layer");
        let n = l.s.len() / self.steps.max(1);
        &l.s[t * n..(t + 1) * n]
    }
}

pub fn forward_net(params: &SnnParams, inputs: &[f64], steps: usize, f: SpikeFn) -> NetTrace {
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(params.layers.len());
    for (k, layer) in params.layers.iter().enumerate() {
        let n = layer.outputs();
        let m = layer.inputs();
        let mut v_pre = vec![0.0; steps * n];
        let mut s = vec![0.0; steps * n];
        let mut v = vec![0.0; n];
        let mut current = vec![0.0; n];
        for t in 0..steps {
            let x = if k == 0 {
                &inputs[t * m..(t + 1) * m]
            } else {
                &layers[k - 1].s[t * m..(t + 1) * m]
            };
            layer.weights.matvec_into(x, &mut current);
            for i in 0..n {
                let pre = layer.beta * v[i] + current[i];
                let spike = f.forward(pre - layer.threshold);
                v_pre[t * n + i] = pre;
                s[t * n + i] = spike;
                v[i] = pre * (1.0 - spike);
            }
        }
        layers.push(LayerTrace { v_pre, s });
    }
    NetTrace {
        steps,
        inputs: inputs.to_vec(),
        layers,
    }
}

/// Backpropagation through time. `grad_out` is dL/d(output spikes), step
/// major. Weight gradients are added to `grads` (one matrix per layer); the
/// gradient with respect to the network input is returned.
pub fn backward_net(
    params: &SnnParams,
    trace: &NetTrace,
    grad_out: &[f64],
    f: SpikeFn,
    grads: &mut [Matrix],
) -> Vec<f64> {
    let steps = trace.steps;
    let mut g_s = grad_out.to_vec();
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let n = layer.outputs();
        let m = layer.inputs();
        let lt = &trace.layers[k];
        let below: &[f64] = if k == 0 {
            &trace.inputs
        } else {
            &trace.layers[k - 1].s
        };
        let mut g_in = vec![0.0; steps * m];
        let mut g_v = vec![0.0; n];
        let mut g_i = vec![0.0; n];
        for t in (0..steps).rev() {
            for i in 0..n {
                let pre = lt.v_pre[t * n + i];
                let s = lt.s[t * n + i];
                let ds = f.derivative(pre - layer.threshold);
                let mut dv_dpre = 1.0 - s;
                if f.exact_reset() {
                    dv_dpre -= pre * ds;
                }
                let g_pre = g_s[t * n + i] * ds + g_v[i] * dv_dpre;
                g_i[i] = g_pre;
                g_v[i] = layer.beta * g_pre;
            }
            let x = &below[t * m..(t + 1) * m];
            let g = &mut grads[k];
            for i in 0..n {
                if g_i[i] == 0.0 {
                    continue;
                }
                let row = &mut g.data[i * m..(i + 1) * m];
                for (w, xi) in row.iter_mut().zip(x) {
                    *w += g_i[i] * xi;
                }
            }
            layer.weights.matvec_t_acc(&g_i, &mut g_in[t * m..(t + 1) * m]);
        }
        g_s = g_in;
    }
    g_s
}

/// Softmax cross-entropy of `logits` against `label`; returns the loss and
/// dL/dlogits.
pub fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let z: f64 = exps.iter().sum();
    let loss = libm::log(z) + max - logits[label];
    let mut g: Vec<f64> = exps.iter().map(|e| e / z).collect();
    g[label] -= 1.0;
    (loss, g)
}

/// Gradient buffers shaped like [`Models`]' trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub encoder: Vec<Matrix>,
    pub decoder: Vec<Matrix>,
    pub hidden: Matrix,
    pub hidden_bias: Vec<f64>,
    pub output: Matrix,
    pub output_bias: Vec<f64>,
}

impl Grads {
    pub fn zeros(m: &Models) -> Self {
        let z = |p: &SnnParams| {
            p.layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows, l.weights.cols))
                .collect()
        };
        Self {
            encoder: z(&m.encoder),
            decoder: z(&m.decoder),
            hidden: Matrix::zeros(m.hyper.hidden.rows, m.hyper.hidden.cols),
            hidden_bias: vec![0.0; m.hyper.hidden_bias.len()],
            output: Matrix::zeros(m.hyper.output.rows, m.hyper.output.cols),
            output_bias: vec![0.0; m.hyper.output_bias.len()],
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        v.extend(self.encoder.iter().map(|m| m.data.as_slice()));
        v.extend(self.decoder.iter().map(|m| m.data.as_slice()));
        v.push(&self.hidden.data);
        v.push(&self.hidden_bias);
        v.push(&self.output.data);
        v.push(&self.output_bias);
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        v.extend(self.encoder.iter_mut().map(|m| m.data.as_mut_slice()));
        v.extend(self.decoder.iter_mut().map(|m| m.data.as_mut_slice()));
        v.push(&mut self.hidden.data);
        v.push(&mut self.hidden_bias);
        v.push(&mut self.output.data);
        v.push(&mut self.output_bias);
        v
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

fn model_slices_mut(m: &mut Models) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = Vec::new();
    v.extend(m.encoder.layers.iter_mut().map(|l| l.weights.data.as_mut_slice()));
    v.extend(m.decoder.layers.iter_mut().map(|l| l.weights.data.as_mut_slice()));
    v.push(&mut m.hyper.hidden.data);
    v.push(&mut m.hyper.hidden_bias);
    v.push(&mut m.hyper.output.data);
    v.push(&mut m.hyper.output_bias);
    v
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(models: &mut Models, lr: f64) -> Self {
        let sizes: Vec<usize> = model_slices_mut(models).iter().map(|s| s.len()).collect();
        Self {
            lr,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn step(&mut self, models: &mut Models, grads: &Grads, scale: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - libm::pow(B1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(B2, f64::from(self.t));
        for (((p, g), m), v) in model_slices_mut(models)
            .into_iter()
            .zip(grads.slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for k in 0..p.len() {
                let gk = g[k] * scale;
                m[k] = B1 * m[k] + (1.0 - B1) * gk;
                v[k] = B2 * v[k] + (1.0 - B2) * gk * gk;
                p[k] -= self.lr * (m[k] / c1) / (libm::sqrt(v[k] / c2) + 1e-8);
            }
        }
    }
}

/// Link of training item `index`, drawn from the twin channel model.
pub fn training_link(cfg: &SimConfig, spec: &ChannelModelSpec, index: u64) -> LinkRealization {
    let mut st = derive_stream(cfg.seed, Purpose::Train, index);
    let channel = draw_channel(spec, cfg.n_t, cfg.n_r, cfg.snr_db, &mut st);
    let codes = HoppingCodes::draw(cfg, &mut st);
    let noise = NoiseField::draw(cfg, channel.noise_power, &mut st);
    LinkRealization {
        channel,
        codes,
        noise,
    }
}

/// Noiseless link with a single unit-gain path of one chip delay.
pub fn clean_link(cfg: &SimConfig, index: u64) -> LinkRealization {
    let codes = HoppingCodes::draw(cfg, &mut derive_stream(cfg.seed, Purpose::Train, index));
    LinkRealization {
        channel: ChannelRealization::ideal(cfg.n_t, cfg.n_r, 1, 0.0),
        codes,
        noise: NoiseField::silent(cfg),
    }
}

fn add_pulse(rx: &mut [Vec<Complex64>], h: &ChannelRealization, i: usize, chip: usize, amp: f64) {
    for (n, r) in rx.iter_mut().enumerate() {
        for (a, &d) in h.link(i, n).iter().zip(&h.delays) {
            if chip + d < r.len() {
                r[chip + d] += a * amp;
            }
        }
    }
}

fn window(cfg: &SimConfig, codes: &HoppingCodes, step: usize, i: usize, len: usize) -> core::ops::Range<usize> {
    let first = step * cfg.l_b + codes.code(step, i) + 1;
    first.min(len)..(first + cfg.n_p).min(len)
}

fn features(rx: &[Vec<Complex64>], cfg: &SimConfig, codes: &HoppingCodes, step: usize, out: &mut [f64]) {
    for i in 0..cfg.n_t {
        for (n, r) in rx.iter().enumerate() {
            let w = window(cfg, codes, step, i, r.len());
            out[i * cfg.n_r + n] = r[w].iter().map(|z| z.norm_sqr()).sum();
        }
    }
}

/// Penalty `weight * sum_c max(0, rate - count_c / T)^2` on output neurons
/// firing below `rate` spikes per step. Keeps the readout from falling
/// silent, where the surrogate gradient vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFloor {
    pub rate: f64,
    pub weight: f64,
}

impl RateFloor {
    pub const NONE: RateFloor = RateFloor { rate: 0.0, weight: 0.0 };

    fn apply(self, counts: &[f64], steps: usize, loss: &mut f64, g_counts: &mut [f64]) {
        let t = steps as f64;
        for (c, g) in counts.iter().zip(g_counts) {
            let gap = self.rate - c / t;
            if gap > 0.0 {
                *loss += self.weight * gap * gap;
                *g -= 2.0 * self.weight * gap / t;
            }
        }
    }
}

/// Loss and (optionally) gradients of one training example transmitted at
/// its true onset and decoded with the radio on in time.
pub fn example_loss(
    models: &Models,
    example: &LabeledExample,
    link: &LinkRealization,
    cfg: &SimConfig,
    f: SpikeFn,
    floor: RateFloor,
    grads: Option<&mut Grads>,
) -> (f64, bool) {
    let ls = example.l_start;
    let fl = feature_len(cfg);
    let h = &link.channel;
    let codes = &link.codes;
    let len = frame_len(cfg);

    let t_enc = cfg.l_max + 1 - ls;
    let enc_in: Vec<f64> = example.u[(ls - 1) * cfg.dim..].to_vec();
    let enc = forward_net(&models.encoder, &enc_in, t_enc, f);

    let mut rx: Vec<Vec<Complex64>> = link.noise.rx.iter().map(|s| s.0.clone()).collect();
    let p0 = cfg.pilot_start(ls);
    for j in p0..p0 + cfg.l_p {
        for i in 0..cfg.n_t {
            add_pulse(&mut rx, h, i, j * cfg.l_b + codes.code(j, i), 1.0);
        }
    }
    let d0 = cfg.data_start(ls);
    let t_dec = cfg.l_max + 1 - d0;
    for k in 0..t_dec {
        let j = d0 + k;
        let x = enc.output(k);
        for i in 0..cfg.n_t {
            if x[i] != 0.0 {
                add_pulse(&mut rx, h, i, j * cfg.l_b + codes.code(j, i), x[i]);
            }
        }
    }

    let mut pilot = vec![0.0; cfg.l_p * fl];
    for k in 0..cfg.l_p {
        features(&rx, cfg, codes, p0 + k, &mut pilot[k * fl..(k + 1) * fl]);
    }
    let mut dec_in = vec![0.0; t_dec * fl];
    for k in 0..t_dec {
        features(&rx, cfg, codes, d0 + k, &mut dec_in[k * fl..(k + 1) * fl]);
    }
    let (hidden, omega) = models.hyper.forward_full(&pilot).expect("models validated");
    let decoder = scale_decoder(&omega, &models.hyper.partition, &models.decoder).expect("models validated");
    let dec = forward_net(&decoder, &dec_in, t_dec, f);

    let mut counts = vec![0.0; cfg.classes];
    for t in 0..t_dec {
        for (c, s) in counts.iter_mut().zip(dec.output(t)) {
            *c += s;
        }
    }
    let (mut loss, mut g_counts) = softmax_xent(&counts, example.label);
    floor.apply(&counts, t_dec, &mut loss, &mut g_counts);
    let best = (0..cfg.classes).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    let correct = best == example.label;
    let Some(grads) = grads else {
        return (loss, correct);
    };

    // Decoder.
    let mut g_out = vec![0.0; t_dec * cfg.classes];
    for t in 0..t_dec {
        g_out[t * cfg.classes..(t + 1) * cfg.classes].copy_from_slice(&g_counts);
    }
    let mut g_scaled: Vec<Matrix> = decoder
        .layers
        .iter()
        .map(|l| Matrix::zeros(l.weights.rows, l.weights.cols))
        .collect();
    let g_feat = backward_net(&decoder, &dec, &g_out, f, &mut g_scaled);

    // Column scaling and hypernetwork.
    let mut g_omega = vec![0.0; omega.len()];
    let mut at = 0;
    for ((g, base), gd) in g_scaled.iter().zip(&models.decoder.layers).zip(&mut grads.decoder) {
        let cols = g.cols;
        for r in 0..g.rows {
            for c in 0..cols {
                let gw = g.data[r * cols + c];
                gd.data[r * cols + c] += gw * omega[at + c];
                g_omega[at + c] += gw * base.weights.data[r * cols + c];
            }
        }
        at += cols;
    }
    let hyper: &HyperNet = &models.hyper;
    let g_z: Vec<f64> = g_omega
        .iter()
        .zip(&omega)
        .map(|(g, w)| g * w * (1.0 - w / 2.0))
        .collect();
    let hn = hidden.len();
    for (r, gz) in g_z.iter().enumerate() {
        grads.output_bias[r] += gz;
        for c in 0..hn {
            grads.output.data[r * hn + c] += gz * hidden[c];
        }
    }
    let mut g_h = vec![0.0; hn];
    hyper.output.matvec_t_acc(&g_z, &mut g_h);
    let pn = pilot.len();
    for (r, (gh, hv)) in g_h.iter().zip(&hidden).enumerate() {
        let ga = gh * (1.0 - hv * hv);
        grads.hidden_bias[r] += ga;
        for c in 0..pn {
            grads.hidden.data[r * pn + c] += ga * pilot[c];
        }
    }

    // Demodulator and channel back to the encoder spikes.
    let mut g_rx: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); len]; cfg.n_r];
    for k in 0..t_dec {
        let j = d0 + k;
        for i in 0..cfg.n_t {
            for n in 0..cfg.n_r {
                let g = g_feat[k * fl + i * cfg.n_r + n];
                if g == 0.0 {
                    continue;
                }
                for c in window(cfg, codes, j, i, len) {
                    g_rx[n][c] += rx[n][c] * (2.0 * g);
                }
            }
        }
    }
    let mut g_enc = vec![0.0; t_enc * cfg.n_t];
    for k in 0..t_dec {
        let j = d0 + k;
        for i in 0..cfg.n_t {
            let chip = j * cfg.l_b + codes.code(j, i);
            let mut acc = 0.0;
            for n in 0..cfg.n_r {
                for (a, &d) in h.link(i, n).iter().zip(&h.delays) {
                    if chip + d < len {
                        let g = g_rx[n][chip + d];
                        acc += g.re * a.re + g.im * a.im;
                    }
                }
            }
            g_enc[k * cfg.n_t + i] = acc;
        }
    }
    backward_net(&models.encoder, &enc, &g_enc, f, &mut grads.encoder);
    (loss, correct)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub retries: usize,
    pub learning_rate: f64,
}

/// Fits the onset-detection models and trains the three networks. A
/// non-finite loss or gradient restarts training from fresh weights with
/// half the step size, up to `max_retries` times.
pub fn train_models<E: Executor>(
    train: &Dataset,
    exp: &ExperimentConfig,
    exec: &E,
) -> Result<(Models, TrainReport), TrainError> {
    train_models_observed(train, exp, exec, |_, _| {})
}

/// [`train_models`] with a callback after every epoch.
pub fn train_models_observed<E: Executor, O: FnMut(&EpochStats, &Models)>(
    train: &Dataset,
    exp: &ExperimentConfig,
    exec: &E,
    mut observe: O,
) -> Result<(Models, TrainReport), TrainError> {
    let cfg = &exp.sim;
    let (signal, noise) = fit_gaussian(train, cfg.l_sig)?;
    let tc = &exp.train;
    let f = SpikeFn::Surrogate {
        slope: tc.surrogate_slope,
    };
    let floor = RateFloor {
        rate: tc.rate_floor,
        weight: tc.rate_weight,
    };
    let mut lr = tc.learning_rate;
    for attempt in 0..=tc.max_retries {
        let net = &exp.network;
        let mut init = derive_stream(cfg.seed, Purpose::Init, attempt as u64);
        let mut models = random_models(
            cfg,
            net.enc_hidden,
            net.dec_hidden,
            net.hyper_hidden,
            net.beta,
            net.threshold,
            &mut init,
        );
        models.signal = signal.clone();
        models.noise = noise.clone();
        let mut adam = Adam::new(&mut models, lr);
        let mut epochs = Vec::new();
        let mut diverged = false;
        'epochs: for epoch in 0..tc.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            let mut shuffle = derive_stream(cfg.seed, Purpose::Train, (1 << 62) | epoch as u64);
            order.shuffle(&mut shuffle);
            let mut total = 0.0;
            let mut hits = 0usize;
            for batch in order.chunks(tc.batch_size.max(1)) {
                let results = exec.map(batch.len(), |b| {
                    let idx = batch[b];
                    let link = training_link(cfg, &exp.twin, ((epoch as u64) << 32) | idx as u64);
                    let mut g = Grads::zeros(&models);
                    let (loss, ok) = example_loss(&models, &train.examples[idx], &link, cfg, f, floor, Some(&mut g));
                    (loss, ok, g)
                });
                let mut sum = Grads::zeros(&models);
                for (loss, ok, g) in &results {
                    total += loss;
                    hits += usize::from(*ok);
                    sum.add(g);
                }
                if !total.is_finite() || !sum.is_finite() {
                    diverged = true;
                    break 'epochs;
                }
                adam.step(&mut models, &sum, 1.0 / batch.len() as f64);
            }
            let stats = EpochStats {
                epoch,
                loss: total / train.len().max(1) as f64,
                accuracy: hits as f64 / train.len().max(1) as f64,
            };
            observe(&stats, &models);
            epochs.push(stats);
        }
        if !diverged && models.validate(cfg).is_ok() {
            return Ok((
                models,
                TrainReport {
                    epochs,
                    retries: attempt,
                    learning_rate: lr,
                },
            ));
        }
        lr *= 0.5;
    }
    Err(TrainError::Diverged {
        retries: tc.max_retries,
        learning_rate: lr,
    })
}

/// Policy for clean full-window reception: transmit at the true onset,
/// receiver on throughout, top-1 decision.
pub const CLEAN_POLICY: TrialPolicy = TrialPolicy {
    radio: Radio::AlwaysOn,
    tx: TxTrigger::Oracle,
    decision: Decision::TopK(1),
};

/// Top-1 accuracy with the noiseless single-path link.
pub fn clean_accuracy<E: Executor>(models: &Models, examples: &[LabeledExample], cfg: &SimConfig, exec: &E) -> f64 {
    let lambda = crate::config::Hyperparams {
        lambda_s: 0.0,
        lambda_w: 0.0,
        lambda_d: 0.0,
        secure: false,
    };
    let hits = exec.map(examples.len(), |k| {
        let link = clean_link(cfg, (3 << 60) | k as u64);
        let r = crate::pipeline::run_trial(&examples[k], &lambda, &link, models, cfg, &CLEAN_POLICY);
        usize::from(r.loss == 0)
    });
    hits.iter().sum::<usize>() as f64 / examples.len().max(1) as f64
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

/// Toy network of three spiking neurons (two inputs, one hidden neuron, two
/// readouts) in smooth mode, cross-entropy on the summed readout. Every
/// weight is checked.
pub fn toy_gradient_check(seed: u64) -> GradCheck {
    use crate::rng::standard_normal;
    use crate::snn::LifLayer;
    let mut st = derive_stream(seed, Purpose::Init, 0xfeed);
    let steps = 6;
    let mut w = |r, c| {
        let d = (0..r * c).map(|_| 1.5 * standard_normal(&mut st)).collect();
        Matrix::from_rows(r, c, d).expect("sized")
    };
    let params = SnnParams {
        layers: vec![
            LifLayer {
                weights: w(1, 2),
                beta: 0.8,
                threshold: 1.0,
            },
            LifLayer {
                weights: w(2, 1),
                beta: 0.8,
                threshold: 1.0,
            },
        ],
    };
    let inputs: Vec<f64> = (0..steps * 2).map(|_| 1.0 + standard_normal(&mut st)).collect();
    let f = SpikeFn::Smooth { slope: 5.0 };
    let label = 1;
    let loss_of = |p: &SnnParams| {
        let tr = forward_net(p, &inputs, steps, f);
        let mut counts = [0.0; 2];
        for t in 0..steps {
            counts[0] += tr.output(t)[0];
            counts[1] += tr.output(t)[1];
        }
        softmax_xent(&counts, label)
    };

    let tr = forward_net(&params, &inputs, steps, f);
    let (_, g_counts) = loss_of(&params);
    let g_out: Vec<f64> = (0..steps).flat_map(|_| g_counts.clone()).collect();
    let mut grads: Vec<Matrix> = params
        .layers
        .iter()
        .map(|l| Matrix::zeros(l.weights.rows, l.weights.cols))
        .collect();
    backward_net(&params, &tr, &g_out, f, &mut grads);

    let eps = 1e-6;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut max_rel: f64 = 0.0;
    for k in 0..params.layers.len() {
        for idx in 0..params.layers[k].weights.data.len() {
            let mut plus = params.clone();
            plus.layers[k].weights.data[idx] += eps;
            let mut minus = params.clone();
            minus.layers[k].weights.data[idx] -= eps;
            let num = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * eps);
            let ana = grads[k].data[idx];
            let scale = num.abs().max(ana.abs()).max(1e-8);
            max_rel = max_rel.max((num - ana).abs() / scale);
            analytic.push(ana);
            numeric.push(num);
        }
    }
    GradCheck {
        analytic,
        numeric,
        max_rel_error: max_rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_paper_config;
    use crate::signal::generate_dataset;

    #[test]
    fn toy_gradients_match_finite_differences() {
        for seed in 0..5 {
            let g = toy_gradient_check(seed);
            assert_eq!(g.analytic.len(), 4);
            assert!(g.max_rel_error < 1e-3, "seed {seed}: {g:?}");
        }
    }

    #[test]
    fn xent_gradient_sums_to_zero() {
        let (l, g) = softmax_xent(&[1.0, 2.0, 3.0], 0);
        assert!(l > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn full_model_gradient_matches_smooth_finite_difference() {
        let cfg = SimConfig {
            l_max: 16,
            l_sig: 8,
            dim: 4,
            n_t: 3,
            ..default_paper_config()
        };
        let data = crate::config::DataConfig::default();
        let ex = &generate_dataset(&cfg, &data, crate::rng::Split::Train, 0, 1).examples[0];
        let mut st = derive_stream(2, Purpose::Init, 0);
        let mut models = random_models(&cfg, 5, 4, 3, 0.9, 1.0, &mut st);
        let link = training_link(&cfg, &ChannelModelSpec::rayleigh(cfg.n_p), 7);
        let f = SpikeFn::Smooth { slope: 5.0 };
        let floor = RateFloor { rate: 0.9, weight: 2.0 };
        let mut g = Grads::zeros(&models);
        example_loss(&models, ex, &link, &cfg, f, floor, Some(&mut g));
        let analytic: Vec<f64> = g.slices().iter().map(|s| s[0]).collect();
        let eps = 1e-6;
        let mut numeric = Vec::new();
        for t in 0..analytic.len() {
            let mut p = models.clone();
            model_slices_mut(&mut p)[t][0] += eps;
            let lp = example_loss(&p, ex, &link, &cfg, f, floor, None).0;
            model_slices_mut(&mut models)[t][0] -= eps;
            let lm = example_loss(&models, ex, &link, &cfg, f, floor, None).0;
            model_slices_mut(&mut models)[t][0] += eps;
            numeric.push((lp - lm) / (2.0 * eps));
        }
        for (a, n) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max(n.abs()).max(1e-6);
            assert!((a - n).abs() / scale < 1e-3, "{analytic:?} vs {numeric:?}");
        }
    }
}
