//! One end-to-end trial: onset detection, transmission, wake-up, decoding
//! and set prediction, with the per-trial loss, energy and set size.
//!
//! The receiver knows the frame timing once it is awake: the pilot and data
//! slots are located relative to the true transmit start, or to the wake-up
//! detection when a false alarm woke the radio with nothing on the air.
//! Pilot steps that fall before the radio is on are zero-filled and data
//! steps before it are lost.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{Hyperparams, SimConfig};
use crate::phy::{
    add_data, dehop_features, draw_channel, feature_len, first_wake, modulate_pilot, modulate_wus,
    propagate_with_noise, propagate_wus, step_peaks, wus_template, ChannelModelSpec,
    ChannelRealization, ChipSignal, HoppingCodes, NoiseField,
};
use crate::qusum::{first_crossing, llr_sequence};
use crate::rng::{derive_stream, stream_index, Purpose, Split};
use crate::signal::{GaussianModel, LabeledExample};
use crate::snn::{encode, hyper_adapt, HyperNet, SnnError, SnnParams, SnnState};

pub const MAX_CLASSES: usize = 64;

/// Subset of `{0, ..., C-1}` as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ClassSet(pub u64);

impl ClassSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn full(classes: usize) -> Self {
        if classes >= MAX_CLASSES {
            Self(u64::MAX)
        } else {
            Self((1u64 << classes) - 1)
        }
    }

    pub fn insert(&mut self, class: usize) {
        self.0 |= 1 << class;
    }

    pub fn contains(self, class: usize) -> bool {
        class < MAX_CLASSES && self.0 >> class & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: ClassSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_CLASSES).filter(move |&c| self.contains(c))
    }
}

/// Softmax of the spike counts and the scores `s_c = -log p_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
}

impl ScoreVector {
    pub fn from_counts(counts: &[u32]) -> Self {
        let max = counts.iter().copied().max().unwrap_or(0);
        let shifted: Vec<f64> = counts.iter().map(|&c| f64::from(c) - f64::from(max)).collect();
        let log_z = libm::log(shifted.iter().map(|&x| libm::exp(x)).sum::<f64>());
        let s: Vec<f64> = shifted.iter().map(|&x| log_z - x).collect();
        let p = s.iter().map(|&x| libm::exp(-x)).collect();
        Self { p, s }
    }
}

/// `{c : s_c <= lambda_d}`; an infinite threshold keeps every class.
pub fn predict_set(counts: &[u32], lambda_d: f64) -> (ClassSet, ScoreVector) {
    let scores = ScoreVector::from_counts(counts);
    let mut set = ClassSet::empty();
    for (c, &s) in scores.s.iter().enumerate() {
        if s <= lambda_d {
            set.insert(c);
        }
    }
    (set, scores)
}

/// The `k` classes with the largest counts, lower index first on ties.
pub fn top_k_set(counts: &[u32], k: usize) -> ClassSet {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut set = ClassSet::empty();
    for &c in order.iter().take(k) {
        set.insert(c);
    }
    set
}

/// The main radio is up in time for the first pilot.
pub fn check_wake_timing(l_start: usize, l_det: usize, cfg: &SimConfig) -> bool {
    l_det + cfg.delta_wake <= l_start + cfg.l_w + cfg.l_d
}

/// `P_on` times the number of steps the main radio is on.
pub fn trial_energy(l_det: Option<usize>, cfg: &SimConfig) -> f64 {
    match l_det {
        None => 0.0,
        Some(l) => {
            let on = (cfg.l_max + 1) as f64 - (l + cfg.delta_wake) as f64;
            cfg.p_on * on.max(0.0)
        }
    }
}

/// Elementwise sum of readout spike vectors.
pub fn spike_count<'a, I>(readouts: I, classes: usize) -> Vec<u32>
where
    I: IntoIterator<Item = &'a [bool]>,
{
    let mut counts = vec![0u32; classes];
    for r in readouts {
        for (c, &b) in counts.iter_mut().zip(r) {
            *c += u32::from(b);
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Radio {
    /// Main radio off until the wake-up receiver fires.
    WakeUp,
    /// Main radio on for the whole observation window.
    AlwaysOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxTrigger {
    /// Transmit when the onset detector fires.
    Qusum,
    /// Transmit from the first step regardless of the sensed signal.
    Continuous,
    /// Transmit at the true onset.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// Classes whose score is at most `lambda_d`.
    Threshold,
    /// Fixed-size set of the most active readout neurons.
    TopK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPolicy {
    pub radio: Radio,
    pub tx: TxTrigger,
    pub decision: Decision,
}

impl TrialPolicy {
    pub const WAKE_UP: TrialPolicy = TrialPolicy {
        radio: Radio::WakeUp,
        tx: TxTrigger::Qusum,
        decision: Decision::Threshold,
    };
    pub const ALWAYS_ON: TrialPolicy = TrialPolicy {
        radio: Radio::AlwaysOn,
        tx: TxTrigger::Qusum,
        decision: Decision::Threshold,
    };
    pub const CONVENTIONAL: TrialPolicy = TrialPolicy {
        radio: Radio::AlwaysOn,
        tx: TxTrigger::Continuous,
        decision: Decision::TopK(2),
    };
}

impl Default for TrialPolicy {
    fn default() -> Self {
        Self::WAKE_UP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub l_hat_start: Option<usize>,
    pub l_hat_det: Option<usize>,
    pub wake_ok: bool,
    pub prediction: ClassSet,
    pub loss: u8,
    pub energy: f64,
    pub set_size: usize,
}

impl TrialRecord {
    fn new(
        label: usize,
        l_hat_start: Option<usize>,
        l_hat_det: Option<usize>,
        wake_ok: bool,
        prediction: ClassSet,
        energy: f64,
    ) -> Self {
        Self {
            l_hat_start,
            l_hat_det,
            wake_ok,
            prediction,
            loss: u8::from(!prediction.contains(label)),
            energy,
            set_size: prediction.len(),
        }
    }
}

/// Trained networks and the onset-detection models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub encoder: SnnParams,
    pub decoder: SnnParams,
    pub hyper: HyperNet,
    pub signal: GaussianModel,
    pub noise: GaussianModel,
}

impl Models {
    pub fn validate(&self, cfg: &SimConfig) -> Result<(), SnnError> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.hyper.validate()?;
        let checks = [
            (cfg.dim, self.encoder.input_dim()),
            (cfg.n_t, self.encoder.output_dim()),
            (feature_len(cfg), self.decoder.input_dim()),
            (cfg.classes, self.decoder.output_dim()),
            (cfg.l_p * feature_len(cfg), self.hyper.input_dim()),
            (cfg.dim, self.signal.dim()),
        ];
        for (expected, got) in checks {
            if expected != got {
                return Err(SnnError::Shape { expected, got });
            }
        }
        if self.hyper.partition != self.decoder.input_widths() {
            return Err(SnnError::Partition);
        }
        Ok(())
    }
}

/// Everything random about the link in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRealization {
    pub channel: ChannelRealization,
    pub codes: HoppingCodes,
    pub noise: NoiseField,
}

impl LinkRealization {
    /// Independent draw for item `item` of repetition `rep` of `split`.
    pub fn draw(cfg: &SimConfig, spec: &ChannelModelSpec, split: Split, rep: u32, item: u32) -> Self {
        let idx = stream_index(split, rep, item);
        let channel = draw_channel(
            spec,
            cfg.n_t,
            cfg.n_r,
            cfg.snr_db,
            &mut derive_stream(cfg.seed, Purpose::Channel, idx),
        );
        let codes = HoppingCodes::draw(cfg, &mut derive_stream(cfg.seed, Purpose::Hopping, idx));
        let noise = NoiseField::draw(
            cfg,
            channel.noise_power,
            &mut derive_stream(cfg.seed, Purpose::Noise, idx),
        );
        Self {
            channel,
            codes,
            noise,
        }
    }
}

/// Received signals for one transmit start.
struct Reception {
    wus_peaks: Vec<f64>,
    /// Row-major `(l_max + 1) x feature_len` de-hopped features.
    features: Vec<f64>,
}

/// Shares every intermediate result of one example across hyperparameter
/// candidates: onset detection per `lambda_s`, received signals per transmit
/// start and spike counts per (frame reference, wake step).
pub struct ExampleRunner<'a> {
    example: &'a LabeledExample,
    link: &'a LinkRealization,
    models: &'a Models,
    cfg: &'a SimConfig,
    template: ChipSignal,
    llrs: Vec<f64>,
    receptions: Vec<(Option<usize>, Reception)>,
    counts: Vec<((usize, usize), Vec<u32>)>,
}

impl<'a> ExampleRunner<'a> {
    pub fn new(
        example: &'a LabeledExample,
        link: &'a LinkRealization,
        models: &'a Models,
        cfg: &'a SimConfig,
    ) -> Self {
        Self {
            example,
            link,
            models,
            cfg,
            template: wus_template(cfg),
            llrs: llr_sequence(example, &models.signal, &models.noise),
            receptions: Vec::new(),
            counts: Vec::new(),
        }
    }

    fn reception(&mut self, l_start: Option<usize>) -> &Reception {
        if let Some(k) = self.receptions.iter().position(|(l, _)| *l == l_start) {
            return &self.receptions[k].1;
        }
        let cfg = self.cfg;
        let link = self.link;
        let wus = modulate_wus(l_start, cfg);
        let wus_rx = propagate_wus(&wus, &link.channel, &link.noise.wur);
        let wus_peaks = step_peaks(&wus_rx, &self.template, cfg);
        let tx = match l_start {
            Some(l) => {
                let mut tx = modulate_pilot(l, cfg, &link.codes);
                let x = encode(self.example, &self.models.encoder, l).expect("models validated");
                add_data(&x, l, cfg, &link.codes, &mut tx);
                tx
            }
            None => vec![ChipSignal::zeros(crate::phy::frame_len(cfg)); cfg.n_t],
        };
        let rx = propagate_with_noise(&tx, &link.channel, &link.noise.rx);
        let f = feature_len(cfg);
        let mut features = vec![0.0; (cfg.l_max + 1) * f];
        for l in 1..=cfg.l_max {
            dehop_features(&rx, &link.codes, l, cfg, &mut features[l * f..(l + 1) * f]);
        }
        self.receptions.push((l_start, Reception { wus_peaks, features }));
        &self.receptions.last().expect("just pushed").1
    }

    /// Readout spike counts when the frame starts at `l_ref` and the radio
    /// is on from step `l_on`.
    fn counts(&mut self, l_start: Option<usize>, l_ref: usize, l_on: usize) -> Vec<u32> {
        let key = (l_ref, l_on);
        if let Some((_, c)) = self.counts.iter().find(|(k, _)| *k == key) {
            return c.clone();
        }
        let cfg = self.cfg;
        let models = self.models;
        let f = feature_len(cfg);
        let features = &self.reception(l_start).features;
        let p0 = cfg.pilot_start(l_ref);
        let mut pilot = vec![0.0; cfg.l_p * f];
        for k in 0..cfg.l_p {
            let l = p0 + k;
            if l >= l_on && l <= cfg.l_max {
                pilot[k * f..(k + 1) * f].copy_from_slice(&features[l * f..(l + 1) * f]);
            }
        }
        let decoder = hyper_adapt(&pilot, &models.hyper, &models.decoder).expect("models validated");
        let mut state = SnnState::new(&decoder);
        let mut counts = vec![0u32; cfg.classes];
        for l in cfg.data_start(l_ref).max(l_on)..=cfg.l_max {
            let r = state
                .step(&decoder, &features[l * f..(l + 1) * f])
                .expect("models validated");
            for (c, &b) in counts.iter_mut().zip(r) {
                *c += u32::from(b);
            }
        }
        self.counts.push((key, counts.clone()));
        counts
    }

    pub fn run(&mut self, lambda: &Hyperparams, policy: &TrialPolicy) -> TrialRecord {
        let cfg = self.cfg;
        let label = self.example.label;
        let full = ClassSet::full(cfg.classes);
        if lambda.secure {
            // Main radio off whatever the receiver mode.
            return TrialRecord::new(label, None, None, false, full, 0.0);
        }
        let l_start = match policy.tx {
            TxTrigger::Qusum => first_crossing(&self.llrs, lambda.sensing()),
            TxTrigger::Continuous => Some(1),
            TxTrigger::Oracle => Some(self.example.l_start),
        };
        let (l_det, l_on, energy) = match policy.radio {
            Radio::WakeUp => {
                let l_det = first_wake(&self.reception(l_start).wus_peaks, lambda.wake());
                match l_det {
                    Some(d) => (Some(d), d + cfg.delta_wake, trial_energy(Some(d), cfg)),
                    None => return TrialRecord::new(label, l_start, None, false, full, 0.0),
                }
            }
            Radio::AlwaysOn => (None, 1, cfg.p_on * cfg.l_max as f64),
        };
        let l_ref = match (l_start, l_det) {
            (Some(s), _) => s,
            (None, Some(d)) => d,
            (None, None) => return TrialRecord::new(label, None, None, false, full, energy),
        };
        let wake_ok = match (l_start, l_det) {
            (Some(s), Some(d)) => check_wake_timing(s, d, cfg),
            (Some(_), None) => true,
            _ => false,
        };
        let counts = self.counts(l_start, l_ref, l_on);
        let set = match policy.decision {
            Decision::Threshold => predict_set(&counts, lambda.decision()).0,
            Decision::TopK(k) => top_k_set(&counts, k),
        };
        TrialRecord::new(label, l_start, l_det, wake_ok, set, energy)
    }
}

/// Runs a single trial end to end.
pub fn run_trial(
    example: &LabeledExample,
    lambda: &Hyperparams,
    link: &LinkRealization,
    models: &Models,
    cfg: &SimConfig,
    policy: &TrialPolicy,
) -> TrialRecord {
    ExampleRunner::new(example, link, models, cfg).run(lambda, policy)
}

/// Untrained networks of the configured shape; inference runs but carries
/// no information.
pub fn random_models(
    cfg: &SimConfig,
    enc_hidden: usize,
    dec_hidden: usize,
    hyper_hidden: usize,
    beta: f64,
    threshold: f64,
    stream: &mut crate::rng::Stream,
) -> Models {
    let f = feature_len(cfg);
    let encoder = SnnParams::random(&[cfg.dim, enc_hidden, cfg.n_t], beta, threshold, 1.5, stream);
    let decoder = SnnParams::random(&[f, dec_hidden, cfg.classes], beta, threshold, 1.5, stream);
    let hyper = HyperNet::random(cfg.l_p * f, hyper_hidden, decoder.input_widths(), stream);
    Models {
        encoder,
        decoder,
        hyper,
        signal: GaussianModel::standard(cfg.dim),
        noise: GaussianModel::standard(cfg.dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_paper_config;

    #[test]
    fn wake_timing_examples() {
        let cfg = default_paper_config();
        assert!(check_wake_timing(8, 10, &cfg));
        assert!(!check_wake_timing(8, 12, &cfg));
        assert!(check_wake_timing(8, 11, &cfg));
    }

    #[test]
    fn energy_examples() {
        let cfg = default_paper_config();
        assert_eq!(trial_energy(Some(50), &cfg), 9.0);
        assert_eq!(trial_energy(None, &cfg), 0.0);
        assert_eq!(trial_energy(Some(1), &cfg), 58.0);
        assert_eq!(trial_energy(Some(60), &cfg), 0.0);
    }

    #[test]
    fn spike_count_examples() {
        let empty: [&[bool]; 0] = [];
        assert_eq!(spike_count(empty, 4), vec![0; 4]);
        let r = [true, false, true, false];
        assert_eq!(spike_count([&r[..]], 4), vec![1, 0, 1, 0]);
    }

    #[test]
    fn softmax_scores() {
        let (set, sv) = predict_set(&[5, 2, 0], 3.1);
        let p = [0.946_499_3, 0.047_123_4, 0.006_377_3];
        for (a, b) in sv.p.iter().zip(p) {
            assert!((a - b).abs() < 1e-6);
        }
        for (a, b) in sv.s.iter().zip([0.054_985_235, 3.054_985_235, 5.054_985_235]) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(set, ClassSet(0b011));
        assert!((sv.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (all, _) = predict_set(&[7, 7, 7, 7], libm::log(4.0) + 1e-9);
        assert_eq!(all, ClassSet::full(4));
        assert_eq!(predict_set(&[9, 0, 0], f64::INFINITY).0.len(), 3);
    }

    #[test]
    fn top_two() {
        assert_eq!(top_k_set(&[3, 9, 9, 1], 2), ClassSet(0b0110));
        assert_eq!(top_k_set(&[0, 0, 0, 0], 2), ClassSet(0b0011));
    }

    #[test]
    fn class_set_ops() {
        let mut s = ClassSet::empty();
        s.insert(3);
        s.insert(0);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3]);
        assert!(s.is_subset(ClassSet::full(4)));
        assert_eq!(ClassSet::full(64).len(), 64);
    }
}
