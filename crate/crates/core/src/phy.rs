//! Chip-level impulse-radio link.
//!
//! Time is discretised at the chip rate with `T_c = 1`; step `l` spans chips
//! `[l * l_b, (l + 1) * l_b)`. A pulse is a unit-energy single chip. A frame
//! covers steps `0..=l_max` plus a guard of `l_d * l_b` chips that absorbs the
//! channel spread of the last step.
//!
//! The wake-up signal is an all-ones OOK burst of `l_w` pulses, one per step.
//! Pilots and data use per-step, per-antenna time-hopping offsets drawn from a
//! stream shared by transmitter and receiver. Each tx/rx antenna pair has its
//! own multipath tap vector; path `p` arrives after `delays[p]` chips.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, SimConfig};
use crate::rng::{complex_normal, Stream};
use crate::snn::SpikeTrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Fading {
    Rayleigh,
    /// Line-of-sight to scattered power ratio `K` in dB.
    Rician { k_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModelSpec {
    pub n_paths: usize,
    pub fading: Fading,
    /// Relative per-path powers; equal when absent. Normalised to sum 1.
    #[serde(default)]
    pub path_powers: Option<Vec<f64>>,
}

impl ChannelModelSpec {
    pub fn rayleigh(n_paths: usize) -> Self {
        Self {
            n_paths,
            fading: Fading::Rayleigh,
            path_powers: None,
        }
    }

    pub fn rician(n_paths: usize, k_db: f64) -> Self {
        Self {
            n_paths,
            fading: Fading::Rician { k_db },
            path_powers: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_paths == 0 {
            return Err(ConfigError::Invalid("channel needs at least one path"));
        }
        if let Fading::Rician { k_db } = self.fading {
            if k_db.is_nan() {
                return Err(ConfigError::Invalid("rice factor is NaN"));
            }
        }
        if let Some(p) = &self.path_powers {
            if p.len() != self.n_paths || p.iter().any(|x| !(*x >= 0.0)) || p.iter().sum::<f64>() <= 0.0
            {
                return Err(ConfigError::Invalid("path powers must match n_paths and be >= 0"));
            }
        }
        Ok(())
    }

    fn normalised_powers(&self) -> Vec<f64> {
        match &self.path_powers {
            Some(p) => {
                let total: f64 = p.iter().sum();
                p.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / self.n_paths as f64; self.n_paths],
        }
    }
}

/// One draw of every fading amplitude of a trial, plus the noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub n_t: usize,
    pub n_r: usize,
    /// Arrival delay in chips of each path.
    pub delays: Vec<usize>,
    /// Amplitudes indexed `[(i * n_r + n) * n_paths + p]`.
    pub taps: Vec<Complex64>,
    /// Wake-up transmitter to wake-up receiver link.
    pub wus_taps: Vec<Complex64>,
    pub noise_power: f64,
}

impl ChannelRealization {
    pub fn n_paths(&self) -> usize {
        self.delays.len()
    }

    #[inline]
    pub fn link(&self, tx: usize, rx: usize) -> &[Complex64] {
        let p = self.n_paths();
        let at = (tx * self.n_r + rx) * p;
        &self.taps[at..at + p]
    }

    /// Every link a single path with gain 1 at `delay` chips.
    pub fn ideal(n_t: usize, n_r: usize, delay: usize, noise_power: f64) -> Self {
        Self {
            n_t,
            n_r,
            delays: vec![delay],
            taps: vec![Complex64::new(1.0, 0.0); n_t * n_r],
            wus_taps: vec![Complex64::new(1.0, 0.0)],
            noise_power,
        }
    }
}

fn draw_tap<R: Rng + ?Sized>(fading: &Fading, power: f64, rng: &mut R) -> Complex64 {
    match *fading {
        Fading::Rayleigh => complex_normal(rng, power),
        Fading::Rician { k_db } => {
            let k = libm::pow(10.0, k_db / 10.0);
            let phase = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
            let los = libm::sqrt(power * k / (k + 1.0));
            Complex64::from_polar(los, phase) + complex_normal(rng, power / (k + 1.0))
        }
    }
}

/// Independent amplitudes per (path, tx, rx) with total average power 1 per
/// link; path `p` has delay `p + 1` chips. `N_0 = 10^(-snr/10)`.
pub fn draw_channel(
    spec: &ChannelModelSpec,
    n_t: usize,
    n_r: usize,
    snr_db: f64,
    stream: &mut Stream,
) -> ChannelRealization {
    let powers = spec.normalised_powers();
    let mut taps = Vec::with_capacity(n_t * n_r * spec.n_paths);
    for _ in 0..n_t * n_r {
        for &pw in &powers {
            taps.push(draw_tap(&spec.fading, pw, stream));
        }
    }
    let wus_taps = powers
        .iter()
        .map(|&pw| draw_tap(&spec.fading, pw, stream))
        .collect();
    ChannelRealization {
        n_t,
        n_r,
        delays: (1..=spec.n_paths).collect(),
        taps,
        wus_taps,
        noise_power: libm::pow(10.0, -snr_db / 10.0),
    }
}

/// Complex baseband samples on the chip grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSignal(pub Vec<Complex64>);

impl ChipSignal {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn pulse_count(&self) -> usize {
        self.0.iter().filter(|z| z.norm_sqr() > 0.0).count()
    }

    /// The `l_b` chips of step `l`.
    pub fn step(&self, l: usize, l_b: usize) -> &[Complex64] {
        &self.0[l * l_b..(l + 1) * l_b]
    }
}

pub fn frame_len(cfg: &SimConfig) -> usize {
    (cfg.l_max + 1 + cfg.l_d) * cfg.l_b
}

/// Time-hopping offsets `c[j][i]` in `[0, l_b)` for steps `0..=l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoppingCodes {
    n_t: usize,
    codes: Vec<u16>,
}

impl HoppingCodes {
    pub fn draw(cfg: &SimConfig, stream: &mut Stream) -> Self {
        let n = (cfg.l_max + 1) * cfg.n_t;
        let codes = (0..n)
            .map(|_| stream.random_range(0..cfg.l_b) as u16)
            .collect();
        Self { n_t: cfg.n_t, codes }
    }

    #[inline]
    pub fn code(&self, step: usize, antenna: usize) -> usize {
        usize::from(self.codes[step * self.n_t + antenna])
    }
}

/// OOK wake-up burst: unit pulses at chips `j * l_b` for
/// `j in [l_start, l_start + l_w)`, truncated at `l_max`. No onset means
/// nothing is sent.
pub fn modulate_wus(l_start: Option<usize>, cfg: &SimConfig) -> ChipSignal {
    let mut s = ChipSignal::zeros(frame_len(cfg));
    if let Some(l0) = l_start {
        for j in l0..(l0 + cfg.l_w).min(cfg.l_max + 1) {
            s.0[j * cfg.l_b] = Complex64::new(1.0, 0.0);
        }
    }
    s
}

/// Clean wake-up waveform for an onset at the time origin.
pub fn wus_template(cfg: &SimConfig) -> ChipSignal {
    let mut s = ChipSignal::zeros((cfg.l_w - 1) * cfg.l_b + 1);
    for j in 0..cfg.l_w {
        s.0[j * cfg.l_b] = Complex64::new(1.0, 0.0);
    }
    s
}

/// Pilot pulses on every transmit antenna for the `l_p` steps following the
/// wake-up burst and the guard delay.
pub fn modulate_pilot(l_start: usize, cfg: &SimConfig, codes: &HoppingCodes) -> Vec<ChipSignal> {
    let mut out = vec![ChipSignal::zeros(frame_len(cfg)); cfg.n_t];
    let first = cfg.pilot_start(l_start);
    for j in first..(first + cfg.l_p).min(cfg.l_max + 1) {
        for (i, s) in out.iter_mut().enumerate() {
            s.0[j * cfg.l_b + codes.code(j, i)] = Complex64::new(1.0, 0.0);
        }
    }
    out
}

/// Slot `j` of the data window carries the buffered encoder output
/// `x[:, j - data_start]` (first in, first out); antenna `i` pulses at chip
/// `j * l_b + c[j][i]` when its entry is 1. Output beyond `l_max` is dropped.
pub fn add_data(
    x: &SpikeTrain,
    l_start: usize,
    cfg: &SimConfig,
    codes: &HoppingCodes,
    out: &mut [ChipSignal],
) {
    let d0 = cfg.data_start(l_start);
    for (k, j) in (d0..=cfg.l_max).enumerate() {
        if k >= x.steps() {
            break;
        }
        for (i, s) in out.iter_mut().enumerate().take(x.neurons()) {
            if x.get(i, k) {
                s.0[j * cfg.l_b + codes.code(j, i)] += Complex64::new(1.0, 0.0);
            }
        }
    }
}

pub fn modulate_data(
    x: &SpikeTrain,
    l_start: usize,
    cfg: &SimConfig,
    codes: &HoppingCodes,
) -> Vec<ChipSignal> {
    let mut out = vec![ChipSignal::zeros(frame_len(cfg)); cfg.n_t];
    add_data(x, l_start, cfg, codes, &mut out);
    out
}

/// Receiver noise of one trial: the wake-up receiver and each main antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub wur: ChipSignal,
    pub rx: Vec<ChipSignal>,
}

impl NoiseField {
    pub fn draw(cfg: &SimConfig, noise_power: f64, stream: &mut Stream) -> Self {
        let len = frame_len(cfg);
        let mut draw = || ChipSignal((0..len).map(|_| complex_normal(stream, noise_power)).collect());
        let wur = draw();
        let rx = (0..cfg.n_r).map(|_| draw()).collect();
        Self { wur, rx }
    }

    pub fn silent(cfg: &SimConfig) -> Self {
        let len = frame_len(cfg);
        Self {
            wur: ChipSignal::zeros(len),
            rx: vec![ChipSignal::zeros(len); cfg.n_r],
        }
    }
}

fn convolve_acc(input: &ChipSignal, taps: &[Complex64], delays: &[usize], out: &mut ChipSignal) {
    let len = out.0.len();
    for (k, x) in input.0.iter().enumerate() {
        if x.re == 0.0 && x.im == 0.0 {
            continue;
        }
        for (a, &d) in taps.iter().zip(delays) {
            if k + d < len {
                out.0[k + d] += x * a;
            }
        }
    }
}

/// Per receive antenna `n`: `sum_i s_i * h_{i,n} + z_n`.
pub fn propagate_with_noise(
    signals: &[ChipSignal],
    h: &ChannelRealization,
    noise: &[ChipSignal],
) -> Vec<ChipSignal> {
    (0..h.n_r)
        .map(|n| {
            let mut out = noise[n].clone();
            for (i, s) in signals.iter().enumerate() {
                convolve_acc(s, h.link(i, n), &h.delays, &mut out);
            }
            out
        })
        .collect()
}

/// Propagation with freshly drawn receiver noise of power `h.noise_power`.
pub fn propagate(
    signals: &[ChipSignal],
    h: &ChannelRealization,
    stream: &mut Stream,
) -> Vec<ChipSignal> {
    let len = signals.first().map_or(0, ChipSignal::len);
    let noise: Vec<ChipSignal> = (0..h.n_r)
        .map(|_| ChipSignal((0..len).map(|_| complex_normal(stream, h.noise_power)).collect()))
        .collect();
    propagate_with_noise(signals, h, &noise)
}

pub fn propagate_wus(wus: &ChipSignal, h: &ChannelRealization, noise: &ChipSignal) -> ChipSignal {
    let mut out = noise.clone();
    convolve_acc(wus, &h.wus_taps, &h.delays, &mut out);
    out
}

/// Number of receiver features per step: one per (tx, rx) antenna pair.
pub fn feature_len(cfg: &SimConfig) -> usize {
    cfg.n_t * cfg.n_r
}

/// Time-hopping demodulation of one step. Feature `i * n_r + n` is the
/// energy received at antenna `n` over the `n_p` chips that follow transmit
/// antenna `i`'s hop position, which is where its pulse lands after the
/// channel delays.
pub fn dehop_features(
    rx: &[ChipSignal],
    codes: &HoppingCodes,
    step: usize,
    cfg: &SimConfig,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), feature_len(cfg));
    for i in 0..cfg.n_t {
        let first = step * cfg.l_b + codes.code(step, i) + 1;
        for (n, r) in rx.iter().enumerate() {
            let end = (first + cfg.n_p).min(r.len());
            out[i * cfg.n_r + n] = r.0[first.min(end)..end].iter().map(|z| z.norm_sqr()).sum();
        }
    }
}

/// Matched-filter output `d(tau) = sum_k w[tau + k] conj(t[k])`.
pub fn correlate(rx: &ChipSignal, template: &ChipSignal) -> Vec<Complex64> {
    let taps: Vec<(usize, Complex64)> = template
        .0
        .iter()
        .enumerate()
        .filter(|(_, t)| t.norm_sqr() > 0.0)
        .map(|(k, t)| (k, t.conj()))
        .collect();
    (0..rx.len())
        .map(|tau| {
            taps.iter()
                .filter(|(k, _)| tau + k < rx.len())
                .map(|(k, t)| rx.0[tau + k] * t)
                .sum()
        })
        .collect()
}

/// Largest `|d(tau)|` over the chips of each step; index `l` for `0..=l_max`.
pub fn step_peaks(rx: &ChipSignal, template: &ChipSignal, cfg: &SimConfig) -> Vec<f64> {
    let d = correlate(rx, template);
    (0..=cfg.l_max)
        .map(|l| {
            d[l * cfg.l_b..(l + 1) * cfg.l_b]
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// First step in `1..=l_max` whose peak reaches `lambda_w`.
pub fn first_wake(peaks: &[f64], lambda_w: f64) -> Option<usize> {
    if lambda_w.is_infinite() {
        return None;
    }
    (1..peaks.len()).find(|&l| peaks[l] >= lambda_w)
}

/// WUS detection time: the first step whose correlator magnitude is at least
/// `lambda_w`. The correlator is evaluated at every chip offset within the
/// step so that a path arriving a few chips late is still captured.
pub fn detect_wus(
    rx_wus: &ChipSignal,
    template: &ChipSignal,
    lambda_w: f64,
    cfg: &SimConfig,
) -> Option<usize> {
    if lambda_w.is_infinite() {
        return None;
    }
    first_wake(&step_peaks(rx_wus, template, cfg), lambda_w)
}
