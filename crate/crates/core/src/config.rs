//! Threshold triples, link configuration and hyperparameter grids.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{ChannelModelSpec, Fading};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(&'static str),
    #[error("threshold {name} must be finite and non-negative, got {value}")]
    Threshold { name: &'static str, value: f64 },
    #[error("grid axis {0} must be non-empty and strictly increasing")]
    Grid(&'static str),
}

/// The threshold triple being calibrated: sensing (QUSUM), wake-up
/// (matched filter) and decision (log-loss score).
///
/// The secure triple behaves as `(+inf, +inf, +inf)` in every comparison but
/// is stored as an explicit flag so serialized output never carries infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda_s: f64,
    pub lambda_w: f64,
    pub lambda_d: f64,
    #[serde(default)]
    pub secure: bool,
}

impl Hyperparams {
    pub const SECURE: Hyperparams = Hyperparams {
        lambda_s: 0.0,
        lambda_w: 0.0,
        lambda_d: 0.0,
        secure: true,
    };

    pub fn new(lambda_s: f64, lambda_w: f64, lambda_d: f64) -> Result<Self, ConfigError> {
        for (name, value) in [
            ("lambda_s", lambda_s),
            ("lambda_w", lambda_w),
            ("lambda_d", lambda_d),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::Threshold { name, value });
            }
        }
        Ok(Self {
            lambda_s,
            lambda_w,
            lambda_d,
            secure: false,
        })
    }

    pub fn sensing(&self) -> f64 {
        if self.secure {
            f64::INFINITY
        } else {
            self.lambda_s
        }
    }

    pub fn wake(&self) -> f64 {
        if self.secure {
            f64::INFINITY
        } else {
            self.lambda_w
        }
    }

    pub fn decision(&self) -> f64 {
        if self.secure {
            f64::INFINITY
        } else {
            self.lambda_d
        }
    }

    /// Component-wise `self >= other`, with the secure triple above everything.
    pub fn ge_componentwise(&self, other: &Hyperparams) -> bool {
        self.sensing() >= other.sensing()
            && self.wake() >= other.wake()
            && self.decision() >= other.decision()
    }

    /// Lexicographic total order on `(s, w, d)`; secure sorts last.
    pub fn lex_cmp(&self, other: &Hyperparams) -> Ordering {
        match (self.secure, other.secure) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => self
                .lambda_s
                .total_cmp(&other.lambda_s)
                .then(self.lambda_w.total_cmp(&other.lambda_w))
                .then(self.lambda_d.total_cmp(&other.lambda_d)),
        }
    }
}

/// Link and experiment constants. Time is counted in steps starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub l_max: usize,
    pub l_sig: usize,
    pub l_w: usize,
    pub l_d: usize,
    pub l_p: usize,
    /// Chips per time step.
    pub l_b: usize,
    pub delta_wake: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub n_p: usize,
    pub snr_db: f64,
    pub p_on: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub classes: usize,
    pub dim: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg| Err(ConfigError::Invalid(msg));
        if self.l_max == 0 || self.l_sig == 0 {
            return bad("l_max and l_sig must be positive");
        }
        if self.l_sig > self.l_max {
            return bad("l_sig must not exceed l_max");
        }
        if self.l_sig == self.l_max {
            return bad("onset support {1..l_max-l_sig} is empty");
        }
        if self.delta_wake > self.l_d {
            return bad("delta_wake must not exceed l_d");
        }
        if self.l_w == 0 || self.l_p == 0 {
            return bad("l_w and l_p must be positive");
        }
        if self.l_w + self.l_d + self.l_p >= self.l_max {
            return bad("l_w + l_d + l_p must be below l_max");
        }
        if self.l_b == 0 || self.n_t == 0 || self.n_r == 0 || self.n_p == 0 {
            return bad("l_b, n_t, n_r and n_p must be positive");
        }
        if self.n_p > self.l_d * self.l_b {
            return bad("channel spread n_p must not exceed l_d * l_b chips");
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite");
        }
        if !(self.p_on.is_finite() && self.p_on >= 0.0) {
            return bad("p_on must be finite and non-negative");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be finite and non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.classes < 2 || self.classes > crate::pipeline::MAX_CLASSES {
            return bad("classes must lie in [2, 64]");
        }
        if self.dim == 0 || self.classes > self.dim {
            return bad("dim must be positive and at least the class count");
        }
        Ok(())
    }

    /// Noise power per chip for a unit-energy pulse.
    pub fn noise_power(&self) -> f64 {
        libm::pow(10.0, -self.snr_db / 10.0)
    }

    /// First data step relative to a WUS starting at `l_start`.
    pub fn pilot_start(&self, l_start: usize) -> usize {
        l_start + self.l_w + self.l_d
    }

    pub fn data_start(&self, l_start: usize) -> usize {
        self.pilot_start(l_start) + self.l_p
    }
}

/// Reference experimental constants with the desk-scale class count and input
/// dimension.
pub fn default_paper_config() -> SimConfig {
    SimConfig {
        l_max: 60,
        l_sig: 40,
        l_w: 2,
        l_d: 3,
        l_p: 2,
        l_b: 8,
        delta_wake: 2,
        n_t: 10,
        n_r: 2,
        n_p: 4,
        snr_db: 10.0,
        p_on: 1.0,
        gamma: 10.0,
        alpha: 0.2,
        delta: 0.05,
        classes: 4,
        dim: 16,
        seed: 0,
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        default_paper_config()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    pub values_s: Vec<f64>,
    pub values_w: Vec<f64>,
    pub values_d: Vec<f64>,
}

impl HyperGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn axis(values: &[f64], name: &'static str) -> Result<(), ConfigError> {
            let ok = !values.is_empty()
                && values.iter().all(|v| v.is_finite() && *v >= 0.0)
                && values.windows(2).all(|w| w[0] < w[1]);
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Grid(name))
            }
        }
        axis(&self.values_s, "values_s")?;
        axis(&self.values_w, "values_w")?;
        axis(&self.values_d, "values_d")
    }

    pub fn len(&self) -> usize {
        self.values_s.len() * self.values_w.len() * self.values_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All triples, `lambda_s` outermost and `lambda_d` innermost.
    pub fn candidates(&self) -> Vec<Hyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &s in &self.values_s {
            for &w in &self.values_w {
                for &d in &self.values_d {
                    out.push(Hyperparams {
                        lambda_s: s,
                        lambda_w: w,
                        lambda_d: d,
                        secure: false,
                    });
                }
            }
        }
        out
    }

    /// Grid used by the desk-scale experiments. The matched filter here
    /// peaks at `l_w * |a|` for a path gain `a`, and its noise-only magnitude
    /// has mean square `l_w * N_0`; the wake-up axis spans the range from
    /// frequent false alarms to frequent misses at 10 dB. The detection axis
    /// reaches thresholds that delay the onset by tens of steps, which is
    /// where late wake-up trades energy against accuracy.
    pub fn desk() -> Self {
        Self {
            values_s: alloc::vec![0.0, 5.0, 10.0, 20.0, 40.0],
            values_w: alloc::vec![0.6, 0.8, 1.0, 1.2, 1.4, 1.6],
            values_d: alloc::vec![1.0, 3.0, 5.0, 7.0, 9.0],
        }
    }
}

pub fn default_paper_grid() -> HyperGrid {
    HyperGrid {
        values_s: alloc::vec![0.0, 1.0, 2.0, 3.0, 4.0],
        values_w: alloc::vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        values_d: alloc::vec![1.0, 3.0, 5.0, 7.0, 9.0],
    }
}

/// Synthetic data generation and split sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Norm of each class mean vector.
    pub class_separation: f64,
    /// Standard deviation of the per-step perturbation around the class mean.
    pub signal_noise_scale: f64,
    pub n_train: usize,
    pub n_dt: usize,
    pub n_pt: usize,
    pub n_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            class_separation: 2.0,
            signal_noise_scale: 1.0,
            n_train: 1000,
            n_dt: 500,
            n_pt: 200,
            n_test: 4000,
        }
    }
}

/// Layer sizes and neuron constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub hyper_hidden: usize,
    pub beta: f64,
    pub threshold: f64,
}

impl NetConfig {
    pub fn desk() -> Self {
        Self {
            enc_hidden: 64,
            dec_hidden: 32,
            hyper_hidden: 64,
            beta: 0.9,
            threshold: 1.0,
        }
    }

    pub fn paper() -> Self {
        Self {
            enc_hidden: 500,
            dec_hidden: 200,
            hyper_hidden: 500,
            ..Self::desk()
        }
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Slope of the sigmoid surrogate for the spike nonlinearity.
    pub surrogate_slope: f64,
    /// Retries with a halved step size after a non-finite loss.
    pub max_retries: usize,
    /// Minimum output spike rate per step below which a quadratic penalty
    /// applies during training.
    pub rate_floor: f64,
    pub rate_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 16,
            batch_size: 16,
            learning_rate: 1e-3,
            surrogate_slope: 5.0,
            max_retries: 3,
            rate_floor: 0.1,
            rate_weight: 100.0,
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub physical: ChannelModelSpec,
    pub twin: ChannelModelSpec,
    pub grid: HyperGrid,
}

impl ExperimentConfig {
    /// Default link constants with `p_on = 0.25`, Rayleigh physical channel
    /// and matched twin, desk-scale data sizes and the desk grid. With four
    /// classes and `gamma = 10` a full set costs 40, so at `p_on = 1` staying
    /// asleep beats any wake-up and the energy trade-off disappears.
    pub fn desk() -> Self {
        let sim = SimConfig {
            p_on: 0.25,
            ..default_paper_config()
        };
        let channel = ChannelModelSpec {
            n_paths: sim.n_p,
            fading: Fading::Rayleigh,
            path_powers: None,
        };
        Self {
            sim,
            data: DataConfig::default(),
            network: NetConfig::desk(),
            train: TrainConfig::default(),
            physical: channel.clone(),
            twin: channel,
            grid: HyperGrid::desk(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        self.grid.validate()?;
        self.physical.validate()?;
        self.twin.validate()?;
        if self.physical.n_paths != self.sim.n_p {
            return Err(ConfigError::Invalid(
                "physical channel path count must equal sim.n_p",
            ));
        }
        if self.data.n_pt == 0 || self.data.n_dt == 0 {
            return Err(ConfigError::Invalid("n_dt and n_pt must be positive"));
        }
        if !(self.data.class_separation.is_finite() && self.data.signal_noise_scale >= 0.0) {
            return Err(ConfigError::Invalid("bad class separation or noise scale"));
        }
        let n = &self.network;
        if n.enc_hidden == 0 || n.dec_hidden == 0 || n.hyper_hidden == 0 {
            return Err(ConfigError::Invalid("layer widths must be positive"));
        }
        if !(0.0..=1.0).contains(&n.beta) || !(n.threshold > 0.0) {
            return Err(ConfigError::Invalid("beta must lie in [0,1], threshold > 0"));
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_values() {
        let c = default_paper_config();
        assert_eq!(
            (c.l_max, c.l_sig, c.l_w, c.l_d, c.l_p, c.delta_wake),
            (60, 40, 2, 3, 2, 2)
        );
        assert_eq!((c.n_t, c.n_r, c.n_p), (10, 2, 4));
        assert_eq!(c.p_on, 1.0);
        assert_eq!(c.snr_db, 10.0);
        assert_eq!(c.gamma, 10.0);
        assert!(c.delta_wake <= c.l_d);
        c.validate().unwrap();
    }

    #[test]
    fn default_grid_shape() {
        let g = default_paper_grid();
        assert_eq!(g.values_s, [0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.values_w, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(g.values_d, [1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(g.len(), 150);
        assert_eq!(g.candidates().len(), 150);
        g.validate().unwrap();
        HyperGrid::desk().validate().unwrap();
    }

    #[test]
    fn grid_rejects_unsorted_axis() {
        let mut g = default_paper_grid();
        g.values_w = alloc::vec![0.2, 0.1];
        assert_eq!(g.validate(), Err(ConfigError::Grid("values_w")));
        g.values_w.clear();
        assert!(g.validate().is_err());
    }

    #[test]
    fn secure_dominates_finite_triples() {
        let finite = Hyperparams::new(4.0, 0.6, 9.0).unwrap();
        assert!(Hyperparams::SECURE.ge_componentwise(&finite));
        assert!(!finite.ge_componentwise(&Hyperparams::SECURE));
        assert_eq!(Hyperparams::SECURE.sensing(), f64::INFINITY);
        assert_eq!(
            Hyperparams::SECURE.lex_cmp(&finite),
            core::cmp::Ordering::Greater
        );
    }

    #[test]
    fn hyperparams_reject_negative_and_nan() {
        assert!(Hyperparams::new(-1.0, 0.0, 0.0).is_err());
        assert!(Hyperparams::new(0.0, f64::NAN, 0.0).is_err());
        assert!(Hyperparams::new(0.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = default_paper_config();
        c.delta_wake = 4;
        assert!(c.validate().is_err());
        let mut c = default_paper_config();
        c.l_w = 20;
        c.l_d = 20;
        c.l_p = 20;
        assert!(c.validate().is_err());
        let mut c = default_paper_config();
        c.n_p = 25;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noise_power_from_snr() {
        let c = default_paper_config();
        assert!((c.noise_power() - 0.1).abs() < 1e-15);
    }
}
