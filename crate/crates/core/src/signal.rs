//! Sensed-sequence generator and the Gaussian models used by onset detection.
//!
//! A sequence is `dim x l_max` samples. Before the onset and after the signal
//! of interest the samples are standard normal; for `l_sig` steps starting at
//! `l_start` they are `m_c + s * z` with a class mean `m_c` and fresh noise
//! `z` per step. Class means are `separation * e_c`, so classes are mutually
//! orthogonal and the Bayes error is controlled by one scalar.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DataConfig, SimConfig};
use crate::linalg::Cholesky;
use crate::rng::{derive_stream, standard_normal, stream_index, Purpose, Split, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("class {class} out of range for {classes} classes")]
    InvalidClass { class: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("gaussian model: {0}")]
    Model(&'static str),
}

/// One sensed sequence with its label and true onset (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub dim: usize,
    pub l_max: usize,
    /// Column-major samples; step `l` occupies `u[(l-1)*dim..l*dim]`.
    pub u: Vec<f64>,
    pub label: usize,
    pub l_start: usize,
}

impl LabeledExample {
    /// Sample vector at step `l` (1-based).
    #[inline]
    pub fn column(&self, l: usize) -> &[f64] {
        &self.u[(l - 1) * self.dim..l * self.dim]
    }

    /// Whether step `l` lies in the signal-of-interest window.
    pub fn in_signal(&self, l: usize, l_sig: usize) -> bool {
        l >= self.l_start && l < self.l_start + l_sig
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

pub fn class_mean(class: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    m[class % dim] = separation;
    m
}

/// Draws one sequence of class `class`. The onset is uniform on
/// `{1, ..., l_max - l_sig}`.
pub fn generate_example(
    class: usize,
    cfg: &SimConfig,
    data: &DataConfig,
    stream: &mut Stream,
) -> Result<LabeledExample, SignalError> {
    if class >= cfg.classes {
        return Err(SignalError::InvalidClass {
            class,
            classes: cfg.classes,
        });
    }
    let l_start = stream.random_range(1..=cfg.l_max - cfg.l_sig);
    let mean = class_mean(class, cfg.dim, data.class_separation);
    let mut u = Vec::with_capacity(cfg.dim * cfg.l_max);
    for l in 1..=cfg.l_max {
        let signal = l >= l_start && l < l_start + cfg.l_sig;
        for m in &mean {
            let z = standard_normal(stream);
            u.push(if signal {
                m + data.signal_noise_scale * z
            } else {
                z
            });
        }
    }
    Ok(LabeledExample {
        dim: cfg.dim,
        l_max: cfg.l_max,
        u,
        label: class,
        l_start,
    })
}

/// Example `item` of a split; the label is uniform over classes.
pub fn example_at(
    cfg: &SimConfig,
    data: &DataConfig,
    split: Split,
    rep: u32,
    item: u32,
) -> LabeledExample {
    let mut stream = derive_stream(cfg.seed, Purpose::Data, stream_index(split, rep, item));
    let class = stream.random_range(0..cfg.classes);
    generate_example(class, cfg, data, &mut stream).expect("class drawn in range")
}

pub fn generate_dataset(
    cfg: &SimConfig,
    data: &DataConfig,
    split: Split,
    rep: u32,
    count: usize,
) -> Dataset {
    Dataset {
        split,
        examples: (0..count as u32)
            .map(|i| example_at(cfg, data, split, rep, i))
            .collect(),
    }
}

/// Multivariate normal density with a cached Cholesky factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianModel {
    mu: Vec<f64>,
    sigma: Vec<f64>,
    chol: Cholesky,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl TryFrom<RawGaussian> for GaussianModel {
    type Error = SignalError;
    fn try_from(raw: RawGaussian) -> Result<Self, Self::Error> {
        GaussianModel::new(raw.mu, raw.sigma)
    }
}

impl From<GaussianModel> for RawGaussian {
    fn from(g: GaussianModel) -> Self {
        RawGaussian {
            mu: g.mu,
            sigma: g.sigma,
        }
    }
}

impl PartialEq for GaussianModel {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.sigma == other.sigma
    }
}

impl GaussianModel {
    /// `sigma` is row-major `d x d` and must be symmetric positive definite.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, SignalError> {
        let d = mu.len();
        if d == 0 || sigma.len() != d * d {
            return Err(SignalError::Model("shape mismatch"));
        }
        for i in 0..d {
            for j in 0..i {
                if (sigma[i * d + j] - sigma[j * d + i]).abs() > 1e-9 {
                    return Err(SignalError::Model("covariance not symmetric"));
                }
            }
        }
        let chol = Cholesky::new(&sigma, d).ok_or(SignalError::Model("covariance not positive definite"))?;
        let log_norm =
            -0.5 * (d as f64 * libm::log(2.0 * core::f64::consts::PI) + chol.log_det());
        Ok(Self {
            mu,
            sigma,
            chol,
            log_norm,
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], crate::linalg::Matrix::identity(dim).data)
            .expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn covariance(&self) -> &[f64] {
        &self.sigma
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut diff = [0.0f64; 64];
        let mut scratch = [0.0f64; 64];
        if d <= 64 {
            for i in 0..d {
                diff[i] = x[i] - self.mu[i];
            }
            self.log_norm - 0.5 * self.chol.quad_form(&diff[..d], &mut scratch[..d])
        } else {
            let diff: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
            let mut scratch = vec![0.0; d];
            self.log_norm - 0.5 * self.chol.quad_form(&diff, &mut scratch)
        }
    }
}

/// Fits the pooled signal-of-interest model over every signal-window column
/// of the dataset (population covariance plus a small ridge). The noise model
/// is the fixed standard normal.
pub fn fit_gaussian(
    dataset: &Dataset,
    l_sig: usize,
) -> Result<(GaussianModel, GaussianModel), SignalError> {
    let first = dataset.examples.first().ok_or(SignalError::EmptyDataset)?;
    let d = first.dim;
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    let columns = || {
        dataset.examples.iter().flat_map(move |ex| {
            let end = (ex.l_start + l_sig - 1).min(ex.l_max);
            (ex.l_start..=end).map(move |l| ex.column(l))
        })
    };
    for col in columns() {
        for (s, x) in sum.iter_mut().zip(col) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return Err(SignalError::EmptyDataset);
    }
    let n = count as f64;
    let mu: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut sigma = vec![0.0; d * d];
    for col in columns() {
        for i in 0..d {
            let di = col[i] - mu[i];
            for j in 0..=i {
                sigma[i * d + j] += di * (col[j] - mu[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = sigma[i * d + j] / n;
            sigma[i * d + j] = v;
            sigma[j * d + i] = v;
        }
    }
    let trace: f64 = (0..d).map(|i| sigma[i * d + i]).sum();
    let ridge = (1e-6 * trace / d as f64).max(1e-6);
    for i in 0..d {
        sigma[i * d + i] += ridge;
    }
    Ok((GaussianModel::new(mu, sigma)?, GaussianModel::standard(d)))
}

/// `log f_s(u) - log f_n(u)`.
pub fn log_likelihood_ratio(u: &[f64], signal: &GaussianModel, noise: &GaussianModel) -> f64 {
    signal.log_density(u) - noise.log_density(u)
}
