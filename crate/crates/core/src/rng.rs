//! Named, reproducible random substreams.
//!
//! Every random quantity in an experiment is drawn from a ChaCha stream keyed
//! by `(seed, purpose, index)`. Keeping the keys disjoint makes it possible to
//! hold one part of an experiment fixed (say the twin data and channels) while
//! resampling another (the on-air calibration set).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

const DOMAIN: u64 = 0x7761_6b65_6c69_6e6b; // "wakelink"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Labels, onsets and sensed samples.
    Data,
    /// Fading amplitudes.
    Channel,
    /// Receiver noise.
    Noise,
    /// Time-hopping codes shared by both link ends.
    Hopping,
    /// Network weight initialisation.
    Init,
    /// Trainer shuffling and training-time link draws.
    Train,
}

impl Purpose {
    const fn tag(self) -> u64 {
        match self {
            Purpose::Data => 1,
            Purpose::Channel => 2,
            Purpose::Noise => 3,
            Purpose::Hopping => 4,
            Purpose::Init => 5,
            Purpose::Train => 6,
        }
    }
}

/// Dataset split. Indices of different splits never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "PT")]
    Pt,
    #[serde(rename = "test")]
    Test,
}

impl Split {
    const fn code(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Dt => 2,
            Split::Pt => 3,
            Split::Test => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dt => "DT",
            Split::Pt => "PT",
            Split::Test => "test",
        }
    }
}

/// Packs `(split, repetition, item)` into one stream index.
pub fn stream_index(split: Split, rep: u32, item: u32) -> u64 {
    (split.code() << 56) | ((u64::from(rep) & 0x00ff_ffff) << 32) | u64::from(item)
}

/// Returns the stream for `(seed, purpose, index)`; identical keys always
/// give identical streams and distinct keys give independent ones.
pub fn derive_stream(seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.tag().to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&DOMAIN.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly-symmetric complex normal with `E|z|^2 = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = libm::sqrt(variance / 2.0);
    Complex64::new(s * standard_normal(rng), s * standard_normal(rng))
}
