//! Cumulative-sum onset detection at the transmitter.
//!
//! `S_l = max(0, S_{l-1} + llr_l)` with `S_0 = 0`; the encoder and wake-up
//! transmitter are activated at the first step where `S_l > lambda_s`.

use alloc::vec::Vec;

use crate::signal::{log_likelihood_ratio, GaussianModel, LabeledExample};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QusumState {
    pub statistic: f64,
    pub step: usize,
}

pub fn qusum_step(state: QusumState, llr: f64) -> QusumState {
    QusumState {
        statistic: (state.statistic + llr).max(0.0),
        step: state.step + 1,
    }
}

/// Per-step log-likelihood ratios for steps `1..=l_max`, computed online.
pub fn llr_sequence(
    example: &LabeledExample,
    signal: &GaussianModel,
    noise: &GaussianModel,
) -> Vec<f64> {
    (1..=example.l_max)
        .map(|l| log_likelihood_ratio(example.column(l), signal, noise))
        .collect()
}

/// First step (1-based) at which the statistic strictly exceeds `lambda_s`.
/// An infinite threshold never fires.
pub fn first_crossing(llrs: &[f64], lambda_s: f64) -> Option<usize> {
    if lambda_s.is_infinite() {
        return None;
    }
    let mut state = QusumState::default();
    for &llr in llrs {
        state = qusum_step(state, llr);
        if state.statistic > lambda_s {
            return Some(state.step);
        }
    }
    None
}

/// Onset estimate for a sensed sequence over `1..=l_max`.
pub fn detect_onset(
    example: &LabeledExample,
    signal: &GaussianModel,
    noise: &GaussianModel,
    lambda_s: f64,
    l_max: usize,
) -> Option<usize> {
    if lambda_s.is_infinite() {
        return None;
    }
    let llrs = llr_sequence(example, signal, noise);
    first_crossing(&llrs[..l_max.min(llrs.len())], lambda_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let s = |x| QusumState {
            statistic: x,
            step: 0,
        };
        assert_eq!(qusum_step(s(0.0), -1.0).statistic, 0.0);
        assert_eq!(qusum_step(s(2.0), 0.5).statistic, 2.5);
        assert_eq!(qusum_step(s(0.3), -0.7).statistic, 0.0);
        assert_eq!(qusum_step(s(0.3), -0.7).step, 1);
    }

    #[test]
    fn zero_threshold_fires_on_first_positive() {
        assert_eq!(first_crossing(&[0.2, -5.0], 0.0), Some(1));
        assert_eq!(first_crossing(&[0.0, 0.0, 0.1], 0.0), Some(3));
    }

    #[test]
    fn infinite_threshold_never_fires() {
        assert_eq!(first_crossing(&[1e300, 1e300], f64::INFINITY), None);
    }

    #[test]
    fn strict_inequality() {
        assert_eq!(first_crossing(&[1.0, 0.0, 0.5], 1.0), Some(3));
    }
}
