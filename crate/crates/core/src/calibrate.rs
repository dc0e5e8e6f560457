//! Threshold calibration with a finite-sample reliability guarantee.
//!
//! The digital twin evaluates a grid of threshold triples on simulated
//! channels and keeps the Pareto front of (loss, energy + gamma * size). The
//! front, ordered by twin loss, is then tested on air one candidate at a time
//! until the empirical loss exceeds `psi = alpha - sqrt(ln(1/delta) / 2n)`.
//! Every candidate that passed is certified; among them the one with the
//! smallest on-air objective is selected. If the first candidate already
//! fails, the secure triple is returned.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DataConfig, HyperGrid, Hyperparams, SimConfig};
use crate::exec::{Executor, Sequential};
use crate::phy::ChannelModelSpec;
use crate::pipeline::{ExampleRunner, LinkRealization, Models, TrialPolicy};
use crate::rng::Split;
use crate::signal::{example_at, LabeledExample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrateError {
    #[error("no examples to evaluate")]
    EmptyDataset,
    #[error("no candidates to evaluate")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "PT")]
    Pt,
    #[serde(rename = "test")]
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub lambda: Hyperparams,
    pub loss_hat: f64,
    pub energy_hat: f64,
    pub size_hat: f64,
    pub origin: Origin,
}

impl CandidateEval {
    pub fn objective(&self, gamma: f64) -> f64 {
        self.energy_hat + gamma * self.size_hat
    }
}

/// Where the trials of an evaluation come from: either explicit examples
/// or examples generated on the fly for `(split, rep)`. Each example gets
/// its own link realization keyed by the same `(split, rep, item)`.
#[derive(Debug, Clone, Copy)]
pub struct TrialSource<'a> {
    pub split: Split,
    pub rep: u32,
    pub count: usize,
    pub examples: Option<&'a [LabeledExample]>,
    pub data: &'a DataConfig,
    pub channel: &'a ChannelModelSpec,
}

impl<'a> TrialSource<'a> {
    pub fn generated(
        split: Split,
        rep: u32,
        count: usize,
        data: &'a DataConfig,
        channel: &'a ChannelModelSpec,
    ) -> Self {
        Self {
            split,
            rep,
            count,
            examples: None,
            data,
            channel,
        }
    }

    pub fn given(
        split: Split,
        rep: u32,
        examples: &'a [LabeledExample],
        data: &'a DataConfig,
        channel: &'a ChannelModelSpec,
    ) -> Self {
        Self {
            split,
            rep,
            count: examples.len(),
            examples: Some(examples),
            data,
            channel,
        }
    }
}

/// Per-candidate trial sums of one example.
type Sums = Vec<[f64; 3]>;

fn example_sums(
    i: usize,
    candidates: &[Hyperparams],
    source: &TrialSource<'_>,
    models: &Models,
    cfg: &SimConfig,
    policy: &TrialPolicy,
) -> Sums {
    let owned;
    let example = match source.examples {
        Some(ex) => &ex[i],
        None => {
            owned = example_at(cfg, source.data, source.split, source.rep, i as u32);
            &owned
        }
    };
    let link = LinkRealization::draw(cfg, source.channel, source.split, source.rep, i as u32);
    let mut runner = ExampleRunner::new(example, &link, models, cfg);
    candidates
        .iter()
        .map(|lambda| {
            let r = runner.run(lambda, policy);
            [f64::from(r.loss), r.energy, r.set_size as f64]
        })
        .collect()
}

/// Empirical loss, energy and set size of each candidate, one fresh link
/// realization per example. Sums are reduced in example order.
pub fn evaluate_candidates<E: Executor>(
    candidates: &[Hyperparams],
    source: &TrialSource<'_>,
    models: &Models,
    cfg: &SimConfig,
    policy: &TrialPolicy,
    origin: Origin,
    exec: &E,
) -> Result<Vec<CandidateEval>, CalibrateError> {
    if source.count == 0 {
        return Err(CalibrateError::EmptyDataset);
    }
    let per_example = exec.map(source.count, |i| {
        example_sums(i, candidates, source, models, cfg, policy)
    });
    let mut totals = vec![[0.0; 3]; candidates.len()];
    for sums in &per_example {
        for (t, s) in totals.iter_mut().zip(sums) {
            for k in 0..3 {
                t[k] += s[k];
            }
        }
    }
    let n = source.count as f64;
    Ok(candidates
        .iter()
        .zip(totals)
        .map(|(lambda, t)| CandidateEval {
            lambda: *lambda,
            loss_hat: t[0] / n,
            energy_hat: t[1] / n,
            size_hat: t[2] / n,
            origin,
        })
        .collect())
}

/// Candidates ordered by twin loss with no member dominated in
/// (loss, energy + gamma * size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    pub gamma: f64,
    pub members: Vec<CandidateEval>,
}

impl ParetoSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn lambdas(&self) -> Vec<Hyperparams> {
        self.members.iter().map(|m| m.lambda).collect()
    }
}

/// Weak-Pareto filter: a point survives unless another is no worse in both
/// objectives and better in one. Exact duplicates keep the
/// lexicographically smallest triple.
pub fn pareto_preselect(evals: &[CandidateEval], gamma: f64) -> ParetoSet {
    let mut sorted: Vec<CandidateEval> = evals.to_vec();
    sorted.sort_by(|a, b| {
        a.loss_hat
            .total_cmp(&b.loss_hat)
            .then(a.objective(gamma).total_cmp(&b.objective(gamma)))
            .then(a.lambda.lex_cmp(&b.lambda))
    });
    let mut best = f64::INFINITY;
    let mut members = Vec::new();
    for e in sorted {
        let obj = e.objective(gamma);
        if obj < best {
            best = obj;
            members.push(e);
        }
    }
    ParetoSet { gamma, members }
}

/// On-air loss threshold.
pub fn psi_threshold(alpha: f64, delta: f64, n: usize) -> f64 {
    alpha - libm::sqrt(-libm::log(delta) / (2.0 * n as f64))
}

/// Hoeffding p-value for the null "true loss exceeds alpha".
pub fn hoeffding_p_value(loss_hat: f64, alpha: f64, n: usize) -> f64 {
    let gap = (alpha - loss_hat).max(0.0);
    libm::exp(-2.0 * n as f64 * gap * gap)
}

/// Which tested candidates the final selection ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    /// Only candidates that passed the test. This is the set covered by the
    /// reliability guarantee.
    #[default]
    Certified,
    /// All tested candidates including the one that stopped the test.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub lambda_star: Hyperparams,
    /// On-air evaluations in test order, up to and including the stopping
    /// candidate.
    pub tested: Vec<CandidateEval>,
    /// 1-based index of the first failing candidate, or the number tested
    /// when none failed. Zero when there was nothing to test.
    pub j_stop: usize,
    pub secure: bool,
    pub psi: f64,
    /// 0-based index into `tested` of the selected candidate.
    pub selected: Option<usize>,
}

impl CalibrationResult {
    pub fn secure(tested: Vec<CandidateEval>, j_stop: usize, psi: f64) -> Self {
        Self {
            lambda_star: Hyperparams::SECURE,
            tested,
            j_stop,
            secure: true,
            psi,
            selected: None,
        }
    }
}

/// Fixed-sequence testing over on-air evaluations given in test order.
/// Candidates after the stopping one are discarded unseen.
pub fn fixed_sequence_test(
    evals: &[CandidateEval],
    psi: f64,
    gamma: f64,
    rule: SelectionRule,
) -> CalibrationResult {
    let stop = evals.iter().position(|e| e.loss_hat > psi);
    let (tested, j_stop, pool) = match stop {
        Some(k) => {
            let pool = match rule {
                SelectionRule::Certified => k,
                SelectionRule::Literal => k + 1,
            };
            (evals[..=k].to_vec(), k + 1, pool)
        }
        None => (evals.to_vec(), evals.len(), evals.len()),
    };
    if stop == Some(0) || tested.is_empty() {
        return CalibrationResult::secure(tested, j_stop, psi);
    }
    let mut best = 0;
    for j in 1..pool {
        if tested[j].objective(gamma) < tested[best].objective(gamma) {
            best = j;
        }
    }
    CalibrationResult {
        lambda_star: tested[best].lambda,
        tested,
        j_stop,
        secure: false,
        psi,
        selected: Some(best),
    }
}

/// Calibration method: the twin-assisted procedure or one of the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dtltt,
    /// Always-on receiver, transmission from the first step, top-2 set.
    Conventional,
    /// Fixed-order testing of a grid subset without twin pre-selection.
    PlainLtt,
    /// Twin-assisted testing with the main radio always on.
    AlwaysOn,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Dtltt,
        Method::Conventional,
        Method::PlainLtt,
        Method::AlwaysOn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dtltt => "dtltt",
            Method::Conventional => "conventional",
            Method::PlainLtt => "plain-ltt",
            Method::AlwaysOn => "always-on",
        }
    }

    pub fn policy(self) -> TrialPolicy {
        match self {
            Method::Dtltt | Method::PlainLtt => TrialPolicy::WAKE_UP,
            Method::Conventional => TrialPolicy::CONVENTIONAL,
            Method::AlwaysOn => TrialPolicy::ALWAYS_ON,
        }
    }
}

/// Plain-LTT test order: a coarse subset of the grid (wake-up thresholds at
/// positions 0 and 2, decision thresholds at positions 0, 2 and 4), ordered
/// from the most conservative triple downwards with `lambda_d` varying
/// slowest and `lambda_s` fastest.
pub fn plain_ltt_order(grid: &HyperGrid) -> Vec<Hyperparams> {
    let pick = |v: &[f64], idx: &[usize]| -> Vec<f64> {
        idx.iter().filter_map(|&i| v.get(i).copied()).collect()
    };
    let ws = pick(&grid.values_w, &[0, 2]);
    let ds = pick(&grid.values_d, &[0, 2, 4]);
    let mut out = Vec::new();
    for &d in ds.iter().rev() {
        for &w in ws.iter().rev() {
            for &s in grid.values_s.iter().rev() {
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

/// Grid with the wake-up axis pinned to zero, for the always-on receiver.
pub fn always_on_candidates(grid: &HyperGrid) -> Vec<Hyperparams> {
    HyperGrid {
        values_s: grid.values_s.clone(),
        values_w: vec![0.0],
        values_d: grid.values_d.clone(),
    }
    .candidates()
}

/// Everything a calibration run needs besides the on-air data.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationSetup<'a> {
    pub cfg: &'a SimConfig,
    pub data: &'a DataConfig,
    pub physical: &'a ChannelModelSpec,
    pub twin: &'a ChannelModelSpec,
    pub grid: &'a HyperGrid,
    pub models: &'a Models,
    pub rule: SelectionRule,
}

/// Twin pre-selection result for a method: the ordered candidates to be
/// tested on air and the twin evaluations behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preselection {
    pub method: Method,
    pub candidates: Vec<Hyperparams>,
    pub twin: Vec<CandidateEval>,
    pub front: Option<ParetoSet>,
}

/// Builds the ordered candidate list of `method`. The twin data and channels
/// are split `DT`, repetition 0.
pub fn preselect<E: Executor>(
    method: Method,
    setup: &CalibrationSetup<'_>,
    exec: &E,
) -> Result<Preselection, CalibrateError> {
    let cfg = setup.cfg;
    let twin_source = TrialSource::generated(Split::Dt, 0, setup.data.n_dt, setup.data, setup.twin);
    let twin_front = |cands: &[Hyperparams], policy: TrialPolicy| {
        let evals = evaluate_candidates(cands, &twin_source, setup.models, cfg, &policy, Origin::Dt, exec)?;
        let front = pareto_preselect(&evals, cfg.gamma);
        Ok::<_, CalibrateError>((evals, front))
    };
    match method {
        Method::Dtltt => {
            let (twin, front) = twin_front(&setup.grid.candidates(), TrialPolicy::WAKE_UP)?;
            Ok(Preselection {
                method,
                candidates: front.lambdas(),
                twin,
                front: Some(front),
            })
        }
        Method::AlwaysOn | Method::PlainLtt => {
            let (_, dt_front) = twin_front(&setup.grid.candidates(), TrialPolicy::WAKE_UP)?;
            let budget = dt_front.len().max(1);
            if method == Method::PlainLtt {
                let mut candidates = plain_ltt_order(setup.grid);
                candidates.truncate(budget);
                return Ok(Preselection {
                    method,
                    candidates,
                    twin: Vec::new(),
                    front: None,
                });
            }
            let (twin, front) = twin_front(&always_on_candidates(setup.grid), TrialPolicy::ALWAYS_ON)?;
            let mut candidates = front.lambdas();
            candidates.truncate(budget);
            Ok(Preselection {
                method,
                candidates,
                twin,
                front: Some(front),
            })
        }
        Method::Conventional => Ok(Preselection {
            method,
            candidates: vec![Hyperparams {
                lambda_s: 0.0,
                lambda_w: 0.0,
                lambda_d: 0.0,
                secure: false,
            }],
            twin: Vec::new(),
            front: None,
        }),
    }
}

/// On-air stage: evaluates the candidates in order on the physical link and
/// applies the fixed-sequence rule. The conventional benchmark is not
/// calibrated; its single setting is always selected.
pub fn on_air_calibrate<E: Executor>(
    pre: &Preselection,
    on_air: &TrialSource<'_>,
    setup: &CalibrationSetup<'_>,
    exec: &E,
) -> Result<CalibrationResult, CalibrateError> {
    let cfg = setup.cfg;
    let psi = psi_threshold(cfg.alpha, cfg.delta, on_air.count);
    if pre.candidates.is_empty() {
        return Ok(CalibrationResult::secure(Vec::new(), 0, psi));
    }
    if psi < 0.0 && pre.method != Method::Conventional {
        // The first candidate cannot pass; its evaluation is still reported.
        let first = evaluate_candidates(
            &pre.candidates[..1],
            on_air,
            setup.models,
            cfg,
            &pre.method.policy(),
            Origin::Pt,
            exec,
        )?;
        return Ok(CalibrationResult::secure(first, 1, psi));
    }
    let evals = evaluate_candidates(
        &pre.candidates,
        on_air,
        setup.models,
        cfg,
        &pre.method.policy(),
        Origin::Pt,
        exec,
    )?;
    if pre.method == Method::Conventional {
        return Ok(CalibrationResult {
            lambda_star: evals[0].lambda,
            tested: evals,
            j_stop: 1,
            secure: false,
            psi,
            selected: Some(0),
        });
    }
    Ok(fixed_sequence_test(&evals, psi, cfg.gamma, setup.rule))
}

/// Twin pre-selection followed by on-air testing on split `PT`,
/// repetition `rep`.
pub fn calibrate<E: Executor>(
    method: Method,
    setup: &CalibrationSetup<'_>,
    rep: u32,
    exec: &E,
) -> Result<(Preselection, CalibrationResult), CalibrateError> {
    let pre = preselect(method, setup, exec)?;
    let on_air = TrialSource::generated(Split::Pt, rep, setup.data.n_pt, setup.data, setup.physical);
    let result = on_air_calibrate(&pre, &on_air, setup, exec)?;
    Ok((pre, result))
}

/// Outcome of one calibration repetition, measured on the held-out set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: u32,
    pub lambda_star: Hyperparams,
    pub secure: bool,
    pub j_stop: usize,
    pub loss: f64,
    pub energy: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: Method,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub reps: usize,
    pub n_pt: usize,
    pub n_test: usize,
    pub candidates: Vec<Hyperparams>,
    pub violations: usize,
    pub violation_fraction: f64,
    /// `delta + 3 * sqrt(delta * (1 - delta) / reps)`.
    pub bound: f64,
    pub pass: bool,
    pub mean_loss: f64,
    pub mean_energy: f64,
    pub mean_size: f64,
    pub outcomes: Vec<RepOutcome>,
}

impl CoverageReport {
    pub fn energy_std_error(&self) -> f64 {
        std_error(self.outcomes.iter().map(|o| o.energy))
    }
}

fn std_error(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    libm::sqrt(var / n)
}

pub fn coverage_bound(delta: f64, reps: usize) -> f64 {
    delta + 3.0 * libm::sqrt(delta * (1.0 - delta) / reps as f64)
}

/// Monte Carlo check of the reliability guarantee. The twin data, twin
/// channels and the candidate order are fixed; each repetition draws a fresh
/// on-air set with fresh physical channels, calibrates, and looks up the
/// true loss of the selected triple in a table computed once on `n_test`
/// held-out examples with their own physical channels.
pub fn validate_coverage<E: Executor>(
    method: Method,
    setup: &CalibrationSetup<'_>,
    reps: usize,
    exec: &E,
) -> Result<CoverageReport, CalibrateError> {
    let cfg = setup.cfg;
    let pre = preselect(method, setup, exec)?;
    let policy = method.policy();
    let test_source = TrialSource::generated(Split::Test, 0, setup.data.n_test, setup.data, setup.physical);
    let truth = if pre.candidates.is_empty() {
        Vec::new()
    } else {
        evaluate_candidates(&pre.candidates, &test_source, setup.models, cfg, &policy, Origin::Test, exec)?
    };
    let outcomes = exec.map(reps, |r| {
        let on_air = TrialSource::generated(Split::Pt, r as u32, setup.data.n_pt, setup.data, setup.physical);
        let res = on_air_calibrate(&pre, &on_air, setup, &Sequential).expect("non-empty on-air set");
        let (loss, energy, size) = match res.selected {
            Some(k) if !res.secure => {
                let t = &truth[k];
                (t.loss_hat, t.energy_hat, t.size_hat)
            }
            _ => (0.0, 0.0, cfg.classes as f64),
        };
        RepOutcome {
            rep: r as u32,
            lambda_star: res.lambda_star,
            secure: res.secure,
            j_stop: res.j_stop,
            loss,
            energy,
            size,
        }
    });
    let violations = outcomes.iter().filter(|o| o.loss > cfg.alpha).count();
    let n = reps.max(1) as f64;
    let fraction = violations as f64 / n;
    let bound = coverage_bound(cfg.delta, reps.max(1));
    Ok(CoverageReport {
        method,
        alpha: cfg.alpha,
        delta: cfg.delta,
        gamma: cfg.gamma,
        reps,
        n_pt: setup.data.n_pt,
        n_test: setup.data.n_test,
        candidates: pre.candidates.clone(),
        violations,
        violation_fraction: fraction,
        bound,
        pass: fraction <= bound,
        mean_loss: outcomes.iter().map(|o| o.loss).sum::<f64>() / n,
        mean_energy: outcomes.iter().map(|o| o.energy).sum::<f64>() / n,
        mean_size: outcomes.iter().map(|o| o.size).sum::<f64>() / n,
        outcomes,
    })
}
