//! Command drivers. Each returns the files it wrote; reports carry no
//! timing so identical runs give identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;
use wakelink_core::calibrate::{calibrate, validate_coverage, CalibrationSetup, Method, Preselection};
use wakelink_core::signal::{generate_dataset, Dataset};
use wakelink_core::train::{clean_accuracy, train_models, TrainReport};
use wakelink_core::{
    CalibrationResult, CoverageReport, Executor, ExperimentConfig, Models, NetConfig, ParetoSet,
    SelectionRule, Split,
};

use crate::manifest::Command;
use crate::output::{fmt_num, write_csv, write_json};
use crate::{dataset, params, Error, Result};

/// Repetition of the test split used for clean-link accuracy; repetition 0
/// is reserved for the coverage truth table.
const CLEAN_EVAL_REP: u32 = 1;
const CLEAN_EVAL_COUNT: usize = 500;

pub const PARAMS_FILE: &str = "model.wlnp";

pub fn setup<'a>(cfg: &'a ExperimentConfig, models: &'a Models, rule: SelectionRule) -> CalibrationSetup<'a> {
    CalibrationSetup {
        cfg: &cfg.sim,
        data: &cfg.data,
        physical: &cfg.physical,
        twin: &cfg.twin,
        grid: &cfg.grid,
        models,
        rule,
    }
}

pub fn load_models(path: &Path, cfg: &ExperimentConfig) -> Result<Models> {
    let m = params::read(path)?;
    m.validate(&cfg.sim)
        .map_err(|e| Error::Config(format!("{} does not fit the configuration: {e}", path.display())))?;
    Ok(m)
}

pub fn gen_data(cfg: &ExperimentConfig, split: Split, rep: u32, count: usize) -> Dataset {
    generate_dataset(&cfg.sim, &cfg.data, split, rep, count)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub network: NetConfig,
    pub report: TrainReport,
    pub clean_accuracy: f64,
}

pub fn train<E: Executor>(cfg: &ExperimentConfig, data: Option<Dataset>, exec: &E) -> Result<(Models, TrainSummary)> {
    let data = data.unwrap_or_else(|| gen_data(cfg, Split::Train, 0, cfg.data.n_train));
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let (models, report) = train_models(&data, cfg, exec)?;
    let held_out = gen_data(cfg, Split::Test, CLEAN_EVAL_REP, CLEAN_EVAL_COUNT);
    let acc = clean_accuracy(&models, &held_out.examples, &cfg.sim, exec);
    Ok((
        models,
        TrainSummary {
            n_train: data.len(),
            network: cfg.network.clone(),
            report,
            clean_accuracy: acc,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub rule: SelectionRule,
    pub rep: u32,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub n_dt: usize,
    pub n_pt: usize,
    pub candidates: usize,
    pub front: Option<ParetoSet>,
    pub result: CalibrationResult,
}

pub fn calibrate_once<E: Executor>(
    cfg: &ExperimentConfig,
    models: &Models,
    method: Method,
    rep: u32,
    rule: SelectionRule,
    exec: &E,
) -> Result<CalibrationReport> {
    let (pre, result): (Preselection, _) = calibrate(method, &setup(cfg, models, rule), rep, exec)?;
    Ok(CalibrationReport {
        method,
        rule,
        rep,
        alpha: cfg.sim.alpha,
        delta: cfg.sim.delta,
        gamma: cfg.sim.gamma,
        n_dt: cfg.data.n_dt,
        n_pt: cfg.data.n_pt,
        candidates: pre.candidates.len(),
        front: pre.front,
        result,
    })
}

pub fn coverage<E: Executor>(
    cfg: &ExperimentConfig,
    models: &Models,
    method: Method,
    reps: usize,
    rule: SelectionRule,
    exec: &E,
) -> Result<CoverageReport> {
    if reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    Ok(validate_coverage(method, &setup(cfg, models, rule), reps, exec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub alpha: f64,
    pub mean_loss: f64,
    pub mean_energy: f64,
    pub energy_std_error: f64,
    /// Mean set size divided by the number of classes.
    pub mean_norm_size: f64,
    pub violation_fraction: f64,
    pub bound: f64,
    pub pass: bool,
}

impl SweepRow {
    pub fn from_report(r: &CoverageReport, classes: usize) -> Self {
        Self {
            method: r.method,
            alpha: r.alpha,
            mean_loss: r.mean_loss,
            mean_energy: r.mean_energy,
            energy_std_error: r.energy_std_error(),
            mean_norm_size: r.mean_size / classes as f64,
            violation_fraction: r.violation_fraction,
            bound: r.bound,
            pass: r.pass,
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.method.name().to_string(),
            fmt_num(self.alpha),
            fmt_num(self.mean_loss),
            fmt_num(self.mean_energy),
            fmt_num(self.energy_std_error),
            fmt_num(self.mean_norm_size),
            fmt_num(self.violation_fraction),
            fmt_num(self.bound),
            self.pass.to_string(),
        ]
    }
}

pub const SWEEP_HEADER: [&str; 9] = [
    "method",
    "alpha",
    "mean_loss",
    "mean_energy",
    "energy_std_error",
    "mean_norm_size",
    "violation_fraction",
    "bound",
    "pass",
];

pub fn sweep<E: Executor>(
    cfg: &ExperimentConfig,
    models: &Models,
    alphas: &[f64],
    methods: &[Method],
    reps: usize,
    rule: SelectionRule,
    exec: &E,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &method in methods {
        for &alpha in alphas {
            let mut c = cfg.clone();
            c.sim.alpha = alpha;
            c.validate().map_err(|e| Error::Config(format!("alpha {alpha}: {e}")))?;
            let r = coverage(&c, models, method, reps, rule, exec)?;
            rows.push(SweepRow::from_report(&r, cfg.sim.classes));
        }
    }
    Ok(rows)
}

fn coverage_rows(r: &CoverageReport) -> Vec<Vec<String>> {
    r.outcomes
        .iter()
        .map(|o| {
            vec![
                o.rep.to_string(),
                o.secure.to_string(),
                o.j_stop.to_string(),
                fmt_num(o.lambda_star.lambda_s),
                fmt_num(o.lambda_star.lambda_w),
                fmt_num(o.lambda_star.lambda_d),
                fmt_num(o.loss),
                fmt_num(o.energy),
                fmt_num(o.size),
            ]
        })
        .collect()
}

const COVERAGE_HEADER: [&str; 9] = [
    "rep", "secure", "j_stop", "lambda_s", "lambda_w", "lambda_d", "loss", "energy", "size",
];

/// Runs `cmd` and writes its outputs into `out`.
pub fn execute<E: Executor>(cmd: &Command, cfg: &ExperimentConfig, out: &Path, exec: &E) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match cmd {
        Command::GenData { split, rep, count } => {
            let ds = gen_data(cfg, *split, *rep, *count);
            let stem = out.join(format!("{}-r{rep}", split.name()));
            dataset::write(&stem, &ds, *rep, cfg.sim.classes, cfg.sim.seed)?;
            Ok(dataset::paths(&stem).to_vec())
        }
        Command::Train { data } => {
            let data = data.as_deref().map(dataset::read).transpose()?.map(|(d, _)| d);
            let (models, summary) = train(cfg, data, exec)?;
            let p = out.join(PARAMS_FILE);
            params::write(&p, &models)?;
            let s = out.join("train_report.json");
            write_json(&s, &summary)?;
            Ok(vec![p, s])
        }
        Command::Calibrate {
            params,
            method,
            rep,
            rule,
        } => {
            let models = load_models(params, cfg)?;
            let r = calibrate_once(cfg, &models, *method, *rep, *rule, exec)?;
            let p = out.join(format!("calibration-{}-r{rep}.json", method.name()));
            write_json(&p, &r)?;
            Ok(vec![p])
        }
        Command::ValidateCoverage {
            params,
            method,
            reps,
            rule,
        } => {
            let models = load_models(params, cfg)?;
            let r = coverage(cfg, &models, *method, *reps, *rule, exec)?;
            let j = out.join(format!("coverage-{}.json", method.name()));
            write_json(&j, &r)?;
            let c = out.join(format!("coverage-{}.csv", method.name()));
            write_csv(&c, &COVERAGE_HEADER, &coverage_rows(&r))?;
            Ok(vec![j, c])
        }
        Command::Sweep {
            params,
            alphas,
            methods,
            reps,
            rule,
        } => {
            let models = load_models(params, cfg)?;
            let rows = sweep(cfg, &models, alphas, methods, *reps, *rule, exec)?;
            let c = out.join("sweep.csv");
            write_csv(&c, &SWEEP_HEADER, &rows.iter().map(SweepRow::cells).collect::<Vec<_>>())?;
            let j = out.join("sweep.json");
            write_json(&j, &rows)?;
            Ok(vec![c, j])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wakelink_core::pipeline::random_models;
    use wakelink_core::{derive_stream, Purpose, Sequential};

    fn small() -> (ExperimentConfig, Models) {
        let mut cfg = ExperimentConfig::desk();
        cfg.data.n_dt = 20;
        cfg.data.n_pt = 20;
        cfg.data.n_test = 20;
        cfg.grid.values_s = vec![0.0, 10.0];
        cfg.grid.values_w = vec![0.8, 1.2];
        cfg.grid.values_d = vec![1.0, 5.0];
        let n = &cfg.network;
        let m = random_models(
            &cfg.sim,
            n.enc_hidden,
            n.dec_hidden,
            n.hyper_hidden,
            n.beta,
            n.threshold,
            &mut derive_stream(cfg.sim.seed, Purpose::Init, 0),
        );
        (cfg, m)
    }

    #[test]
    fn sweep_normalises_size() {
        let (cfg, m) = small();
        let rows = sweep(&cfg, &m, &[0.2, 0.3], &[Method::Conventional], 3, SelectionRule::Certified, &Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.mean_norm_size));
            assert_eq!(r.mean_norm_size, 0.5);
        }
    }

    #[test]
    fn coverage_rejects_zero_reps() {
        let (cfg, m) = small();
        let e = coverage(&cfg, &m, Method::Dtltt, 0, SelectionRule::Certified, &Sequential).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn gen_data_outputs() {
        let (cfg, _) = small();
        let dir = tempfile::tempdir().unwrap();
        let cmd = Command::GenData {
            split: Split::Pt,
            rep: 0,
            count: 12,
        };
        let files = execute(&cmd, &cfg, dir.path(), &Sequential).unwrap();
        assert_eq!(files.len(), 3);
        let (ds, _) = dataset::read(&files[0]).unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.split, Split::Pt);
        assert!(ds.examples.iter().all(|e| e.label < 4));
    }
}
