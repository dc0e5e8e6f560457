use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use wakelink::config::{env_overrides, parse_assignment, parse_value, resolve, Preset};
use wakelink::exec::Pool;
use wakelink::experiment::execute;
use wakelink::manifest::{Command, RunManifest, Timing, MANIFEST_FILE};
use wakelink::Error;
use wakelink_core::calibrate::Method;
use wakelink_core::{SelectionRule, Split};

#[derive(Parser)]
#[command(name = "wakelink", version, about = "Wake-up radio neuromorphic link simulator and calibrator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Configuration override `key=value`, e.g. `sim.snr_db=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dt,
    Pt,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dt => Split::Dt,
            SplitArg::Pt => Split::Pt,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dtltt,
    Conventional,
    PlainLtt,
    AlwaysOn,
}

impl From<ModeArg> for Method {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dtltt => Method::Dtltt,
            ModeArg::Conventional => Method::Conventional,
            ModeArg::PlainLtt => Method::PlainLtt,
            ModeArg::AlwaysOn => Method::AlwaysOn,
        }
    }
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum RuleArg {
    /// Select among candidates that passed the test.
    #[default]
    Certified,
    /// Also allow the candidate that stopped the test.
    Literal,
}

impl From<RuleArg> for SelectionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Certified => SelectionRule::Certified,
            RuleArg::Literal => SelectionRule::Literal,
        }
    }
}

#[derive(Args)]
struct TwinArgs {
    /// Twin channel path count.
    #[arg(long)]
    dt_paths: Option<usize>,
    /// Rician twin channel with this K factor in dB.
    #[arg(long)]
    dt_rice_db: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one dataset split.
    GenData {
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        rep: u32,
        #[arg(long)]
        count: usize,
        /// Number of classes (overrides sim.classes).
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Train the encoder, decoder and hypernetwork.
    Train {
        /// Training dataset (`.bin`); generated from the seed when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// One calibration on a fresh on-air set.
    Calibrate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "dtltt")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        rep: u32,
        #[arg(long, value_enum, default_value_t)]
        rule: RuleArg,
        #[command(flatten)]
        twin: TwinArgs,
    },
    /// Monte Carlo check of the reliability guarantee.
    ValidateCoverage {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "dtltt")]
        mode: ModeArg,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, value_enum, default_value_t)]
        rule: RuleArg,
        #[command(flatten)]
        twin: TwinArgs,
    },
    /// Coverage runs over a list of reliability targets, one CSV row per
    /// (mode, alpha).
    Sweep {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.15,0.2,0.25")]
        alphas: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "dtltt,conventional,plain-ltt,always-on")]
        modes: Vec<ModeArg>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, value_enum, default_value_t)]
        rule: RuleArg,
        #[command(flatten)]
        twin: TwinArgs,
    },
    /// Repeat a recorded run and compare its outputs with the recorded ones.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn twin_overrides(t: &TwinArgs, out: &mut Vec<(String, toml::Value)>) {
    if let Some(n) = t.dt_paths {
        out.push(("twin.n_paths".into(), toml::Value::Integer(n as i64)));
    }
    if let Some(k) = t.dt_rice_db {
        out.push(("twin.fading.kind".into(), parse_value("\"rician\"")));
        out.push(("twin.fading.k_db".into(), toml::Value::Float(k)));
    }
}

fn overrides(g: &Global, cmd: &Cmd) -> Result<Vec<(String, toml::Value)>, Error> {
    let mut o = env_overrides(std::env::vars());
    for s in &g.set {
        o.push(parse_assignment(s)?);
    }
    if let Some(seed) = g.seed {
        o.push(("sim.seed".into(), toml::Value::Integer(seed as i64)));
    }
    for (key, v) in [("sim.alpha", g.alpha), ("sim.delta", g.delta), ("sim.gamma", g.gamma)] {
        if let Some(v) = v {
            o.push((key.into(), toml::Value::Float(v)));
        }
    }
    match cmd {
        Cmd::GenData {
            classes: Some(c), ..
        } => o.push(("sim.classes".into(), toml::Value::Integer(*c as i64))),
        Cmd::Calibrate { twin, .. } | Cmd::ValidateCoverage { twin, .. } | Cmd::Sweep { twin, .. } => {
            twin_overrides(twin, &mut o)
        }
        _ => {}
    }
    Ok(o)
}

fn command(cmd: &Cmd) -> Command {
    match cmd {
        Cmd::GenData { split, rep, count, .. } => Command::GenData {
            split: (*split).into(),
            rep: *rep,
            count: *count,
        },
        Cmd::Train { data } => Command::Train { data: data.clone() },
        Cmd::Calibrate {
            params, mode, rep, rule, ..
        } => Command::Calibrate {
            params: params.clone(),
            method: (*mode).into(),
            rep: *rep,
            rule: (*rule).into(),
        },
        Cmd::ValidateCoverage {
            params, mode, reps, rule, ..
        } => Command::ValidateCoverage {
            params: params.clone(),
            method: (*mode).into(),
            reps: *reps,
            rule: (*rule).into(),
        },
        Cmd::Sweep {
            params,
            alphas,
            modes,
            reps,
            rule,
            ..
        } => Command::Sweep {
            params: params.clone(),
            alphas: alphas.clone(),
            methods: modes.iter().map(|&m| m.into()).collect(),
            reps: *reps,
            rule: (*rule).into(),
        },
        Cmd::Rerun { .. } => unreachable!("handled separately"),
    }
}

fn run_recorded(
    cmd: Command,
    cfg: wakelink_core::ExperimentConfig,
    out: &Path,
    pool: &Pool,
) -> anyhow::Result<RunManifest> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let clock = Instant::now();
    let mut manifest = RunManifest::begin(cmd, cfg, out, pool.workers())?;
    let outputs = execute(&manifest.command, &manifest.config, out, pool)?;
    manifest.finish(
        &outputs,
        Timing {
            started_unix_ms: started,
            wall_seconds: clock.elapsed().as_secs_f64(),
        },
    )?;
    for o in &manifest.outputs {
        println!("{}  {}", o.hash, o.path.display());
    }
    Ok(manifest)
}

fn rerun(path: &Path, g: &Global, pool: &Pool) -> anyhow::Result<bool> {
    let recorded = RunManifest::read(path)?;
    recorded.check_inputs()?;
    let out = if g.out == recorded.out_dir {
        g.out.join("rerun")
    } else {
        g.out.clone()
    };
    let fresh = run_recorded(recorded.command.clone(), recorded.config.clone(), &out, pool)?;
    let mut same = fresh.outputs.len() == recorded.outputs.len();
    for (a, b) in recorded.outputs.iter().zip(&fresh.outputs) {
        if a.hash != b.hash {
            eprintln!("differs: {} vs {}", a.path.display(), b.path.display());
            same = false;
        }
    }
    println!("{}", if same { "outputs match" } else { "outputs differ" });
    Ok(same)
}

fn real_main(cli: Cli) -> anyhow::Result<ExitCode> {
    let pool = Pool::new(cli.global.workers)?;
    if let Cmd::Rerun { manifest } = &cli.command {
        let same = rerun(manifest, &cli.global, &pool)?;
        return Ok(if same { ExitCode::SUCCESS } else { ExitCode::FAILURE });
    }
    let o = overrides(&cli.global, &cli.command)?;
    let cfg = resolve(cli.global.preset, cli.global.config.as_deref(), &o)?;
    run_recorded(command(&cli.command), cfg, &cli.global.out, &pool)
        .with_context(|| format!("run in {}", cli.global.out.display()))?;
    println!("manifest  {}", cli.global.out.join(MANIFEST_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
