//! Run manifests: what was run, with which configuration and inputs, and
//! what it produced. A manifest is written before any result and rewritten
//! with output hashes once the command finishes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wakelink_core::calibrate::Method;
use wakelink_core::{ExperimentConfig, SelectionRule, Split};

use crate::output::{file_hash, write_atomic};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "wakelink-run";
const VERSION: u32 = 1;

/// A command with every argument that influences its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    GenData {
        split: Split,
        rep: u32,
        count: usize,
    },
    Train {
        data: Option<PathBuf>,
    },
    Calibrate {
        params: PathBuf,
        method: Method,
        rep: u32,
        rule: SelectionRule,
    },
    ValidateCoverage {
        params: PathBuf,
        method: Method,
        reps: usize,
        rule: SelectionRule,
    },
    Sweep {
        params: PathBuf,
        alphas: Vec<f64>,
        methods: Vec<Method>,
        reps: usize,
        rule: SelectionRule,
    },
}

impl Command {
    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Command::GenData { .. } => Vec::new(),
            Command::Train { data } => data.iter().cloned().collect(),
            Command::Calibrate { params, .. }
            | Command::ValidateCoverage { params, .. }
            | Command::Sweep { params, .. } => vec![params.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub hash: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            hash: file_hash(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub command: Command,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub status: Status,
    pub timing: Option<Timing>,
}

impl RunManifest {
    /// Hashes the inputs and writes a `running` manifest into `out_dir`.
    pub fn begin(command: Command, config: ExperimentConfig, out_dir: &Path, workers: usize) -> Result<Self> {
        let inputs = command
            .inputs()
            .iter()
            .map(|p| FileRecord::of(p))
            .collect::<Result<Vec<_>>>()?;
        let m = Self {
            format: FORMAT.into(),
            version: VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.sim.seed,
            command,
            config,
            workers,
            out_dir: out_dir.to_path_buf(),
            inputs,
            outputs: Vec::new(),
            status: Status::Running,
            timing: None,
        };
        m.write()?;
        Ok(m)
    }

    /// Records output hashes and timing and rewrites the manifest.
    pub fn finish(&mut self, outputs: &[PathBuf], timing: Timing) -> Result<()> {
        self.outputs = outputs.iter().map(|p| FileRecord::of(p)).collect::<Result<_>>()?;
        self.status = Status::Complete;
        self.timing = Some(timing);
        self.write()
    }

    pub fn path(&self) -> PathBuf {
        self.out_dir.join(MANIFEST_FILE)
    }

    // Full precision: the embedded configuration must survive a reload
    // unchanged.
    fn write(&self) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&self.path(), &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::format(path, "not a wakelink run manifest"));
        }
        m.config.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(m)
    }

    /// Fails if any recorded input changed since the run.
    pub fn check_inputs(&self) -> Result<()> {
        for rec in &self.inputs {
            let now = file_hash(&rec.path)?;
            if now != rec.hash {
                return Err(Error::format(&rec.path, "input changed since the recorded run"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn begin_finish_read() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.bin");
        std::fs::write(&input, b"abc").unwrap();
        let cmd = Command::Train {
            data: Some(input.clone()),
        };
        let cfg = ExperimentConfig::desk();
        let out = dir.path().join("run");
        let mut m = RunManifest::begin(cmd, cfg.clone(), &out, 2).unwrap();
        assert_eq!(RunManifest::read(&m.path()).unwrap().status, Status::Running);
        let produced = out.join("x.txt");
        std::fs::write(&produced, b"x").unwrap();
        m.finish(
            &[produced],
            Timing {
                started_unix_ms: 0,
                wall_seconds: 1.5,
            },
        )
        .unwrap();
        let back = RunManifest::read(&m.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.config, cfg);
        back.check_inputs().unwrap();
        std::fs::write(&input, b"abd").unwrap();
        assert_eq!(back.check_inputs().unwrap_err().exit_code(), 3);
    }
}
