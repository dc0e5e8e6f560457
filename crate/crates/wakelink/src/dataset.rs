//! Dataset files: a little-endian binary body, a JSON sidecar describing it
//! and a CSV index of labels and onsets.
//!
//! Body layout: magic `WLDS`, `u32` version, `u8` split code, three pad
//! bytes, then `u32` rep, count, dim and l_max. Each example follows as
//! `u32` label, `u32` onset and `dim * l_max` `f64` samples, column major.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wakelink_core::signal::{Dataset, LabeledExample};
use wakelink_core::Split;

use crate::output::{content_hash, write_atomic, write_csv, write_json};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"WLDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub split: Split,
    pub rep: u32,
    pub count: usize,
    pub dim: usize,
    pub l_max: usize,
    pub classes: usize,
    pub seed: u64,
    pub content_hash: String,
}

fn split_code(s: Split) -> u8 {
    match s {
        Split::Train => 0,
        Split::Dt => 1,
        Split::Pt => 2,
        Split::Test => 3,
    }
}

fn split_from(code: u8) -> Option<Split> {
    Some(match code {
        0 => Split::Train,
        1 => Split::Dt,
        2 => Split::Pt,
        3 => Split::Test,
        _ => return None,
    })
}

pub fn encode(ds: &Dataset, rep: u32) -> Vec<u8> {
    let (dim, l_max) = ds.examples.first().map_or((0, 0), |e| (e.dim, e.l_max));
    let mut out = Vec::with_capacity(28 + ds.len() * (8 + 8 * dim * l_max));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[split_code(ds.split), 0, 0, 0]);
    for v in [rep, ds.len() as u32, dim as u32, l_max as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for ex in &ds.examples {
        out.extend_from_slice(&(ex.label as u32).to_le_bytes());
        out.extend_from_slice(&(ex.l_start as u32).to_le_bytes());
        for x in &ex.u {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "truncated file"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a body; returns the dataset and its repetition index.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Dataset, u32)> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(4)? != MAGIC {
        return Err(Error::format(path, "not a wakelink dataset"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported dataset version {version}")));
    }
    let split = split_from(r.take(4)?[0]).ok_or_else(|| Error::format(path, "bad split code"))?;
    let rep = r.u32()?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let l_max = r.u32()? as usize;
    let mut examples = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.u32()? as usize;
        let l_start = r.u32()? as usize;
        let u = (0..dim * l_max).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        examples.push(LabeledExample {
            dim,
            l_max,
            u,
            label,
            l_start,
        });
    }
    if r.at != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last example"));
    }
    Ok((Dataset { split, examples }, rep))
}

/// Paths of the three files sharing `stem`.
pub fn paths(stem: &Path) -> [PathBuf; 3] {
    let with = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    [with(".bin"), with(".json"), with(".csv")]
}

/// Writes `<stem>.bin`, `<stem>.json` and `<stem>.csv`.
pub fn write(stem: &Path, ds: &Dataset, rep: u32, classes: usize, seed: u64) -> Result<DatasetMeta> {
    let [bin, json, csv] = paths(stem);
    let body = encode(ds, rep);
    write_atomic(&bin, &body)?;
    let (dim, l_max) = ds.examples.first().map_or((0, 0), |e| (e.dim, e.l_max));
    let meta = DatasetMeta {
        format: "wakelink-dataset".into(),
        version: VERSION,
        split: ds.split,
        rep,
        count: ds.len(),
        dim,
        l_max,
        classes,
        seed,
        content_hash: content_hash(&body),
    };
    write_json(&json, &meta)?;
    let rows: Vec<Vec<String>> = ds
        .examples
        .iter()
        .enumerate()
        .map(|(i, e)| vec![i.to_string(), e.label.to_string(), e.l_start.to_string()])
        .collect();
    write_csv(&csv, &["index", "label", "l_start"], &rows)?;
    Ok(meta)
}

/// Reads a dataset body, checking it against the sidecar when present.
pub fn read(bin: &Path) -> Result<(Dataset, u32)> {
    let body = std::fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let json = bin.with_extension("json");
    if json.exists() {
        let meta: DatasetMeta = crate::output::read_json(&json)?;
        if meta.content_hash != content_hash(&body) {
            return Err(Error::format(bin, "content does not match its sidecar hash"));
        }
    }
    decode(&body, bin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wakelink_core::signal::generate_dataset;
    use wakelink_core::{default_paper_config, DataConfig};

    #[test]
    fn round_trip() {
        let cfg = default_paper_config();
        let ds = generate_dataset(&cfg, &DataConfig::default(), Split::Pt, 2, 7);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("pt");
        let meta = write(&stem, &ds, 2, cfg.classes, cfg.seed).unwrap();
        assert_eq!(meta.count, 7);
        let (back, rep) = read(&paths(&stem)[0]).unwrap();
        assert_eq!(rep, 2);
        assert_eq!(back, ds);
        let csv = std::fs::read_to_string(&paths(&stem)[2]).unwrap();
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let cfg = default_paper_config();
        let ds = generate_dataset(&cfg, &DataConfig::default(), Split::Dt, 0, 2);
        let body = encode(&ds, 0);
        let p = Path::new("x.bin");
        assert!(decode(&body[..body.len() - 3], p).is_err());
        let mut bad = body.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut long = body;
        long.push(0);
        assert!(decode(&long, p).is_err());
    }

    #[test]
    fn tampered_body_fails_hash_check() {
        let cfg = default_paper_config();
        let ds = generate_dataset(&cfg, &DataConfig::default(), Split::Dt, 0, 2);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("dt");
        write(&stem, &ds, 0, cfg.classes, cfg.seed).unwrap();
        let bin = &paths(&stem)[0];
        let mut body = std::fs::read(bin).unwrap();
        let n = body.len();
        body[n - 1] ^= 1;
        std::fs::write(bin, body).unwrap();
        assert_eq!(read(bin).unwrap_err().exit_code(), 3);
    }
}
