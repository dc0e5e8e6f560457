//! Trained-parameter container.
//!
//! Layout: magic `WLNP`, `u32` version, `u32` header length, a JSON header
//! listing every tensor (name, shape, offset in values) with the per-layer
//! neuron constants, then all tensor values as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wakelink_core::linalg::Matrix;
use wakelink_core::signal::GaussianModel;
use wakelink_core::snn::{HyperNet, LifLayer, SnnParams};
use wakelink_core::Models;

use crate::output::write_atomic;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"WLNP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Neuron {
    beta: f64,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    tensors: Vec<Tensor>,
    encoder: Vec<Neuron>,
    decoder: Vec<Neuron>,
    partition: Vec<usize>,
}

#[derive(Default)]
struct Packer {
    tensors: Vec<Tensor>,
    values: Vec<f64>,
}

impl Packer {
    fn push(&mut self, name: String, shape: Vec<usize>, data: &[f64]) {
        self.tensors.push(Tensor {
            name,
            shape,
            offset: self.values.len(),
        });
        self.values.extend_from_slice(data);
    }

    fn matrix(&mut self, name: String, m: &Matrix) {
        self.push(name, vec![m.rows, m.cols], &m.data);
    }

    fn net(&mut self, prefix: &str, net: &SnnParams) -> Vec<Neuron> {
        net.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                self.matrix(format!("{prefix}.{i}.weight"), &l.weights);
                Neuron {
                    beta: l.beta,
                    threshold: l.threshold,
                }
            })
            .collect()
    }
}

pub fn encode(m: &Models) -> Vec<u8> {
    let mut p = Packer::default();
    let encoder = p.net("encoder", &m.encoder);
    let decoder = p.net("decoder", &m.decoder);
    p.matrix("hyper.hidden.weight".into(), &m.hyper.hidden);
    p.push("hyper.hidden.bias".into(), vec![m.hyper.hidden_bias.len()], &m.hyper.hidden_bias);
    p.matrix("hyper.output.weight".into(), &m.hyper.output);
    p.push("hyper.output.bias".into(), vec![m.hyper.output_bias.len()], &m.hyper.output_bias);
    for (name, g) in [("signal", &m.signal), ("noise", &m.noise)] {
        let d = g.dim();
        p.push(format!("{name}.mean"), vec![d], g.mean());
        p.push(format!("{name}.covariance"), vec![d, d], g.covariance());
    }
    let header = Header {
        tensors: p.tensors,
        encoder,
        decoder,
        partition: m.hyper.partition.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * p.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in &p.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Unpacker<'a> {
    header: &'a Header,
    values: Vec<f64>,
    path: &'a Path,
}

impl Unpacker<'_> {
    fn get(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let t = self
            .header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format(self.path, format!("missing tensor {name}")))?;
        let len: usize = t.shape.iter().product();
        let data = t
            .offset
            .checked_add(len)
            .and_then(|end| self.values.get(t.offset..end))
            .ok_or_else(|| Error::format(self.path, format!("tensor {name} out of bounds")))?;
        Ok((&t.shape, data))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.1.to_vec())
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let (shape, data) = self.get(name)?;
        match shape {
            [r, c] => Ok(Matrix::from_rows(*r, *c, data.to_vec()).expect("sized")),
            _ => Err(Error::format(self.path, format!("tensor {name} is not a matrix"))),
        }
    }

    fn net(&self, prefix: &str, neurons: &[Neuron]) -> Result<SnnParams> {
        let layers = neurons
            .iter()
            .enumerate()
            .map(|(i, n)| {
                Ok(LifLayer {
                    weights: self.matrix(&format!("{prefix}.{i}.weight"))?,
                    beta: n.beta,
                    threshold: n.threshold,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SnnParams { layers })
    }

    fn gaussian(&self, name: &str) -> Result<GaussianModel> {
        GaussianModel::new(
            self.vector(&format!("{name}.mean"))?,
            self.vector(&format!("{name}.covariance"))?,
        )
        .map_err(|e| Error::format(self.path, format!("{name} model: {e}")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Models> {
    let truncated = || Error::format(path, "truncated parameter file");
    if bytes.len() < 12 {
        return Err(truncated());
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a wakelink parameter file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != VERSION {
        return Err(Error::format(path, format!("unsupported parameter version {}", word(4))));
    }
    let hlen = word(8) as usize;
    let body = bytes.get(12 + hlen..).ok_or_else(truncated)?;
    let header: Header = serde_json::from_slice(&bytes[12..12 + hlen])
        .map_err(|e| Error::format(path, format!("header: {e}")))?;
    if body.len() % 8 != 0 {
        return Err(Error::format(path, "tensor data is not a whole number of values"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let u = Unpacker {
        header: &header,
        values,
        path,
    };
    Ok(Models {
        encoder: u.net("encoder", &header.encoder)?,
        decoder: u.net("decoder", &header.decoder)?,
        hyper: HyperNet {
            hidden: u.matrix("hyper.hidden.weight")?,
            hidden_bias: u.vector("hyper.hidden.bias")?,
            output: u.matrix("hyper.output.weight")?,
            output_bias: u.vector("hyper.output.bias")?,
            partition: header.partition.clone(),
        },
        signal: u.gaussian("signal")?,
        noise: u.gaussian("noise")?,
    })
}

pub fn write(path: &Path, m: &Models) -> Result<()> {
    write_atomic(path, &encode(m))
}

pub fn read(path: &Path) -> Result<Models> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wakelink_core::pipeline::random_models;
    use wakelink_core::{default_paper_config, derive_stream, Purpose};

    fn models() -> Models {
        let cfg = default_paper_config();
        let mut s = derive_stream(1, Purpose::Init, 0);
        random_models(&cfg, 8, 6, 5, 0.9, 1.0, &mut s)
    }

    #[test]
    fn round_trip_is_exact() {
        let m = models();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.wlnp");
        write(&p, &m).unwrap();
        assert_eq!(read(&p).unwrap(), m);
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = encode(&models());
        let p = Path::new("m.wlnp");
        assert!(decode(&bytes[..bytes.len() - 8], p).is_err());
        assert!(decode(&bytes[..bytes.len() - 3], p).is_err());
        assert!(decode(&bytes[..10], p).is_err());
        let mut bad = bytes;
        bad[1] = 0;
        assert!(decode(&bad, p).is_err());
    }
}
