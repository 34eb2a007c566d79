//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"CADMRCKP"
//! u32    format version
//! u32    header length, then that many bytes of JSON header
//! u32    blob count, then per blob:
//!          u32 name length, name bytes (UTF-8)
//!          u32 ndim, ndim × u64 dims
//!          prod(dims) × f64 values
//! [32]   SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelDims, Optimizers, Phase, Precision, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::adam::Moments;
use crate::numerics::{AdamConfig, Real};

pub const MAGIC: &[u8; 8] = b"CADMRCKP";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub role: String,
    pub t: u64,
    pub config: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub seed: u64,
    pub precision: Precision,
    pub phase: Phase,
    pub dims: ModelDims,
    pub config: TrainConfig,
    pub optimizers: Vec<OptimizerHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub header: CheckpointHeader,
    pub blobs: Vec<Blob>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits in u32").to_le_bytes());
}

pub fn encode_checkpoint(ckpt: &RawCheckpoint) -> Vec<u8> {
    let header = serde_json::to_vec(&ckpt.header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, header.len());
    out.extend_from_slice(&header);
    put_u32(&mut out, ckpt.blobs.len());
    for b in &ckpt.blobs {
        put_u32(&mut out, b.name.len());
        out.extend_from_slice(b.name.as_bytes());
        put_u32(&mut out, b.shape.len());
        for d in &b.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("unexpected end of data reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Checks magic, then version, then the checksum, then parses the body.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<RawCheckpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Checksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }

    let mut c = Cursor { buf: body, pos: 12 };
    let hlen = c.u32("header length")?;
    let header: CheckpointHeader = serde_json::from_slice(c.take(hlen, "header")?)
        .map_err(|e| Error::Checkpoint(format!("header json: {e}")))?;
    let count = c.u32("blob count")?;
    let mut blobs = Vec::new();
    for _ in 0..count {
        let nlen = c.u32("blob name length")?;
        let name = std::str::from_utf8(c.take(nlen, "blob name")?)
            .map_err(|_| Error::Checkpoint("blob name is not UTF-8".into()))?
            .to_string();
        let ndim = c.u32("blob rank")?;
        if ndim.saturating_mul(8) > c.remaining() {
            return Err(Error::Checkpoint(format!("blob {name}: rank {ndim} exceeds data")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut numel: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(c.u64("blob dim")?)
                .map_err(|_| Error::Checkpoint(format!("blob {name}: dimension overflow")))?;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| Error::Checkpoint(format!("blob {name}: size overflow")))?;
            shape.push(d);
        }
        if numel.checked_mul(8).is_none_or(|n| n > c.remaining()) {
            return Err(Error::Checkpoint(format!("blob {name}: {numel} values exceed data")));
        }
        let raw = c.take(numel * 8, "blob values")?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        blobs.push(Blob { name, shape, data });
    }
    if c.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes after blobs", c.remaining())));
    }
    Ok(RawCheckpoint { header, blobs })
}

fn blob_of<T: Real>(name: String, a: &Array2<T>) -> Blob {
    Blob {
        name,
        shape: vec![a.nrows(), a.ncols()],
        data: a.iter().map(|v| Real::to_f64(*v)).collect(),
    }
}

fn array_of<T: Real>(b: &Blob, expected: (usize, usize)) -> Result<Array2<T>> {
    if b.shape != [expected.0, expected.1] {
        return Err(Error::Checkpoint(format!(
            "blob {} has shape {:?}, model expects {:?}",
            b.name, b.shape, expected
        )));
    }
    let data = b.data.iter().map(|v| T::from_f64(*v)).collect();
    Ok(Array2::from_shape_vec(expected, data).expect("shape checked"))
}

fn moment_name(role: &str, which: &str, param: &str) -> String {
    format!("adam.{role}.{which}.{param}")
}

impl<T: Real> Model<T> {
    pub fn to_checkpoint(&self) -> RawCheckpoint {
        let mut blobs: Vec<Blob> = self
            .store
            .iter()
            .map(|(_, p)| blob_of(format!("param.{}", p.name), &p.value))
            .collect();
        let mut optimizers = Vec::new();
        for role in Optimizers::<T>::ROLES {
            let st = self.optimizers.by_role(role).expect("known role");
            optimizers.push(OptimizerHeader {
                role: role.to_string(),
                t: st.t,
                config: st.config,
            });
            for (id, m) in &st.moments {
                let name = self.store.name(*id);
                blobs.push(blob_of(moment_name(role, "m", name), &m.m));
                blobs.push(blob_of(moment_name(role, "v", name), &m.v));
            }
        }
        RawCheckpoint {
            header: CheckpointHeader {
                seed: self.config.seed,
                precision: precision_of::<T>(),
                phase: self.phase,
                dims: self.dims,
                config: self.config.clone(),
                optimizers,
            },
            blobs,
        }
    }

    /// Rebuilds the layout from the stored config and overwrites every
    /// parameter and optimizer moment.
    pub fn from_checkpoint(ckpt: &RawCheckpoint) -> Result<Self> {
        let h = &ckpt.header;
        if h.precision != precision_of::<T>() {
            return Err(Error::Checkpoint(format!(
                "checkpoint precision is {}, requested {}",
                h.precision.as_str(),
                T::NAME
            )));
        }
        if h.seed != h.config.seed {
            return Err(Error::Checkpoint("header seed disagrees with config seed".into()));
        }
        let mut model = Model::<T>::new(h.config.clone(), h.dims)?;
        let mut seen = vec![false; model.store.len()];
        for b in &ckpt.blobs {
            if let Some(pname) = b.name.strip_prefix("param.") {
                let id = model
                    .store
                    .find(pname)
                    .ok_or_else(|| Error::Checkpoint(format!("unknown parameter blob {}", b.name)))?;
                let dim = model.store.value(id).dim();
                *model.store.value_mut(id) = array_of(b, dim)?;
                seen[id.index()] = true;
            } else if !b.name.starts_with("adam.") {
                return Err(Error::Checkpoint(format!("unknown blob {}", b.name)));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let id = model.store.ids().nth(missing).expect("index in range");
            return Err(Error::Checkpoint(format!("missing parameter {}", model.store.name(id))));
        }
        for oh in &h.optimizers {
            let ids: Vec<_> = model.store.ids().collect();
            let mut moments = std::collections::BTreeMap::new();
            for id in ids {
                let name = model.store.name(id).to_string();
                let m = ckpt.blobs.iter().find(|b| b.name == moment_name(&oh.role, "m", &name));
                let v = ckpt.blobs.iter().find(|b| b.name == moment_name(&oh.role, "v", &name));
                match (m, v) {
                    (Some(m), Some(v)) => {
                        let dim = model.store.value(id).dim();
                        moments.insert(
                            id,
                            Moments {
                                m: array_of(m, dim)?,
                                v: array_of(v, dim)?,
                            },
                        );
                    }
                    (None, None) => {}
                    _ => return Err(Error::Checkpoint(format!("incomplete moments for {name}"))),
                }
            }
            let st = model
                .optimizers
                .by_role_mut(&oh.role)
                .ok_or_else(|| Error::Checkpoint(format!("unknown optimizer role {}", oh.role)))?;
            st.t = oh.t;
            st.config = oh.config;
            st.moments = moments;
        }
        model.phase = h.phase;
        Ok(model)
    }
}

fn precision_of<T: Real>() -> Precision {
    if T::NAME == "f32" {
        Precision::F32
    } else {
        Precision::F64
    }
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(&model.to_checkpoint());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_checkpoint(&decode_checkpoint(&bytes)?)
}

/// Header only; lets callers pick the precision before a full load.
pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_checkpoint(&bytes)?.header)
}
