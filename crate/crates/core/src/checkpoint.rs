//! Binary checkpoint format.
//!
//! ```text
//! "CBNR"  u16 version
//! u32 length, UTF-8 JSON header (model config, step, epoch)
//! u32 tensor count
//! per tensor: u32 name length, name, u8 dtype, u8 rank, rank x u32 extents, little-endian payload
//! ```
//!
//! Running statistics are stored as `<layer>.running_mean` / `.running_var`
//! and optimizer moments as `adam.m.<param>` / `adam.v.<param>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cbnr_tensor::{DType, Scalar};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::CheckpointError;
use crate::model::Model;
use crate::nn::Module;
use crate::train::Adam;

pub const MAGIC: &[u8; 4] = b"CBNR";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub model: ModelConfig,
    pub step: u64,
    pub epoch: usize,
}

/// A model plus optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub optimizer: Option<Adam<T>>,
    pub epoch: usize,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor<T: Scalar>(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[T]) {
    put_u32(buf, name.len());
    buf.extend_from_slice(name.as_bytes());
    buf.push(T::DTYPE.code());
    buf.push(shape.len() as u8);
    for &e in shape {
        put_u32(buf, e);
    }
    for &v in data {
        v.write_le(buf);
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let header = Header {
            model: self.model.config.clone(),
            step: self.optimizer.as_ref().map_or(0, |o| o.step),
            epoch: self.epoch,
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        put_u32(&mut buf, json.len());
        buf.extend_from_slice(json.as_bytes());

        let params = self.model.params();
        let stats = self.model.stats();
        let moments = self.optimizer.as_ref().map_or(0, |_| 2 * params.len());
        put_u32(&mut buf, params.len() + 2 * stats.len() + moments);
        for p in &params {
            put_tensor(&mut buf, &p.name, p.value.shape(), p.value.data());
        }
        for s in &stats {
            put_tensor(&mut buf, &format!("{}.running_mean", s.name), &[s.mean.len()], &s.mean);
            put_tensor(&mut buf, &format!("{}.running_var", s.name), &[s.var.len()], &s.var);
        }
        if let Some(opt) = &self.optimizer {
            for (p, (m, v)) in params.iter().zip(opt.m.iter().zip(&opt.v)) {
                put_tensor(&mut buf, &format!("adam.m.{}", p.name), p.value.shape(), m);
                put_tensor(&mut buf, &format!("adam.v.{}", p.name), p.value.shape(), v);
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(CheckpointError::Version { found: version, expected: VERSION });
        }
        let len = r.u32("header length")?;
        let json = std::str::from_utf8(r.take(len, "header")?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let header: Header = serde_json::from_str(json).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let mut model = Model::<T>::new(header.model.clone()).map_err(|e| CheckpointError::Header(e.to_string()))?;

        let count = r.u32("tensor count")?;
        let mut tensors: BTreeMap<String, (Vec<usize>, Vec<T>)> = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32("tensor name")?;
            let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
                .map_err(|e| CheckpointError::Header(e.to_string()))?;
            let what = format!("tensor {name}");
            let meta = r.take(2, &what)?;
            let (code, rank) = (meta[0], meta[1] as usize);
            if code != T::DTYPE.code() {
                return Err(CheckpointError::DType { name, found: code, expected: T::DTYPE.code() });
            }
            let shape = (0..rank).map(|_| r.u32(&what)).collect::<Result<Vec<_>, _>>()?;
            let bytes_len = shape
                .iter()
                .try_fold(DType::size_of(T::DTYPE), |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| CheckpointError::Truncated { what: what.clone() })?;
            let raw = r.take(bytes_len, &what)?;
            let data = raw.chunks_exact(DType::size_of(T::DTYPE)).map(T::read_le).collect();
            if tensors.insert(name.clone(), (shape, data)).is_some() {
                return Err(CheckpointError::Duplicate(name));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }

        let has_moments = tensors.keys().any(|k| k.starts_with("adam."));
        let mut take = |name: &str, expected: &[usize]| -> Result<Vec<T>, CheckpointError> {
            let (shape, data) = tensors.remove(name).ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
            if shape != expected {
                return Err(CheckpointError::ShapeMismatch { name: name.to_string(), found: shape, expected: expected.to_vec() });
            }
            Ok(data)
        };
        for p in model.params_mut() {
            let data = take(&p.name, p.value.shape())?;
            p.value.data_mut().copy_from_slice(&data);
        }
        for s in model.stats_mut() {
            s.mean = take(&format!("{}.running_mean", s.name), &[s.mean.len()])?;
            s.var = take(&format!("{}.running_var", s.name), &[s.var.len()])?;
        }
        let optimizer = if has_moments {
            let mut opt = Adam::new(&model);
            opt.step = header.step;
            for (i, p) in model.params().iter().enumerate() {
                opt.m[i] = take(&format!("adam.m.{}", p.name), p.value.shape())?;
                opt.v[i] = take(&format!("adam.v.{}", p.name), p.value.shape())?;
            }
            Some(opt)
        } else {
            None
        };
        drop(take);
        if let Some(name) = tensors.into_keys().next() {
            return Err(CheckpointError::UnknownTensor(name));
        }
        Ok(Checkpoint { model, optimizer, epoch: header.epoch })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.encode();
        // write-then-rename so a failed write never clobbers an existing file
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, &bytes).map_err(|source| CheckpointError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated { what: what.to_string() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}
