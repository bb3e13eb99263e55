//! Versioned binary checkpoint: model config, named tensors with their
//! freeze flags, optional optimizer moments, a gate snapshot, the run seed,
//! and a trailing checksum. Tensor payloads are raw f64 bits, so a
//! save/load round trip is bit-exact.

use crate::error::{Error, Result};
use crate::io::{fnv1a, put_string, put_u32, put_u64, ByteReader};
use crate::model::{AnyModel, BaseModel, GateValue, GatedMMTModel, ModelConfig, ParamStore};
use crate::numerics::{Parameter, Tensor};
use crate::trainer::AdamState;
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 4] = b"GMTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub optimizer: Option<AdamState>,
    pub gates: Vec<GateValue>,
    pub seed: u64,
    pub step: u64,
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    for &x in t.data() {
        put_u64(out, x.to_bits());
    }
}

fn read_tensor(r: &mut ByteReader) -> Result<Tensor> {
    let rank = r.u32()? as usize;
    if rank > 8 {
        return Err(Error::data(format!("tensor rank {rank} out of range")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u64()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n.checked_mul(8).is_some_and(|bytes| bytes <= r.remaining()))
        .ok_or_else(|| Error::data("tensor larger than remaining payload"))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.f64_bits()?);
    }
    Tensor::new(shape, data)
}

fn put_tensor_map(out: &mut Vec<u8>, map: &BTreeMap<String, Tensor>) {
    put_u64(out, map.len() as u64);
    for (name, t) in map {
        put_string(out, name);
        put_tensor(out, t);
    }
}

fn read_tensor_map(r: &mut ByteReader) -> Result<BTreeMap<String, Tensor>> {
    let n = r.u64()? as usize;
    let mut map = BTreeMap::new();
    for _ in 0..n {
        let name = r.string()?;
        map.insert(name, read_tensor(r)?);
    }
    Ok(map)
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let cfg_json = serde_json::to_string(self.model.cfg())
            .map_err(|e| Error::data(format!("serialize config: {e}")))?;
        put_string(&mut out, &cfg_json);
        out.push(if self.model.is_gated() { 1 } else { 0 });
        put_u64(&mut out, self.seed);
        put_u64(&mut out, self.step);

        put_u64(&mut out, self.model.params().len() as u64);
        for (name, p) in self.model.params().iter() {
            put_string(&mut out, name);
            out.push(p.trainable as u8);
            put_tensor(&mut out, &p.value);
        }

        match &self.optimizer {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                put_u64(&mut out, s.step);
                put_tensor_map(&mut out, &s.m);
                put_tensor_map(&mut out, &s.v);
            }
        }

        put_u64(&mut out, self.gates.len() as u64);
        for g in &self.gates {
            put_u64(&mut out, g.layer as u64);
            put_string(&mut out, &g.name);
            put_u64(&mut out, g.gamma_a.to_bits());
            put_u64(&mut out, g.gamma_f.to_bits());
        }

        let sum = fnv1a(&out);
        put_u64(&mut out, sum);
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Decode a serialized checkpoint; `origin` prefixes error messages.
    pub fn from_bytes(buf: &[u8], origin: &str) -> Result<Checkpoint> {
        if buf.len() < 16 {
            return Err(Error::data(format!("{origin}: not a checkpoint")));
        }
        let (body, tail) = buf.split_at(buf.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a(body) != stored {
            return Err(Error::data(format!(
                "{origin}: checksum mismatch, file is corrupt"
            )));
        }
        let mut r = ByteReader::new(body);
        if r.take(4)? != MAGIC {
            return Err(Error::data(format!("{origin}: bad magic")));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::data(format!(
                "{origin}: unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let cfg: ModelConfig = serde_json::from_str(&r.string()?)
            .map_err(|e| Error::data(format!("{origin}: bad config block: {e}")))?;
        let gated = r.u8()? == 1;
        let seed = r.u64()?;
        let step = r.u64()?;

        let n_params = r.u64()? as usize;
        if n_params > (1 << 24) {
            return Err(Error::data(format!(
                "{origin}: implausible parameter count {n_params}"
            )));
        }
        let mut params = ParamStore::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let trainable = r.u8()? == 1;
            let value = read_tensor(&mut r)?;
            let mut p = Parameter::new(name, value);
            p.trainable = trainable;
            params.insert(p);
        }

        let optimizer = if r.u8()? == 1 {
            let ostep = r.u64()?;
            let m = read_tensor_map(&mut r)?;
            let v = read_tensor_map(&mut r)?;
            Some(AdamState { step: ostep, m, v })
        } else {
            None
        };

        let n_gates = r.u64()? as usize;
        if n_gates > (1 << 24) {
            return Err(Error::data(format!("{origin}: implausible gate count {n_gates}")));
        }
        let mut gates = Vec::with_capacity(n_gates);
        for _ in 0..n_gates {
            let layer = r.u64()? as usize;
            let name = r.string()?;
            let gamma_a = r.f64_bits()?;
            let gamma_f = r.f64_bits()?;
            gates.push(GateValue { layer, name, gamma_a, gamma_f });
        }

        let model = if gated {
            AnyModel::Gated(GatedMMTModel { cfg, params })
        } else {
            AnyModel::Base(BaseModel { cfg, params })
        };
        Ok(Checkpoint { model, optimizer, gates, seed, step })
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let buf = std::fs::read(path)?;
        Self::from_bytes(&buf, &path.display().to_string())
    }
}
