//! Binary checkpoint: magic `GCKP`, u32 format version, u32 length + UTF-8
//! TOML config echo, u32 tensor count, then per tensor u32 name length,
//! name, u32 rank, u32 dims, f32 values. All little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::model::{Denoiser, DenoiserConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters are stored as f32; the loaded model is rounded to match.
pub fn round_to_f32(model: &mut Denoiser) {
    for (_, _, values) in model.tensors_mut() {
        for v in values {
            *v = f64::from(*v as f32);
        }
    }
}

pub fn encode_checkpoint(model: &Denoiser) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = toml::to_string(&model.config).expect("config serializes");
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, values) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Data("checkpoint string is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Denoiser> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let config: DenoiserConfig =
        toml::from_str(&r.string()?).map_err(|e| Error::Data(format!("checkpoint config: {e}")))?;
    let mut model = Denoiser::new(config)?;
    let count = r.u32()? as usize;
    let mut tensors = model.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Data(format!("checkpoint has {count} tensors, model has {}", tensors.len())));
    }
    for (name, shape, values) in tensors.iter_mut() {
        let got = r.string()?;
        if &got != name {
            return Err(Error::Data(format!("expected tensor {name}, found {got}")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Data(format!("tensor {name} has shape {dims:?}, model expects {shape:?}")));
        }
        for v in values.iter_mut() {
            *v = f64::from(f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")));
        }
    }
    drop(tensors);
    if r.pos != bytes.len() {
        return Err(Error::Data("trailing bytes after checkpoint".into()));
    }
    if !model.is_finite() {
        return Err(Error::Numeric("checkpoint holds non-finite parameters".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Denoiser, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Denoiser> {
    let bytes = std::fs::read(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Data(m) => Error::ingestion(path, m),
        other => other,
    })
}

/// Validation error naming the first field where the checkpoint's model
/// config differs from `expected`.
pub fn check_config(found: &DenoiserConfig, expected: &DenoiserConfig) -> Result<()> {
    let a = toml::Table::try_from(found).expect("config serializes");
    let b = toml::Table::try_from(expected).expect("config serializes");
    for (key, value) in &b {
        if a.get(key) != Some(value) {
            return Err(Error::Validation(format!(
                "checkpoint {key} = {} but the model config wants {value}",
                a.get(key).map_or("<missing>".to_string(), |v| v.to_string())
            )));
        }
    }
    Ok(())
}
