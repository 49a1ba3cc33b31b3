//! Checkpoint file format (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FEREXCK1"
//! version  u16      1
//! config   u32 byte length, then UTF-8 JSON of ModelConfig
//! count    u32      number of tensors
//! tensor   u8 rank, rank × u32 dims, then Π dims × f32 values
//! ```
//!
//! Tensors appear in canonical parameter order and must match the shapes the
//! embedded config implies. Nothing may follow the last tensor.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{ModelConfig, Parameters};
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 8] = b"FEREXCK1";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint(params: &Parameters, config: &ModelConfig) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 64 + params.tensors().map(|t| 4 * t.numel() + 17).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.tensors().count() as u32).to_le_bytes());
    for t in params.tensors() {
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Corrupt(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Parameters, ModelConfig)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic".into()));
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version: expected {VERSION}, found {version}")));
    }
    let json_len = r.u32("config length")? as usize;
    let json = r.take(json_len, "config")?;
    let config: ModelConfig = serde_json::from_slice(json).map_err(|e| Error::Corrupt(format!("config json: {e}")))?;
    config.validate().map_err(|e| Error::Corrupt(format!("embedded config: {e}")))?;

    let shapes = config.param_shapes();
    let count = r.u32("tensor count")? as usize;
    if count != shapes.len() {
        return Err(Error::Corrupt(format!("config implies {} tensors, file declares {count}", shapes.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for (i, expected) in shapes.iter().enumerate() {
        let rank = r.take(1, "rank")?[0] as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Corrupt(format!("tensor {i} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != *expected {
            return Err(Error::Corrupt(format!("tensor {i} has shape {dims:?}, config implies {expected:?}")));
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * 4, "tensor payload")?;
        let data: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::from_vec(&dims, data).map_err(|e| Error::Corrupt(format!("tensor {i}: {e}")))?;
        tensors.push(t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
    }
    let params = Parameters::from_tensors(&config, tensors).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok((params, config))
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// save never leaves a partial checkpoint at `path`.
pub fn save_checkpoint(params: &Parameters, config: &ModelConfig, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params, config)?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name =
        path.file_name().ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Parameters, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// SHA-256 over every parameter value in canonical order, as lowercase hex.
pub fn params_digest(params: &Parameters) -> String {
    let mut h = Sha256::new();
    for t in params.tensors() {
        for &d in t.dims() {
            h.update((d as u32).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
