//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "STCK" | version u32 | scalar width u32 (4 or 8) | config digest [u8; 32]
//! | param count u32 | buffer count u32
//! | per tensor, params then buffers in registry order:
//!     rank u32 | extents u32 × rank | scalars (scalar width bytes each)
//! ```

use std::fs;
use std::path::Path;

use super::store::{ParamStore, StoreSnapshot};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"STCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint<S> {
    pub digest: [u8; 32],
    pub state: StoreSnapshot<S>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint<S: Scalar>(store: &ParamStore<S>, digest: &[u8; 32]) -> Vec<u8> {
    let snap = store.snapshot();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, S::PRECISION.bytes() as u32);
    out.extend_from_slice(digest);
    put_u32(&mut out, snap.params.len() as u32);
    put_u32(&mut out, snap.buffers.len() as u32);
    for t in snap.params.iter().chain(&snap.buffers) {
        put_u32(&mut out, t.rank() as u32);
        for &e in t.shape() {
            put_u32(&mut out, e as u32);
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_checkpoint<S: Scalar>(store: &ParamStore<S>, digest: &[u8; 32], path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(store, digest)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let width = r.u32()? as usize;
    if width != 4 && width != 8 {
        return Err(Error::Format(format!("unsupported scalar width {width}")));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let n_params = r.u32()? as usize;
    let n_buffers = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_params + n_buffers);
    for _ in 0..n_params + n_buffers {
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * width)?;
        let data = raw
            .chunks(width)
            .map(|c| {
                if width == 4 {
                    S::from_f64_lossy(f32::read_le(c) as f64)
                } else {
                    S::from_f64_lossy(f64::read_le(c))
                }
            })
            .collect();
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    let buffers = tensors.split_off(n_params);
    Ok(Checkpoint {
        digest,
        state: StoreSnapshot {
            params: tensors,
            buffers,
        },
    })
}

pub fn read_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Restores `store` from `path` after checking the config digest.
pub fn load_checkpoint<S: Scalar>(store: &mut ParamStore<S>, expected: &[u8; 32], path: &Path) -> Result<()> {
    let ckpt = read_checkpoint::<S>(path)?;
    if &ckpt.digest != expected {
        return Err(Error::DigestMismatch {
            expected: hex::encode(expected),
            found: hex::encode(ckpt.digest),
        });
    }
    store.restore(&ckpt.state)
}
