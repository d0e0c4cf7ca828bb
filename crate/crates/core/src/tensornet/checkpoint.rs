//! Binary weight files: `ECGW`, version, dtype width, a UTF-8 metadata
//! block, then named tensors with their shapes, all little-endian.

use std::path::Path;

use thiserror::Error;

use super::{ParamStore, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ECGW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    Version(u32),
    #[error("weight file stores {found}-byte floats, expected {expected}")]
    Dtype { expected: u8, found: u8 },
    #[error("weight file truncated")]
    Truncated,
    #[error("weight file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("malformed weight file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_checkpoint<T: Scalar>(store: &ParamStore<T>, metadata: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.scalar_count() * T::WIDTH as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::WIDTH);
    out.extend_from_slice(&(metadata.len() as u32).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name().len() as u16).to_le_bytes());
        out.extend_from_slice(p.name().as_bytes());
        out.push(p.shape().len() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.values() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String, CheckpointError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

/// Returns the metadata string and the stored parameters.
pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(String, ParamStore<T>), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(CheckpointError::Dtype { expected: T::WIDTH, found: width });
    }
    let meta_len = r.u32()? as usize;
    let meta = r.string(meta_len)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(width as usize).ok_or(CheckpointError::Truncated)?)?;
        let values = raw.chunks_exact(width as usize).map(T::read_le).collect();
        store.add(name, &shape, values).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok((meta, store))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, store: &ParamStore<T>, metadata: &str) -> Result<(), CheckpointError> {
    std::fs::write(path, write_checkpoint(store, metadata))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(String, ParamStore<T>), CheckpointError> {
    read_checkpoint(&std::fs::read(path)?)
}
