//! Flat binary parameter files.
//!
//! Layout, all integers little-endian:
//! `"QAM1"`, version `u32`, then until end of file, per tensor:
//! name length `u32`, UTF-8 name, rank `u32`, `rank` dims as `u32`,
//! `product(dims)` values as `f64`.

use std::io::{ErrorKind, Read, Write};

use super::{NnError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QAM1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, records: &[(String, Tensor)]) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in records {
        out.write_all(&to_u32(name.len())?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&to_u32(t.rank())?.to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&to_u32(d)?.to_le_bytes())?;
        }
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn to_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| NnError::Checkpoint(format!("{n} does not fit in u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> NnError {
    if e.kind() == ErrorKind::UnexpectedEof {
        NnError::Checkpoint("truncated file".into())
    } else {
        NnError::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut cursor = &bytes[8..];
    let mut records = Vec::new();
    while !cursor.is_empty() {
        let name_len = read_u32(&mut cursor)? as usize;
        let mut name = vec![0u8; name_len];
        cursor.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut cursor)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut cursor)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            cursor.read_exact(&mut b).map_err(truncated)?;
            data.push(f64::from_le_bytes(b));
        }
        records.push((name, Tensor::new(dims, data)?));
    }
    Ok(records)
}
