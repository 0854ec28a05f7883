//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//! `"CMT1"`, `u32` entry count, then per entry `u16` name length, UTF-8 name,
//! `u8` rank, `rank × u32` dims, and the values as `f64` LE. Optimizer state
//! is not written.

use std::path::Path;

use super::{NumArray, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CMT1";

pub fn encode_checkpoint(params: &ParamStore) -> Result<Vec<u8>> {
    let entries: Vec<_> = params.learnable().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, p) in entries {
        let nb = name.as_bytes();
        let len = u16::try_from(nb.len()).map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(nb);
        let shape = p.value.shape();
        let rank = u8::try_from(shape.len()).map_err(|_| Error::Checkpoint(format!("rank too large for {name}")))?;
        out.push(rank);
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| Error::Checkpoint(format!("dimension too large for {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated checkpoint while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let count = r.u32("entry count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Checkpoint(format!("shape overflow for {name}")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?, &name)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        store
            .insert(name.clone(), NumArray::new(shape, data)?)
            .map_err(|_| Error::Checkpoint(format!("duplicate parameter {name}")))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes after last entry", bytes.len() - r.pos)));
    }
    Ok(store)
}

pub fn save_checkpoint(params: &ParamStore, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut ps = ParamStore::new();
        ps.insert("enc_pts.l0.w", NumArray::new(vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, -0.0, 1e-300]).unwrap()).unwrap();
        ps.insert("enc_pts.l0.b", NumArray::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        ps
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"CMT1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(bytes[8..10].try_into().unwrap()), 12);
        assert_eq!(&bytes[10..22], b"enc_pts.l0.w");
        assert_eq!(bytes[22], 2);
        // 8 header + (2 + 12 + 1 + 8 + 48) + (2 + 12 + 1 + 4 + 24)
        assert_eq!(bytes.len(), 8 + 71 + 43);
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, sample());
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        for cut in [0, 3, 7, 9, 20, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = decode_checkpoint(&bad).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn optimizer_state_not_written() {
        let mut ps = sample();
        ps.insert("__opt.sgd.v.enc_pts.l0.b", NumArray::zeros(&[3])).unwrap();
        assert_eq!(encode_checkpoint(&ps).unwrap(), encode_checkpoint(&sample()).unwrap());
    }
}
