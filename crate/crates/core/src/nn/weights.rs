//! Binary weight files.
//!
//! Layout, little-endian: magic `DCTW`, `u32` version, `u32` tensor count;
//! per tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims
//! and `f32` values; then a CRC-32 of everything before it.

use std::path::Path;

use super::config::ModelConfig;
use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DCTW";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::MalformedWeights(format!("unexpected end of data at byte {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ParameterSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(Error::MalformedWeights("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::MalformedWeights("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r
            .take(n.checked_mul(4).ok_or_else(|| {
                Error::MalformedWeights(format!("tensor `{name}` is too large"))
            })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::MalformedWeights(format!(
            "{} trailing bytes after the last tensor",
            body.len() - r.pos
        )));
    }
    ParameterSet::new(entries)
}

pub fn save_weights(path: impl AsRef<Path>, params: &ParameterSet) -> Result<()> {
    std::fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ParameterSet> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads and checks names and shapes against `cfg`.
pub fn load_weights_for(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<ParameterSet> {
    load_weights(path)?.conform(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig::tiny();
        let p = ParameterSet::init(&cfg, 11).unwrap();
        let back = from_bytes(&to_bytes(&p)).unwrap().conform(&cfg).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn file_round_trip() {
        let cfg = ModelConfig::micro();
        let p = ParameterSet::init(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&path, &p).unwrap();
        assert_eq!(load_weights_for(&path, &cfg).unwrap(), p);
    }

    #[test]
    fn corruption_is_detected() {
        let p = ParameterSet::init(&ModelConfig::micro(), 1).unwrap();
        let bytes = to_bytes(&p);
        let truncated = &bytes[..bytes.len() - 9];
        assert!(matches!(from_bytes(truncated), Err(Error::Checksum { .. })));
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x10;
        assert!(matches!(from_bytes(&flipped), Err(Error::Checksum { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(from_bytes(&magic), Err(Error::BadMagic)));
    }

    #[test]
    fn version_is_checked() {
        let p = ParameterSet::init(&ModelConfig::micro(), 1).unwrap();
        let mut bytes = to_bytes(&p);
        bytes[4] = 9;
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::VersionMismatch(9))));
    }

    #[test]
    fn wrong_config_is_rejected() {
        let p = ParameterSet::init(&ModelConfig::micro(), 1).unwrap();
        let back = from_bytes(&to_bytes(&p)).unwrap();
        assert!(back.conform(&ModelConfig::tiny()).is_err());
    }
}
