//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"SEGMILP\0"
//! version    u32       currently 1
//! count      u32       number of parameters
//! repeated `count` times, in registration order:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   trainable u8       0 or 1
//!   rank     u32
//!   dims     rank × u64
//!   values   product(dims) × f64 (IEEE-754 binary64, little-endian)
//! ```
//!
//! The encoding is a pure function of the parameter set, so identical
//! parameters always produce identical bytes.

use std::path::Path;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 8] = b"SEGMILP\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_params(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, p) in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.trainable as u8);
        out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
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
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name: {e}")))?
            .to_string();
        let trainable = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Checkpoint(format!("bad trainable flag {b}"))),
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.add(name, Tensor::new(shape, values)?, trainable)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_params(path: &Path, params: &ParamSet) -> Result<()> {
    write_atomic(path, &encode_params(params))
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    decode_params(&std::fs::read(path).map_err(Error::file(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("emb", Tensor::matrix(2, 3, vec![0.0, 1.5, -2.0, 3.25, 1e-300, -0.0]).unwrap(), false)
            .unwrap();
        ps.add("b", Tensor::scalar(7.0), true).unwrap();
        ps
    }

    #[test]
    fn roundtrip_is_exact() {
        let ps = sample();
        let bytes = encode_params(&ps);
        let back = decode_params(&bytes).unwrap();
        assert_eq!(encode_params(&back), bytes);
        assert_eq!(back.by_name("emb").unwrap().tensor, ps.by_name("emb").unwrap().tensor);
        assert!(!back.by_name("emb").unwrap().trainable);
    }

    #[test]
    fn header_is_stable() {
        let bytes = encode_params(&sample());
        assert_eq!(&bytes[..8], b"SEGMILP\0");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = encode_params(&sample());
        assert!(decode_params(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_params(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_params(&extra).is_err());
    }
}
