//! Named-tensor checkpoint file.
//!
//! Layout, all integers little-endian:
//! magic `RKTM`, version `u32`, parameter count `u32`, then per parameter:
//! name length `u32` + UTF-8 name, rank `u32`, each dim `u32`, row-major
//! `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NumericsError, Result, Tensor};

const MAGIC: &[u8; 4] = b"RKTM";
const VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NumericsError::BadCheckpoint(format!(
            "bad magic {magic:?}, expected RKTM"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(NumericsError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| NumericsError::BadCheckpoint(format!("name not UTF-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rktm");
        let mut rng = Rng::new(11);
        let params = vec![
            ("w_q".to_string(), Tensor::randn(vec![4, 4], 0.01, &mut rng)),
            ("bias".to_string(), Tensor::randn(vec![4], 1.0, &mut rng)),
            ("s0".to_string(), Tensor::scalar(8.25)),
        ];
        write_checkpoint(&path, &params).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.rktm");
        std::fs::write(&path, b"NOPE....").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
