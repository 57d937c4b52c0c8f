//! The `TNS3` binary container.
//!
//! Layout: magic `TNS3`, `u32` version 1, three `u64` dimensions `(m, n, p)`,
//! then `m*n*p` `f64` values in storage order. All integers and floats are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

const MAGIC: &[u8; 4] = b"TNS3";
const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(mut w: W, t: &DenseTensor3) -> Result<()> {
    let (m, n, p) = t.shape();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [m, n, p] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor3> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing TNS3 magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported TNS3 version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        *d = usize::try_from(u64::from_le_bytes(buf)).map_err(|_| Error::Format("dimension overflow".into()))?;
    }
    let [m, n, p] = dims;
    let count = m
        .checked_mul(n)
        .and_then(|v| v.checked_mul(p))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let mut raw = Vec::new();
    r.take((count as u64) * 8).read_to_end(&mut raw)?;
    if raw.len() != count * 8 {
        return Err(Error::Format(format!("expected {count} values, found {}", raw.len() / 8)));
    }
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DenseTensor3::from_vec(m, n, p, data)
}

pub fn save(path: impl AsRef<Path>, t: &DenseTensor3) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseTensor3> {
    read_tensor(BufReader::new(File::open(path)?))
}
