//! Flat binary checkpoints of policy parameters.
//!
//! Layout, little endian: magic `RNPO`, format version `u32`, array count
//! `u32`, then per array `rows u32`, `cols u32` and `rows * cols` `f64`s.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PpoError, Result};
use crate::policy::HybridPolicy;
use crate::tape::Mat;

const MAGIC: &[u8; 4] = b"RNPO";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_arrays<W: Write>(mut w: W, arrays: &[&Mat]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(arrays.len()).expect("array count fits u32").to_le_bytes())?;
    for m in arrays {
        for d in [m.rows, m.cols] {
            w.write_all(&u32::try_from(d).expect("dimension fits u32").to_le_bytes())?;
        }
        for v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_arrays<R: Read>(mut r: R) -> Result<Vec<Mat>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PpoError::Checkpoint("not a policy checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(PpoError::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| PpoError::Checkpoint("array too large".into()))?;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push(Mat::from_vec(rows, cols, data));
    }
    Ok(out)
}

impl HybridPolicy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_arrays(f, &self.params())
    }

    /// Overwrites the parameters with a checkpoint of the same shapes.
    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let arrays = read_arrays(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let mut params = self.params_mut();
        if arrays.len() != params.len() {
            return Err(PpoError::Checkpoint(format!(
                "checkpoint holds {} arrays, policy has {}",
                arrays.len(),
                params.len()
            )));
        }
        for (i, (p, a)) in params.iter().zip(&arrays).enumerate() {
            if (p.rows, p.cols) != (a.rows, a.cols) {
                return Err(PpoError::Checkpoint(format!(
                    "array {i} is {}x{}, policy expects {}x{}",
                    a.rows, a.cols, p.rows, p.cols
                )));
            }
        }
        for (p, a) in params.iter_mut().zip(arrays) {
            **p = a;
        }
        Ok(())
    }
}
