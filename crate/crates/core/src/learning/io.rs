//! Versioned little-endian binary model container.
//!
//! ```text
//! magic      8 bytes  "SPINVMDL"
//! version    u32
//! kind       u8       1 = split layer 1, 2 = split layer 2, 3 = unified
//! n_frames   u32
//! step       u64
//! alpha      f64
//! beta       f64
//! W          matrix
//! has_A      u8
//! A          matrix   (when has_A = 1)
//!
//! matrix     rows u32, cols u32, nonneg u8, rows·cols f64 row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Model, ModelKind};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPINVMDL";
pub const FORMAT_VERSION: u32 = 1;

/// Refuse matrices larger than this many entries when reading.
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_model<W: Write>(model: &Model, out: &mut W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&[model.kind.code()])?;
    out.write_all(&(model.n_frames as u32).to_le_bytes())?;
    out.write_all(&model.step.to_le_bytes())?;
    out.write_all(&model.alpha.to_le_bytes())?;
    out.write_all(&model.beta.to_le_bytes())?;
    write_matrix(&model.w, out)?;
    match &model.a {
        Some(a) => {
            out.write_all(&[1])?;
            write_matrix(a, out)?;
        }
        None => out.write_all(&[0])?,
    }
    Ok(())
}

fn write_matrix<W: Write>(d: &Dictionary, out: &mut W) -> Result<()> {
    let m = d.matrix();
    out.write_all(&(m.nrows() as u32).to_le_bytes())?;
    out.write_all(&(m.ncols() as u32).to_le_bytes())?;
    out.write_all(&[d.is_nonneg() as u8])?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("truncated file: {what} missing at byte {}", self.offset))
            }
            _ => Error::Io(e),
        })?;
        self.offset += N as u64;
        Ok(b)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    fn matrix(&mut self, name: &str) -> Result<Dictionary> {
        let rows = self.u32(&format!("{name} rows"))?;
        let cols = self.u32(&format!("{name} cols"))?;
        let nonneg = match self.u8(&format!("{name} sign flag"))? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("{name}: invalid sign flag {v}"))),
        };
        let n = rows as u64 * cols as u64;
        if n == 0 || n > MAX_ENTRIES {
            return Err(Error::Format(format!("{name}: implausible shape {rows}×{cols}")));
        }
        let mut data = Vec::with_capacity(n as usize);
        for _ in 0..n {
            data.push(self.f64(&format!("{name} entries"))?);
        }
        let m = Array2::from_shape_vec((rows as usize, cols as usize), data).expect("length checked");
        Dictionary::new(m, nonneg).map_err(|e| Error::Format(format!("{name}: {e}")))
    }
}

pub fn read_model<R: Read>(input: R) -> Result<Model> {
    let mut r = Reader { inner: input, offset: 0 };
    let magic = r.bytes::<8>("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let code = r.u8("kind")?;
    let kind = ModelKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown model kind {code}")))?;
    let n_frames = r.u32("frame count")? as usize;
    let step = r.u64("step")?;
    let alpha = r.f64("alpha")?;
    let beta = r.f64("beta")?;
    let w = r.matrix("W")?;
    let a = match r.u8("pooling flag")? {
        0 => None,
        1 => Some(r.matrix("A")?),
        v => return Err(Error::Format(format!("invalid pooling flag {v}"))),
    };
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::Format(format!("trailing data after byte {}", r.offset)));
    }
    let mut model = Model::new(kind, w, a, alpha, beta, n_frames).map_err(|e| Error::Format(e.to_string()))?;
    model.step = step;
    Ok(model)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    read_model(bytes.as_slice())
}
