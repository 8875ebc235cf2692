//! `CDMCKPT1` checkpoints.
//!
//! Layout, all integers `u32` and floats little-endian:
//!
//! ```text
//! "CDMCKPT1"
//! steps, beta_start (f64), beta_end (f64)
//! cond_dim, hidden_dim, time_embed_dim
//! layer_count, then per layer: name_len, name (UTF-8), offset, out_dim, in_dim
//! param_count, then param_count × f32
//! ```
//!
//! Parameters are stored at `f32`; loading widens them back to `f64`.

use std::fs;
use std::path::Path;

use super::schedule::{make_schedule, NoiseSchedule};
use crate::denoiser::{DenoiserDims, DenoiserParams};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CDMCKPT1";

pub fn to_bytes(sched: &NoiseSchedule, params: &DenoiserParams) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    u32le(&mut out, sched.steps());
    let (b0, b1) = sched.beta_range();
    out.extend_from_slice(&b0.to_le_bytes());
    out.extend_from_slice(&b1.to_le_bytes());
    let dims = params.dims();
    for v in [dims.cond_dim, dims.hidden_dim, dims.time_embed_dim] {
        u32le(&mut out, v);
    }
    u32le(&mut out, params.layout().len());
    for l in params.layout() {
        u32le(&mut out, l.name.len());
        out.extend_from_slice(l.name.as_bytes());
        for v in [l.offset, l.out_dim, l.in_dim] {
            u32le(&mut out, v);
        }
    }
    u32le(&mut out, params.len());
    for v in params.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(NoiseSchedule, DenoiserParams)> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "missing CDMCKPT1 magic"));
    }
    let steps = r.u32()?;
    let (b0, b1) = (r.f64()?, r.f64()?);
    let sched = make_schedule(steps, b0, b1)?;
    let dims = DenoiserDims {
        cond_dim: r.u32()?,
        hidden_dim: r.u32()?,
        time_embed_dim: r.u32()?,
    };
    let layers = r.u32()?;
    let mut table = Vec::with_capacity(layers);
    for _ in 0..layers {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(path, "layer name is not UTF-8"))?
            .to_string();
        table.push((name, r.u32()?, r.u32()?, r.u32()?));
    }
    let count = r.u32()?;
    let values = (0..count)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }
    let params = DenoiserParams::from_values(dims, values)?;
    let expected: Vec<_> = params
        .layout()
        .iter()
        .map(|l| (l.name.clone(), l.offset, l.out_dim, l.in_dim))
        .collect();
    if table != expected {
        return Err(Error::format(path, "layer table does not match the denoiser layout"));
    }
    Ok((sched, params))
}

pub fn save(path: &Path, sched: &NoiseSchedule, params: &DenoiserParams) -> Result<()> {
    fs::write(path, to_bytes(sched, params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(NoiseSchedule, DenoiserParams)> {
    from_bytes(&fs::read(path)?, path)
}
