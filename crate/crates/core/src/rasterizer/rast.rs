//! `RAST1` raster files: an ASCII header `RAST1 <width> <height> <channels>\n`
//! followed by `width·height·channels` little-endian `f32` values, row-major
//! with channels interleaved per pixel.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &str = "RAST1";

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn from_f64(width: usize, height: usize, channels: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} values for a {width}x{height}x{channels} raster",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: values.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!("{MAGIC} {} {} {}\n", self.width, self.height, self.channels);
        let mut out = Vec::with_capacity(header.len() + self.data.len() * 4);
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header newline".into()))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 || fields[0] != MAGIC {
            return Err(bad(format!("bad header '{header}'")));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("header field '{s}': {e}")));
        let (width, height, channels) = (dim(fields[1])?, dim(fields[2])?, dim(fields[3])?);
        let body = &bytes[nl + 1..];
        let expected = width * height * channels * 4;
        if body.len() != expected {
            return Err(bad(format!("body has {} bytes, expected {expected}", body.len())));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }
}
