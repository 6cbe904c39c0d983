//! The GSEQ container for a `T × H × W × C` gridded series.
//!
//! ```text
//! "GSEQ" | version u32 | T u32 | H u32 | W u32 | C u32 | has_coords u32
//!        | [lat f32 × H | lon f32 × W]   when has_coords = 1
//!        | payload f32 × T·H·W·C         row-major over (t, h, w, c)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const GSEQ_MAGIC: &[u8; 4] = b"GSEQ";
pub const GSEQ_VERSION: u32 = 1;
const HEADER_BYTES: usize = 4 + 6 * 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridExtents {
    pub time: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridExtents {
    pub fn new(time: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        let e = Self {
            time,
            height,
            width,
            channels,
        };
        if [time, height, width, channels].contains(&0) {
            return Err(Error::InvalidShape {
                shape: e.to_vec(),
                reason: "grid extents must be at least 1".into(),
            });
        }
        Ok(e)
    }

    pub fn to_vec(self) -> Vec<usize> {
        vec![self.time, self.height, self.width, self.channels]
    }

    pub fn frame_len(self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn len(self) -> usize {
        self.time * self.frame_len()
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coordinates {
    pub latitude: Vec<f32>,
    pub longitude: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSeq {
    extents: GridExtents,
    values: Vec<f32>,
    coords: Option<Coordinates>,
}

impl GridSeq {
    pub fn new(extents: GridExtents, values: Vec<f32>) -> Result<Self> {
        if values.len() != extents.len() {
            return Err(Error::SizeMismatch {
                expected: extents.len() as u64,
                actual: values.len() as u64,
            });
        }
        Ok(Self {
            extents,
            values,
            coords: None,
        })
    }

    pub fn with_coordinates(mut self, coords: Coordinates) -> Result<Self> {
        if coords.latitude.len() != self.extents.height || coords.longitude.len() != self.extents.width {
            return Err(Error::Format(format!(
                "coordinate vectors of length {}/{} do not match H = {}, W = {}",
                coords.latitude.len(),
                coords.longitude.len(),
                self.extents.height,
                self.extents.width
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn extents(&self) -> GridExtents {
        self.extents
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn coordinates(&self) -> Option<&Coordinates> {
        self.coords.as_ref()
    }

    pub fn index(&self, t: usize, h: usize, w: usize, c: usize) -> usize {
        let e = self.extents;
        ((t * e.height + h) * e.width + w) * e.channels + c
    }

    pub fn get(&self, t: usize, h: usize, w: usize, c: usize) -> f32 {
        self.values[self.index(t, h, w, c)]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.extents.frame_len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn encode(&self) -> Vec<u8> {
        let e = self.extents;
        let coord_len = self.coords.as_ref().map_or(0, |_| e.height + e.width);
        let mut out = Vec::with_capacity(HEADER_BYTES + 4 * (coord_len + self.values.len()));
        out.extend_from_slice(GSEQ_MAGIC);
        for v in [
            GSEQ_VERSION,
            e.time as u32,
            e.height as u32,
            e.width as u32,
            e.channels as u32,
            self.coords.is_some() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(c) = &self.coords {
            for v in c.latitude.iter().chain(&c.longitude) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Format(format!(
                "GSEQ header needs {HEADER_BYTES} bytes, file has {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != GSEQ_MAGIC {
            return Err(Error::Format("missing GSEQ magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let version = word(0);
        if version != GSEQ_VERSION {
            return Err(Error::Format(format!("unsupported GSEQ version {version}")));
        }
        let extents = GridExtents::new(word(1) as usize, word(2) as usize, word(3) as usize, word(4) as usize)?;
        let has_coords = match word(5) {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("has_coords flag {other} is not 0 or 1"))),
        };
        let coord_len = if has_coords { extents.height + extents.width } else { 0 };
        let expected = HEADER_BYTES as u64 + 4 * (coord_len as u64 + extents.len() as u64);
        if bytes.len() as u64 != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let floats: Vec<f32> = bytes[HEADER_BYTES..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let (coords, values) = floats.split_at(coord_len);
        let grid = Self::new(extents, values.to_vec())?;
        if has_coords {
            let (lat, lon) = coords.split_at(extents.height);
            return grid.with_coordinates(Coordinates {
                latitude: lat.to_vec(),
                longitude: lon.to_vec(),
            });
        }
        Ok(grid)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// SHA-256 of the encoded file, hex.
    pub fn digest_hex(&self) -> String {
        hex::encode(Sha256::digest(self.encode()))
    }
}
