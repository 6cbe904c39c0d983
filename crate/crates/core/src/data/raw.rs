//! Conversion between headerless float dumps and GSEQ.
//!
//! A raw dump is a flat array of `T·H·W·C` floats in any axis order and
//! either byte order, as written by common array tools (`ndarray.tofile`,
//! `ncks --bnr` and the like).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::grid::{GridExtents, GridSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl FromStr for ByteOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "little" | "le" => Ok(Self::Little),
            "big" | "be" => Ok(Self::Big),
            other => Err(Error::UnknownName {
                kind: "byte order",
                name: other.to_string(),
                known: "little, big".into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawDtype {
    F32,
    F64,
}

impl RawDtype {
    pub fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

impl FromStr for RawDtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "float32" => Ok(Self::F32),
            "f64" | "float64" => Ok(Self::F64),
            other => Err(Error::UnknownName {
                kind: "raw dtype",
                name: other.to_string(),
                known: "f32, f64".into(),
            }),
        }
    }
}

/// How a dump is laid out: `order` is a permutation of `"thwc"`, slowest
/// axis first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawLayout {
    order: [usize; 4],
    pub byte_order: ByteOrder,
    pub dtype: RawDtype,
}

impl RawLayout {
    pub fn new(order: &str, byte_order: ByteOrder, dtype: RawDtype) -> Result<Self> {
        let mut axes = [usize::MAX; 4];
        let chars: Vec<char> = order.chars().collect();
        let mut seen = [false; 4];
        if chars.len() == 4 {
            for (slot, ch) in chars.iter().enumerate() {
                let ax = match ch {
                    't' => 0,
                    'h' => 1,
                    'w' => 2,
                    'c' => 3,
                    _ => break,
                };
                if seen[ax] {
                    break;
                }
                seen[ax] = true;
                axes[slot] = ax;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!(
                "axis order '{order}' must be a permutation of t, h, w, c"
            )));
        }
        Ok(Self {
            order: axes,
            byte_order,
            dtype,
        })
    }

    pub fn order(&self) -> String {
        self.order.iter().map(|&a| ['t', 'h', 'w', 'c'][a]).collect()
    }

    /// Flat index in the dump of GSEQ element `(t, h, w, c)`.
    fn offset(&self, e: GridExtents, idx: [usize; 4]) -> usize {
        let ext = [e.time, e.height, e.width, e.channels];
        self.order.iter().fold(0, |acc, &ax| acc * ext[ax] + idx[ax])
    }
}

impl Default for RawLayout {
    fn default() -> Self {
        Self {
            order: [0, 1, 2, 3],
            byte_order: ByteOrder::Little,
            dtype: RawDtype::F32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Imported {
    pub grid: GridSeq,
    /// NaNs replaced by the fill value.
    pub filled: usize,
}

fn for_each_index(e: GridExtents, mut f: impl FnMut([usize; 4])) {
    for t in 0..e.time {
        for h in 0..e.height {
            for w in 0..e.width {
                for c in 0..e.channels {
                    f([t, h, w, c]);
                }
            }
        }
    }
}

/// Decodes a dump. NaNs are rejected unless `fill` is given, in which case
/// they are replaced and counted.
pub fn import_raw(bytes: &[u8], extents: GridExtents, layout: RawLayout, fill: Option<f32>) -> Result<Imported> {
    let width = layout.dtype.width();
    let expected = (extents.len() * width) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let read = |i: usize| -> f64 {
        let chunk = &bytes[i * width..(i + 1) * width];
        match (layout.dtype, layout.byte_order) {
            (RawDtype::F32, ByteOrder::Little) => f32::from_le_bytes(chunk.try_into().expect("4")) as f64,
            (RawDtype::F32, ByteOrder::Big) => f32::from_be_bytes(chunk.try_into().expect("4")) as f64,
            (RawDtype::F64, ByteOrder::Little) => f64::from_le_bytes(chunk.try_into().expect("8")),
            (RawDtype::F64, ByteOrder::Big) => f64::from_be_bytes(chunk.try_into().expect("8")),
        }
    };
    let mut values = Vec::with_capacity(extents.len());
    let mut filled = 0;
    let mut first_nan = None;
    for_each_index(extents, |idx| {
        let v = read(layout.offset(extents, idx));
        if v.is_nan() {
            match fill {
                Some(f) => {
                    filled += 1;
                    values.push(f);
                }
                None => {
                    first_nan.get_or_insert(idx);
                    values.push(f32::NAN);
                }
            }
        } else {
            values.push(v as f32);
        }
    });
    if let Some([t, h, w, c]) = first_nan {
        return Err(Error::Data(format!(
            "NaN at (t={t}, h={h}, w={w}, c={c}); pass a fill value to replace missing data"
        )));
    }
    Ok(Imported {
        grid: GridSeq::new(extents, values)?,
        filled,
    })
}

pub fn import_raw_file(path: &Path, extents: GridExtents, layout: RawLayout, fill: Option<f32>) -> Result<Imported> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    import_raw(&bytes, extents, layout, fill)
}

/// Encodes `grid` in the given layout; the inverse of [`import_raw`].
pub fn export_raw(grid: &GridSeq, layout: RawLayout) -> Vec<u8> {
    let e = grid.extents();
    let width = layout.dtype.width();
    let mut out = vec![0u8; e.len() * width];
    for_each_index(e, |idx| {
        let v = grid.get(idx[0], idx[1], idx[2], idx[3]);
        let at = layout.offset(e, idx) * width;
        let dst = &mut out[at..at + width];
        match (layout.dtype, layout.byte_order) {
            (RawDtype::F32, ByteOrder::Little) => dst.copy_from_slice(&v.to_le_bytes()),
            (RawDtype::F32, ByteOrder::Big) => dst.copy_from_slice(&v.to_be_bytes()),
            (RawDtype::F64, ByteOrder::Little) => dst.copy_from_slice(&(v as f64).to_le_bytes()),
            (RawDtype::F64, ByteOrder::Big) => dst.copy_from_slice(&(v as f64).to_be_bytes()),
        }
    });
    out
}
