//! Gridded series storage, windowed samples, splits, normalization,
//! synthetic generators and raw-dump conversion.

mod grid;
mod raw;
mod synth;
mod window;

use std::ops::Range;
use std::str::FromStr;

pub use grid::{Coordinates, GridExtents, GridSeq, GSEQ_MAGIC, GSEQ_VERSION};
pub use raw::{export_raw, import_raw, import_raw_file, ByteOrder, Imported, RawDtype, RawLayout};
pub use synth::{generate, SynthKind, SynthParams};
pub use window::{chronological_split, Split, SplitRatios, WindowSpec};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormalizationMode {
    #[default]
    None,
    ZScore,
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "zscore" | "z-score" => Ok(Self::ZScore),
            other => Err(Error::UnknownName {
                kind: "normalization",
                name: other.to_string(),
                known: "none, zscore".into(),
            }),
        }
    }
}

/// Per-channel affine map `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    mode: NormalizationMode,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Self {
            mode: NormalizationMode::None,
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Z-score statistics over `frames` only. Falls back to the identity
    /// when some channel is constant there.
    pub fn fit(grid: &GridSeq, frames: Range<usize>) -> Self {
        let channels = grid.extents().channels;
        let mut sum = vec![0.0f64; channels];
        let mut sq = vec![0.0f64; channels];
        let mut count = 0usize;
        for t in frames {
            for px in grid.frame(t).chunks_exact(channels) {
                for (c, &v) in px.iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64) * (v as f64);
                }
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
            .collect();
        if std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            log::warn!("a channel is constant over the training frames; normalization disabled");
            return Self::identity(channels);
        }
        Self {
            mode: NormalizationMode::ZScore,
            mean,
            std,
        }
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn forward(&self, value: f64, channel: usize) -> f64 {
        match self.mode {
            NormalizationMode::None => value,
            NormalizationMode::ZScore => (value - self.mean[channel]) / self.std[channel],
        }
    }

    /// Maps a model-space `(N, C, …)` tensor back to original units.
    pub fn invert<S: Scalar>(&self, t: &Tensor<S>) -> Tensor<S> {
        if self.mode == NormalizationMode::None {
            return t.clone();
        }
        let shape = t.shape();
        let inner: usize = shape[2..].iter().product();
        let channels = shape[1];
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = (i / inner) % channels;
            *v = S::from_f64_lossy(v.to_f64_lossy() * self.std[c] + self.mean[c]);
        }
        out
    }
}

/// Windowed samples over a series with a chronological split. Samples are
/// normalized on the fly, in double precision, from the stored values.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    grid: GridSeq,
    spec: WindowSpec,
    split: Split,
    normalizer: Normalizer,
}

impl WindowedDataset {
    pub fn new(raw: &GridSeq, spec: WindowSpec, ratios: SplitRatios, mode: NormalizationMode) -> Result<Self> {
        let count = spec.count(raw.extents().time)?;
        let split = chronological_split(&spec, count, ratios)?;
        let last_train = *split.train.last().expect("non-empty train split");
        let normalizer = match mode {
            NormalizationMode::None => Normalizer::identity(raw.extents().channels),
            NormalizationMode::ZScore => Normalizer::fit(raw, 0..spec.frames(last_train).end),
        };
        Ok(Self {
            grid: raw.clone(),
            spec,
            split,
            normalizer,
        })
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn extents(&self) -> GridExtents {
        self.grid.extents()
    }

    /// Keeps only the first `n` training windows.
    pub fn truncate_train(&mut self, n: usize) -> Result<()> {
        if n == 0 || n > self.split.train.len() {
            return Err(Error::Config(format!(
                "cannot keep {n} of {} training windows",
                self.split.train.len()
            )));
        }
        self.split.train.truncate(n);
        Ok(())
    }

    /// Inputs `(N, C, T, H, W)` and targets `(N, C, T″, H, W)` in model
    /// (normalized) units.
    pub fn batch<S: Scalar>(&self, windows: &[usize]) -> Result<(Tensor<S>, Tensor<S>)> {
        let x = self.gather(windows, |w| self.spec.inputs(w))?;
        let y = self.gather(windows, |w| self.spec.targets(w))?;
        Ok((x, y))
    }

    fn gather<S: Scalar>(&self, windows: &[usize], frames: impl Fn(usize) -> Range<usize>) -> Result<Tensor<S>> {
        let e = self.grid.extents();
        let len = frames(0).len();
        let shape = [windows.len(), e.channels, len, e.height, e.width];
        let mut data = vec![S::zero(); shape.iter().product()];
        let plane = e.height * e.width;
        for (n, &w) in windows.iter().enumerate() {
            for (t, frame) in frames(w).enumerate() {
                let src = self.grid.frame(frame);
                for (p, px) in src.chunks_exact(e.channels).enumerate() {
                    for (c, &v) in px.iter().enumerate() {
                        let v = self.normalizer.forward(v as f64, c);
                        data[((n * e.channels + c) * len + t) * plane + p] = S::from_f64_lossy(v);
                    }
                }
            }
        }
        Tensor::from_vec(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize) -> GridSeq {
        let e = GridExtents::new(frames, 2, 3, 2).unwrap();
        GridSeq::new(e, (0..e.len()).map(|i| (i % 97) as f32).collect()).unwrap()
    }

    #[test]
    fn batch_layout() {
        let g = ramp(30);
        let spec = WindowSpec::new(3, 2, 1).unwrap();
        let ds = WindowedDataset::new(&g, spec, SplitRatios::default(), NormalizationMode::None).unwrap();
        let (x, y) = ds.batch::<f64>(&[4, 7]).unwrap();
        assert_eq!(x.shape(), &[2, 2, 3, 2, 3]);
        assert_eq!(y.shape(), &[2, 2, 2, 2, 3]);
        assert_eq!(x.get(&[1, 1, 2, 1, 0]), g.get(9, 1, 0, 1) as f64);
        assert_eq!(y.get(&[0, 0, 1, 0, 2]), g.get(8, 0, 2, 0) as f64);
    }

    #[test]
    fn normalization_round_trip() {
        let g = ramp(40);
        let spec = WindowSpec::new(3, 2, 1).unwrap();
        let ds = WindowedDataset::new(&g, spec, SplitRatios::default(), NormalizationMode::ZScore).unwrap();
        let n = ds.normalizer();
        assert_eq!(n.mode(), NormalizationMode::ZScore);
        let (x, _) = ds.batch::<f64>(&[0, 5]).unwrap();
        let raw = WindowedDataset::new(&g, spec, SplitRatios::default(), NormalizationMode::None).unwrap();
        let (xr, _) = raw.batch::<f64>(&[0, 5]).unwrap();
        assert!(n.invert(&x).max_abs_diff(&xr).unwrap() < 1e-12);
    }

    #[test]
    fn constant_channel_disables_normalization() {
        let e = GridExtents::new(20, 2, 2, 1).unwrap();
        let g = GridSeq::new(e, vec![3.0; e.len()]).unwrap();
        let n = Normalizer::fit(&g, 0..10);
        assert_eq!(n.mode(), NormalizationMode::None);
    }
}
