//! Sliding windows over a series and their chronological split.

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    /// Input frames (T).
    pub input_len: usize,
    /// Target frames (T″).
    pub output_len: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, output_len: usize, stride: usize) -> Result<Self> {
        if input_len == 0 || output_len == 0 || stride == 0 {
            return Err(Error::Config(format!(
                "window lengths and stride must be positive (T = {input_len}, T″ = {output_len}, stride = {stride})"
            )));
        }
        Ok(Self {
            input_len,
            output_len,
            stride,
        })
    }

    pub fn span(&self) -> usize {
        self.input_len + self.output_len
    }

    /// `floor((T_total − T − T″) / stride) + 1`
    pub fn count(&self, total_frames: usize) -> Result<usize> {
        if total_frames < self.span() {
            return Err(Error::Data(format!(
                "series of {total_frames} frames is shorter than one window of {} frames",
                self.span()
            )));
        }
        Ok((total_frames - self.span()) / self.stride + 1)
    }

    pub fn start(&self, window: usize) -> usize {
        window * self.stride
    }

    pub fn inputs(&self, window: usize) -> Range<usize> {
        let s = self.start(window);
        s..s + self.input_len
    }

    pub fn targets(&self, window: usize) -> Range<usize> {
        let s = self.start(window) + self.input_len;
        s..s + self.output_len
    }

    /// All frames the window touches.
    pub fn frames(&self, window: usize) -> Range<usize> {
        let s = self.start(window);
        s..s + self.span()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Window indices of each split, in chronological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [(&'static str, &[usize]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Splits `count` windows at `floor(n·r_train)` and `floor(n·(r_train +
/// r_val))`. A window whose frames reach the first frame of the next split
/// is dropped, so no frame is shared between splits.
pub fn chronological_split(spec: &WindowSpec, count: usize, ratios: SplitRatios) -> Result<Split> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {train}/{val}/{test} must be in [0, 1] and sum to 1"
        )));
    }
    let n = count as f64;
    let cut1 = ((n * train).floor() as usize).min(count);
    let cut2 = ((n * (train + val)).floor() as usize).clamp(cut1, count);
    let keep_before = |range: Range<usize>, next: usize| -> Vec<usize> {
        match next < count {
            true => {
                let boundary = spec.start(next);
                range.filter(|&i| spec.frames(i).end <= boundary).collect()
            }
            false => range.collect(),
        }
    };
    let split = Split {
        train: keep_before(0..cut1, cut1),
        val: keep_before(cut1..cut2, cut2),
        test: (cut2..count).collect(),
    };
    for (name, part) in split.parts() {
        if part.is_empty() {
            return Err(Error::Data(format!(
                "{name} split is empty ({count} windows, ratios {train}/{val}/{test})"
            )));
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let spec = WindowSpec::new(5, 5, 1).unwrap();
        assert_eq!(spec.count(100).unwrap(), 91);
        assert_eq!(spec.count(10).unwrap(), 1);
        assert!(spec.count(9).is_err());
        assert_eq!(spec.count(54_050).unwrap(), 54_041);
        let spec = WindowSpec::new(5, 5, 3).unwrap();
        assert_eq!(spec.count(100).unwrap(), 31);
    }

    #[test]
    fn ranges() {
        let spec = WindowSpec::new(5, 15, 2).unwrap();
        assert_eq!(spec.inputs(3), 6..11);
        assert_eq!(spec.targets(3), 11..26);
    }

    #[test]
    fn sixty_twenty_twenty() {
        let spec = WindowSpec::new(5, 5, 1).unwrap();
        let s = chronological_split(&spec, 100, SplitRatios::default()).unwrap();
        // windows 51..=59 reach frame 60, the first frame of validation
        assert_eq!(s.train, (0..51).collect::<Vec<_>>());
        assert_eq!(s.val, (60..71).collect::<Vec<_>>());
        assert_eq!(s.test, (80..100).collect::<Vec<_>>());
    }

    #[test]
    fn degenerate_ratios_rejected() {
        let spec = WindowSpec::new(5, 5, 1).unwrap();
        let all_train = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        assert!(chronological_split(&spec, 100, all_train).is_err());
        let bad_sum = SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(chronological_split(&spec, 100, bad_sum).is_err());
    }
}
