//! RMSE and MAE over `(N, C, T″, H, W)` forecasts, whole and per output step.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{axis, Scalar, Tensor};

/// What the error sums are divided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Every predicted element counts once: `N·C·T″·H·W`.
    #[default]
    PerElement,
    /// The sample count `N` only, summing over all other axes.
    PerSample,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element" | "per-element" => Ok(Self::PerElement),
            "sample" | "per-sample" => Ok(Self::PerSample),
            other => Err(Error::UnknownName {
                kind: "metric normalization",
                name: other.to_string(),
                known: "per-element, per-sample".into(),
            }),
        }
    }
}

/// Squared and absolute error sums kept per output step, in double
/// precision, so batches can be folded in one at a time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorAccumulator {
    samples: usize,
    /// Elements per sample and step: `C·H·W`.
    step_len: usize,
    squared: Vec<f64>,
    absolute: Vec<f64>,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<S: Scalar>(&mut self, pred: &Tensor<S>, target: &Tensor<S>) -> Result<()> {
        let [n, c, t, h, w] = target.dims5("metrics")?;
        if pred.shape() != target.shape() {
            let ax = (0..5).find(|&a| pred.shape().get(a) != Some(&target.shape()[a])).unwrap_or(0);
            return Err(Error::ShapeMismatch {
                op: "metrics",
                axis: axis::name(ax),
                expected: target.shape()[ax],
                actual: pred.shape().get(ax).copied().unwrap_or(0),
            });
        }
        if self.squared.is_empty() {
            self.squared = vec![0.0; t];
            self.absolute = vec![0.0; t];
            self.step_len = c * h * w;
        } else if self.squared.len() != t || self.step_len != c * h * w {
            return Err(Error::InvalidArgument(format!(
                "batch of {t} steps × {} elements does not match earlier batches ({} × {})",
                c * h * w,
                self.squared.len(),
                self.step_len
            )));
        }
        let plane = h * w;
        for (i, (&p, &y)) in pred.data().iter().zip(target.data()).enumerate() {
            let step = (i / plane) % t;
            let d = p.to_f64_lossy() - y.to_f64_lossy();
            self.squared[step] += d * d;
            self.absolute[step] += d.abs();
        }
        self.samples += n;
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn steps(&self) -> usize {
        self.squared.len()
    }

    fn divisor(&self, steps: usize, norm: Normalization) -> f64 {
        match norm {
            Normalization::PerElement => (self.samples * self.step_len * steps) as f64,
            Normalization::PerSample => self.samples as f64,
        }
    }

    pub fn finish(&self, norm: Normalization) -> Result<EvalResult> {
        if self.samples == 0 {
            return Err(Error::Data("no samples to evaluate".into()));
        }
        let steps = self.steps();
        let per_step_rmse = self.squared.iter().map(|s| (s / self.divisor(1, norm)).sqrt()).collect();
        let per_step_mae = self.absolute.iter().map(|a| a / self.divisor(1, norm)).collect();
        let running = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        };
        let cum_sq = running(&self.squared);
        let cum_abs = running(&self.absolute);
        let cumulative_rmse = cum_sq
            .iter()
            .enumerate()
            .map(|(i, s)| (s / self.divisor(i + 1, norm)).sqrt())
            .collect();
        let cumulative_mae = cum_abs
            .iter()
            .enumerate()
            .map(|(i, a)| a / self.divisor(i + 1, norm))
            .collect();
        Ok(EvalResult {
            rmse: (cum_sq[steps - 1] / self.divisor(steps, norm)).sqrt(),
            mae: cum_abs[steps - 1] / self.divisor(steps, norm),
            per_step_rmse,
            per_step_mae,
            cumulative_rmse,
            cumulative_mae,
            samples: self.samples,
            normalization: norm,
        })
    }
}

/// Scalar metrics plus their per-step and cumulative curves. The
/// cumulative value at step τ aggregates steps `1..=τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub rmse: f64,
    pub mae: f64,
    pub per_step_rmse: Vec<f64>,
    pub per_step_mae: Vec<f64>,
    pub cumulative_rmse: Vec<f64>,
    pub cumulative_mae: Vec<f64>,
    pub samples: usize,
    pub normalization: Normalization,
}

pub fn evaluate<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>, norm: Normalization) -> Result<EvalResult> {
    let mut acc = ErrorAccumulator::new();
    acc.add(pred, target)?;
    acc.finish(norm)
}

pub fn rmse<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<f64> {
    evaluate(pred, target, Normalization::PerElement).map(|r| r.rmse)
}

pub fn mae<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<f64> {
    evaluate(pred, target, Normalization::PerElement).map(|r| r.mae)
}
