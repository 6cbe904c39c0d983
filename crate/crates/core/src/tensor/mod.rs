//! Dense N-dimensional tensors and the raw (non-recording) kernels behind the
//! differentiable operations in [`crate::autodiff`].
//!
//! Model data uses the canonical 5-axis layout `(N, C, T, H, W)`: element
//! `(n, c, t, h, w)` lives at flat index `((((n·C + c)·T + t)·H + h)·W + w)`.

mod conv;
mod ops;
mod scalar;

use std::sync::atomic::{AtomicBool, Ordering};

pub use conv::{
    conv3d, conv3d_backward, conv3d_output_extent, conv_transpose3d, conv_transpose3d_backward,
    conv_transpose3d_output_extent, ConvGeometry, ConvGrads,
};
pub use ops::{
    batch_norm_backward, batch_norm_forward, concat, crop, leaky_relu, leaky_relu_backward, pad,
    reverse_axis, split, BatchNormSaved, BatchStats,
};
pub use scalar::{Precision, Scalar};

use crate::error::{Error, Result};

/// Axis indices of the canonical `(N, C, T, H, W)` layout.
pub mod axis {
    pub const BATCH: usize = 0;
    pub const CHANNEL: usize = 1;
    pub const TIME: usize = 2;
    pub const HEIGHT: usize = 3;
    pub const WIDTH: usize = 4;

    pub const NAMES: [&str; 5] = ["batch", "channel", "time", "height", "width"];

    pub fn name(axis: usize) -> String {
        NAMES
            .get(axis)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("axis {axis}"))
    }
}

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Disable (or re-enable) batch-level parallelism inside the kernels.
///
/// Kernels reduce per-sample partials in a fixed order, so results do not
/// depend on thread count; deterministic mode additionally pins execution to
/// the calling thread.
pub fn set_deterministic(deterministic: bool) {
    PARALLEL.store(!deterministic, Ordering::Relaxed);
}

pub fn is_deterministic() -> bool {
    !PARALLEL.load(Ordering::Relaxed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "tensors need at least one axis".into(),
        });
    }
    if let Some(axis) = shape.iter().position(|&e| e == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("extent of axis {axis} is zero"),
        });
    }
    Ok(shape.iter().product())
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let numel = validate_shape(shape)?;
        if numel != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("holds {numel} elements but buffer has {}", data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If any extent is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    /// # Panics
    /// If any extent is zero.
    pub fn full(shape: &[usize], value: S) -> Self {
        let numel = validate_shape(shape).expect("Tensor::full");
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> S) -> Result<Self> {
        let numel = validate_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..numel).map(&mut f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Extents of a rank-5 tensor, or an error naming the operation.
    pub fn dims5(&self, op: &'static str) -> Result<[usize; 5]> {
        self.shape
            .as_slice()
            .try_into()
            .map_err(|_| Error::RankMismatch {
                op,
                expected: 5,
                actual: self.rank(),
            })
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.rank()];
        for i in (0..self.rank().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.rank());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &e)| {
                debug_assert!(i < e);
                acc * e + i
            })
    }

    pub fn get(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: S) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel = validate_shape(shape)?;
        if numel != self.numel() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("cannot reshape {} elements", self.numel()),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<S> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| T::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.rank() != other.rank() {
            return Err(Error::RankMismatch {
                op,
                expected: self.rank(),
                actual: other.rank(),
            });
        }
        for (i, (&a, &b)) in self.shape.iter().zip(&other.shape).enumerate() {
            if a != b {
                return Err(Error::ShapeMismatch {
                    op,
                    axis: axis_label(self.rank(), i),
                    expected: a,
                    actual: b,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn axis_label(rank: usize, axis: usize) -> String {
    if rank == 5 {
        axis::name(axis)
    } else {
        format!("axis {axis}")
    }
}

/// Zero-padding (or cropping) amounts, one `(before, after)` pair per axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PadSpec(Vec<(usize, usize)>);

impl PadSpec {
    pub fn none(rank: usize) -> Self {
        Self(vec![(0, 0); rank])
    }

    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self(pairs)
    }

    /// Builds a spec from signed counts, rejecting negatives.
    pub fn from_signed(pairs: &[(i64, i64)]) -> Result<Self> {
        pairs
            .iter()
            .enumerate()
            .map(|(axis, &(b, a))| {
                if b < 0 || a < 0 {
                    Err(Error::InvalidArgument(format!(
                        "negative padding ({b}, {a}) on axis {axis}"
                    )))
                } else {
                    Ok((b as usize, a as usize))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn on_axis(rank: usize, axis: usize, before: usize, after: usize) -> Self {
        let mut spec = Self::none(rank);
        spec.0[axis] = (before, after);
        spec
    }

    pub fn with(mut self, axis: usize, before: usize, after: usize) -> Self {
        self.0[axis] = (before, after);
        self
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> (usize, usize) {
        self.0[axis]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&(b, a)| b == 0 && a == 0)
    }

    /// Total number of padded positions summed over axes.
    pub fn total(&self) -> usize {
        self.0.iter().map(|&(b, a)| b + a).sum()
    }
}
