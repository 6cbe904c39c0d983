//! 3D cross-correlation and its transpose, lowered to GEMM through im2col.
//!
//! Kernels are applied without flipping (cross-correlation). Transposed
//! convolution is exactly the input-gradient pass of the matching `conv3d`.

use rayon::prelude::*;

use super::{axis, is_deterministic, PadSpec, Scalar, Tensor};
use crate::error::{Error, Result};

const SPATIAL_AXES: [usize; 3] = [axis::TIME, axis::HEIGHT, axis::WIDTH];

/// Stride and zero padding over the `(T, H, W)` axes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub pad: [(usize, usize); 3],
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: [1; 3],
            pad: [(0, 0); 3],
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: [usize; 3], pad: &PadSpec) -> Result<Self> {
        if pad.rank() != 3 {
            return Err(Error::InvalidArgument(format!(
                "convolution padding needs 3 axes (T, H, W), got {}",
                pad.rank()
            )));
        }
        Ok(Self {
            stride,
            pad: [pad.get(0), pad.get(1), pad.get(2)],
        })
    }

    pub fn with_pad(pad: [(usize, usize); 3]) -> Self {
        Self {
            stride: [1; 3],
            pad,
        }
    }

    pub fn with_stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    fn check_stride(&self, op: &'static str) -> Result<()> {
        if let Some(i) = self.stride.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "{op}: stride on {} must be at least 1",
                axis::name(SPATIAL_AXES[i])
            )));
        }
        Ok(())
    }
}

/// `floor((input + before + after - kernel) / stride) + 1`, or `None` when the
/// kernel does not fit in the padded input.
pub fn conv3d_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: (usize, usize),
) -> Option<usize> {
    let padded = input + pad.0 + pad.1;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

/// `(input - 1)·stride - (before + after) + kernel + output_pad`, or `None`
/// when that is not positive.
pub fn conv_transpose3d_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: (usize, usize),
    output_pad: usize,
) -> Option<usize> {
    let grown = (input - 1) * stride + kernel + output_pad;
    (grown > pad.0 + pad.1).then(|| grown - pad.0 - pad.1)
}

/// Gradients produced by the backward convolution kernels.
#[derive(Clone, Debug)]
pub struct ConvGrads<S> {
    pub input: Option<Tensor<S>>,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
}

/// im2col lowering for one sample: rows are `(c, kt, kh, kw)` taps, columns
/// are output positions `(t, h, w)`.
struct Lowering {
    channels: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    output: [usize; 3],
    stride: [usize; 3],
    pad_before: [usize; 3],
}

impl Lowering {
    fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    fn cols(&self) -> usize {
        self.output.iter().product()
    }

    fn input_len(&self) -> usize {
        self.channels * self.input.iter().product::<usize>()
    }

    /// Range of output indices along one axis whose input index
    /// `o·stride + tap - pad` lands inside `[0, extent)`.
    fn valid_range(&self, ax: usize, tap: usize) -> (usize, usize) {
        let (s, p, n, out) = (
            self.stride[ax],
            self.pad_before[ax],
            self.input[ax],
            self.output[ax],
        );
        let lo = if p > tap { (p - tap).div_ceil(s) } else { 0 };
        let hi = (n + p).saturating_sub(tap).div_ceil(s).min(out);
        (lo.min(hi), hi)
    }

    fn for_each_row(&self, mut f: impl FnMut(usize, usize, [usize; 3])) {
        let [kt, kh, kw] = self.kernel;
        let mut row = 0;
        for c in 0..self.channels {
            for a in 0..kt {
                for b in 0..kh {
                    for d in 0..kw {
                        f(row, c, [a, b, d]);
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<S: Scalar>(&self, x: &[S], cols: &mut [S]) {
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad_before;
        let ncols = self.cols();
        let chan = self.input.iter().product::<usize>();
        self.for_each_row(|row, c, [a, b, d]| {
            let dst = &mut cols[row * ncols..(row + 1) * ncols];
            dst.fill(S::zero());
            let (t_lo, t_hi) = self.valid_range(0, a);
            let (h_lo, h_hi) = self.valid_range(1, b);
            let (w_lo, w_hi) = self.valid_range(2, d);
            if w_lo == w_hi {
                return;
            }
            let src = &x[c * chan..(c + 1) * chan];
            for to in t_lo..t_hi {
                let ti = to * st + a - pt;
                for ho in h_lo..h_hi {
                    let hi = ho * sh + b - ph;
                    let src_row = &src[(ti * ih + hi) * iw..(ti * ih + hi + 1) * iw];
                    let dst_row = &mut dst[(to * oh + ho) * ow..(to * oh + ho + 1) * ow];
                    if sw == 1 {
                        let wi = w_lo + d - pw;
                        dst_row[w_lo..w_hi].copy_from_slice(&src_row[wi..wi + (w_hi - w_lo)]);
                    } else {
                        for wo in w_lo..w_hi {
                            dst_row[wo] = src_row[wo * sw + d - pw];
                        }
                    }
                }
            }
        });
    }

    fn col2im_add<S: Scalar>(&self, cols: &[S], x: &mut [S]) {
        let [_, ih, iw] = self.input;
        let [_, oh, ow] = self.output;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.pad_before;
        let ncols = self.cols();
        let chan = self.input.iter().product::<usize>();
        self.for_each_row(|row, c, [a, b, d]| {
            let src = &cols[row * ncols..(row + 1) * ncols];
            let (t_lo, t_hi) = self.valid_range(0, a);
            let (h_lo, h_hi) = self.valid_range(1, b);
            let (w_lo, w_hi) = self.valid_range(2, d);
            let dst = &mut x[c * chan..(c + 1) * chan];
            for to in t_lo..t_hi {
                let ti = to * st + a - pt;
                for ho in h_lo..h_hi {
                    let hi = ho * sh + b - ph;
                    let dst_row = &mut dst[(ti * ih + hi) * iw..(ti * ih + hi + 1) * iw];
                    let src_row = &src[(to * oh + ho) * ow..(to * oh + ho + 1) * ow];
                    for (wo, &v) in src_row.iter().enumerate().take(w_hi).skip(w_lo) {
                        let wi = wo * sw + d - pw;
                        dst_row[wi] = dst_row[wi] + v;
                    }
                }
            }
        });
    }
}

fn per_sample<S: Scalar>(buf: &mut [S], chunk: usize, f: impl Fn(usize, &mut [S]) + Sync) {
    if is_deterministic() || buf.len() <= chunk {
        buf.chunks_mut(chunk).enumerate().for_each(|(n, c)| f(n, c));
    } else {
        buf.par_chunks_mut(chunk).enumerate().for_each(|(n, c)| f(n, c));
    }
}

/// Sums per-sample partial buffers in sample order.
fn reduce_partials<S: Scalar>(partials: &[S], len: usize) -> Vec<S> {
    let mut acc = vec![S::zero(); len];
    for part in partials.chunks(len) {
        for (a, &p) in acc.iter_mut().zip(part) {
            *a = *a + p;
        }
    }
    acc
}

fn kernel_dims<S: Scalar>(weight: &Tensor<S>, op: &'static str) -> Result<[usize; 5]> {
    weight.dims5(op)
}

fn check_bias<S: Scalar>(bias: Option<&Tensor<S>>, channels: usize, op: &'static str) -> Result<()> {
    if let Some(b) = bias {
        if b.rank() != 1 || b.numel() != channels {
            return Err(Error::ShapeMismatch {
                op,
                axis: "bias".into(),
                expected: channels,
                actual: b.numel(),
            });
        }
    }
    Ok(())
}

fn conv_lowering<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    geom: &ConvGeometry,
) -> Result<(Lowering, usize, usize)> {
    const OP: &str = "conv3d";
    geom.check_stride(OP)?;
    let [n, cin, t, h, w] = input.dims5(OP)?;
    let [cout, wcin, kt, kh, kw] = kernel_dims(weight, OP)?;
    if cin != wcin {
        return Err(Error::ShapeMismatch {
            op: OP,
            axis: "channel".into(),
            expected: wcin,
            actual: cin,
        });
    }
    let input_ext = [t, h, w];
    let kernel = [kt, kh, kw];
    let mut output = [0; 3];
    for i in 0..3 {
        output[i] = conv3d_output_extent(input_ext[i], kernel[i], geom.stride[i], geom.pad[i])
            .ok_or_else(|| Error::EmptyExtent {
                op: OP,
                axis: format!(
                    "{} (kernel {} exceeds padded input {})",
                    axis::name(SPATIAL_AXES[i]),
                    kernel[i],
                    input_ext[i] + geom.pad[i].0 + geom.pad[i].1
                ),
            })?;
    }
    Ok((
        Lowering {
            channels: cin,
            input: input_ext,
            kernel,
            output,
            stride: geom.stride,
            pad_before: [geom.pad[0].0, geom.pad[1].0, geom.pad[2].0],
        },
        n,
        cout,
    ))
}

fn add_bias<S: Scalar>(out: &mut [S], bias: Option<&Tensor<S>>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data().iter().cycle()) {
            chunk.iter_mut().for_each(|v| *v = *v + bv);
        }
    }
}

fn bias_grad<S: Scalar>(dout: &Tensor<S>, channels: usize) -> Tensor<S> {
    let plane = dout.numel() / (dout.shape()[0] * channels);
    let mut db = vec![S::zero(); channels];
    for (i, chunk) in dout.data().chunks(plane).enumerate() {
        let c = i % channels;
        db[c] = db[c] + chunk.iter().copied().sum::<S>();
    }
    Tensor::from_vec(&[channels], db).expect("bias gradient shape")
}

/// 3D cross-correlation of `input [N, Cin, T, H, W]` with `weight [Cout, Cin, kt, kh, kw]`.
pub fn conv3d<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: &ConvGeometry,
) -> Result<Tensor<S>> {
    let (low, n, cout) = conv_lowering(input, weight, geom)?;
    check_bias(bias, cout, "conv3d")?;
    let (rows, cols) = (low.rows(), low.cols());
    let in_len = low.input_len();
    let x = input.data();
    let wdata = weight.data();
    let mut out = vec![S::zero(); n * cout * cols];
    per_sample(&mut out, cout * cols, |i, o| {
        let mut buf = vec![S::zero(); rows * cols];
        low.im2col(&x[i * in_len..(i + 1) * in_len], &mut buf);
        S::gemm(cout, rows, cols, wdata, (rows, 1), &buf, (cols, 1), S::zero(), o, (cols, 1));
    });
    add_bias(&mut out, bias, cols);
    let [ot, oh, ow] = low.output;
    Tensor::from_vec(&[n, cout, ot, oh, ow], out)
}

/// Gradients of [`conv3d`] with respect to input (when requested), weight and bias.
pub fn conv3d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    dout: &Tensor<S>,
    geom: &ConvGeometry,
    need_input: bool,
) -> Result<ConvGrads<S>> {
    let (low, n, cout) = conv_lowering(input, weight, geom)?;
    let (rows, cols) = (low.rows(), low.cols());
    let [ot, oh, ow] = low.output;
    let expected = [n, cout, ot, oh, ow];
    if dout.shape() != expected {
        return Err(Error::InvalidShape {
            shape: dout.shape().to_vec(),
            reason: format!("conv3d backward expects output gradient {expected:?}"),
        });
    }
    let in_len = low.input_len();
    let out_len = cout * cols;
    let x = input.data();
    let dy = dout.data();
    let wdata = weight.data();

    let mut dw_parts = vec![S::zero(); n * cout * rows];
    per_sample(&mut dw_parts, cout * rows, |i, dw| {
        let mut buf = vec![S::zero(); rows * cols];
        low.im2col(&x[i * in_len..(i + 1) * in_len], &mut buf);
        let g = &dy[i * out_len..(i + 1) * out_len];
        S::gemm(cout, cols, rows, g, (cols, 1), &buf, (1, cols), S::zero(), dw, (rows, 1));
    });
    let weight_grad = Tensor::from_vec(weight.shape(), reduce_partials(&dw_parts, cout * rows))?;

    let input_grad = if need_input {
        let mut dx = vec![S::zero(); n * in_len];
        per_sample(&mut dx, in_len, |i, dxi| {
            let mut buf = vec![S::zero(); rows * cols];
            let g = &dy[i * out_len..(i + 1) * out_len];
            S::gemm(rows, cout, cols, wdata, (1, rows), g, (cols, 1), S::zero(), &mut buf, (cols, 1));
            low.col2im_add(&buf, dxi);
        });
        Some(Tensor::from_vec(input.shape(), dx)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad(dout, cout),
    })
}

fn transpose_lowering<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    geom: &ConvGeometry,
    output_pad: [usize; 3],
) -> Result<(Lowering, usize, usize)> {
    const OP: &str = "conv_transpose3d";
    geom.check_stride(OP)?;
    let [n, cin, t, h, w] = input.dims5(OP)?;
    let [wcin, cout, kt, kh, kw] = kernel_dims(weight, OP)?;
    if cin != wcin {
        return Err(Error::ShapeMismatch {
            op: OP,
            axis: "channel".into(),
            expected: wcin,
            actual: cin,
        });
    }
    let in_ext = [t, h, w];
    let kernel = [kt, kh, kw];
    let mut out_ext = [0; 3];
    for i in 0..3 {
        if output_pad[i] >= geom.stride[i] {
            return Err(Error::InvalidArgument(format!(
                "{OP}: output padding {} on {} must be smaller than stride {}",
                output_pad[i],
                axis::name(SPATIAL_AXES[i]),
                geom.stride[i]
            )));
        }
        out_ext[i] = conv_transpose3d_output_extent(
            in_ext[i],
            kernel[i],
            geom.stride[i],
            geom.pad[i],
            output_pad[i],
        )
        .ok_or_else(|| Error::EmptyExtent {
            op: OP,
            axis: axis::name(SPATIAL_AXES[i]),
        })?;
    }
    // The lowering describes the adjoint conv3d: its "input" is our output.
    Ok((
        Lowering {
            channels: cout,
            input: out_ext,
            kernel,
            output: in_ext,
            stride: geom.stride,
            pad_before: [geom.pad[0].0, geom.pad[1].0, geom.pad[2].0],
        },
        n,
        cin,
    ))
}

/// Transposed 3D convolution of `input [N, Cin, T, H, W]` with
/// `weight [Cin, Cout, kt, kh, kw]`.
pub fn conv_transpose3d<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    bias: Option<&Tensor<S>>,
    geom: &ConvGeometry,
    output_pad: [usize; 3],
) -> Result<Tensor<S>> {
    let (low, n, cin) = transpose_lowering(input, weight, geom, output_pad)?;
    let cout = low.channels;
    check_bias(bias, cout, "conv_transpose3d")?;
    let (rows, cols) = (low.rows(), low.cols());
    let out_len = low.input_len();
    let in_len = cin * cols;
    let x = input.data();
    let wdata = weight.data();
    let mut out = vec![S::zero(); n * out_len];
    per_sample(&mut out, out_len, |i, o| {
        let mut buf = vec![S::zero(); rows * cols];
        let xi = &x[i * in_len..(i + 1) * in_len];
        S::gemm(rows, cin, cols, wdata, (1, rows), xi, (cols, 1), S::zero(), &mut buf, (cols, 1));
        low.col2im_add(&buf, o);
    });
    let [yt, yh, yw] = low.input;
    add_bias(&mut out, bias, yt * yh * yw);
    Tensor::from_vec(&[n, cout, yt, yh, yw], out)
}

/// Gradients of [`conv_transpose3d`].
pub fn conv_transpose3d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &Tensor<S>,
    dout: &Tensor<S>,
    geom: &ConvGeometry,
    output_pad: [usize; 3],
    need_input: bool,
) -> Result<ConvGrads<S>> {
    let (low, n, cin) = transpose_lowering(input, weight, geom, output_pad)?;
    let cout = low.channels;
    let (rows, cols) = (low.rows(), low.cols());
    let [yt, yh, yw] = low.input;
    let expected = [n, cout, yt, yh, yw];
    if dout.shape() != expected {
        return Err(Error::InvalidShape {
            shape: dout.shape().to_vec(),
            reason: format!("conv_transpose3d backward expects output gradient {expected:?}"),
        });
    }
    let out_len = low.input_len();
    let in_len = cin * cols;
    let x = input.data();
    let dy = dout.data();
    let wdata = weight.data();

    let mut dw_parts = vec![S::zero(); n * cin * rows];
    per_sample(&mut dw_parts, cin * rows, |i, dw| {
        let mut buf = vec![S::zero(); rows * cols];
        low.im2col(&dy[i * out_len..(i + 1) * out_len], &mut buf);
        let xi = &x[i * in_len..(i + 1) * in_len];
        S::gemm(cin, cols, rows, xi, (cols, 1), &buf, (1, cols), S::zero(), dw, (rows, 1));
    });
    let weight_grad = Tensor::from_vec(weight.shape(), reduce_partials(&dw_parts, cin * rows))?;

    let input_grad = if need_input {
        let mut dx = vec![S::zero(); n * in_len];
        per_sample(&mut dx, in_len, |i, dxi| {
            let mut buf = vec![S::zero(); rows * cols];
            low.im2col(&dy[i * out_len..(i + 1) * out_len], &mut buf);
            S::gemm(cin, rows, cols, wdata, (rows, 1), &buf, (cols, 1), S::zero(), dxi, (cols, 1));
        });
        Some(Tensor::from_vec(input.shape(), dx)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad(dout, cout),
    })
}
