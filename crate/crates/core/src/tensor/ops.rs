use super::{axis_label, PadSpec, Scalar, Tensor};
use crate::error::{Error, Result};

/// Copies the hyper-rectangle `extent` at `src_start` in `src` to `dst_start` in `dst`.
fn copy_region<S: Scalar>(
    src: &Tensor<S>,
    src_start: &[usize],
    dst: &mut Tensor<S>,
    dst_start: &[usize],
    extent: &[usize],
) {
    let rank = extent.len();
    let src_strides = src.strides();
    let dst_strides = dst.strides();
    let row = extent[rank - 1];
    let outer: usize = extent[..rank - 1].iter().product();
    let mut idx = vec![0usize; rank - 1];
    for _ in 0..outer {
        let mut so = src_start[rank - 1];
        let mut d_off = dst_start[rank - 1];
        for ax in 0..rank - 1 {
            so += (src_start[ax] + idx[ax]) * src_strides[ax];
            d_off += (dst_start[ax] + idx[ax]) * dst_strides[ax];
        }
        let (s_data, d_data) = (src.data(), &mut dst.data_mut()[d_off..d_off + row]);
        d_data.copy_from_slice(&s_data[so..so + row]);
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            if idx[ax] < extent[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

fn check_rank(spec: &PadSpec, rank: usize, op: &'static str) -> Result<()> {
    if spec.rank() != rank {
        return Err(Error::RankMismatch {
            op,
            expected: rank,
            actual: spec.rank(),
        });
    }
    Ok(())
}

/// Inserts zeros before/after each axis.
pub fn pad<S: Scalar>(input: &Tensor<S>, spec: &PadSpec) -> Result<Tensor<S>> {
    check_rank(spec, input.rank(), "pad")?;
    let shape: Vec<usize> = input
        .shape()
        .iter()
        .zip(spec.pairs())
        .map(|(&e, &(b, a))| e + b + a)
        .collect();
    let mut out = Tensor::zeros(&shape);
    let start: Vec<usize> = spec.pairs().iter().map(|&(b, _)| b).collect();
    copy_region(input, &vec![0; input.rank()], &mut out, &start, input.shape());
    Ok(out)
}

/// Removes `before`/`after` elements from each axis.
pub fn crop<S: Scalar>(input: &Tensor<S>, spec: &PadSpec) -> Result<Tensor<S>> {
    check_rank(spec, input.rank(), "crop")?;
    let mut shape = Vec::with_capacity(input.rank());
    for (ax, (&e, &(b, a))) in input.shape().iter().zip(spec.pairs()).enumerate() {
        if b + a >= e {
            return Err(Error::EmptyExtent {
                op: "crop",
                axis: format!("{} (extent {e}, crop {b}+{a})", axis_label(input.rank(), ax)),
            });
        }
        shape.push(e - b - a);
    }
    let mut out = Tensor::zeros(&shape);
    let start: Vec<usize> = spec.pairs().iter().map(|&(b, _)| b).collect();
    copy_region(input, &start, &mut out, &vec![0; input.rank()], &shape);
    Ok(out)
}

/// Flips element order along `axis`.
pub fn reverse_axis<S: Scalar>(input: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    if axis >= input.rank() {
        return Err(Error::InvalidArgument(format!(
            "reverse: axis {axis} out of range for rank {}",
            input.rank()
        )));
    }
    let shape = input.shape();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let src = input.data();
    let mut out = Vec::with_capacity(src.len());
    for o in 0..outer {
        let base = o * len * inner;
        for i in (0..len).rev() {
            out.extend_from_slice(&src[base + i * inner..base + (i + 1) * inner]);
        }
    }
    Tensor::from_vec(shape, out)
}

/// Concatenates `a` then `b` along `axis`; all other extents must agree.
pub fn concat<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    if a.rank() != b.rank() {
        return Err(Error::RankMismatch {
            op: "concat",
            expected: a.rank(),
            actual: b.rank(),
        });
    }
    if axis >= a.rank() {
        return Err(Error::InvalidArgument(format!("concat: axis {axis} out of range")));
    }
    for (ax, (&ea, &eb)) in a.shape().iter().zip(b.shape()).enumerate() {
        if ax != axis && ea != eb {
            return Err(Error::ShapeMismatch {
                op: "concat",
                axis: axis_label(a.rank(), ax),
                expected: ea,
                actual: eb,
            });
        }
    }
    let mut shape = a.shape().to_vec();
    shape[axis] += b.shape()[axis];
    let mut out = Tensor::zeros(&shape);
    let zero = vec![0; a.rank()];
    copy_region(a, &zero, &mut out, &zero, a.shape());
    let mut start = zero.clone();
    start[axis] = a.shape()[axis];
    copy_region(b, &zero, &mut out, &start, b.shape());
    Ok(out)
}

/// Splits `input` along `axis` at `at`, the inverse of [`concat`].
pub fn split<S: Scalar>(input: &Tensor<S>, axis: usize, at: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    let len = input.shape()[axis];
    if at == 0 || at >= len {
        return Err(Error::InvalidArgument(format!(
            "split: position {at} must lie strictly inside extent {len}"
        )));
    }
    let first = crop(input, &PadSpec::on_axis(input.rank(), axis, 0, len - at))?;
    let second = crop(input, &PadSpec::on_axis(input.rank(), axis, at, 0))?;
    Ok((first, second))
}

pub fn leaky_relu<S: Scalar>(input: &Tensor<S>, slope: S) -> Tensor<S> {
    input.map(|x| if x >= S::zero() { x } else { slope * x })
}

/// Subgradient at zero follows the positive branch.
pub fn leaky_relu_backward<S: Scalar>(input: &Tensor<S>, dout: &Tensor<S>, slope: S) -> Tensor<S> {
    input
        .zip_map(dout, "leaky_relu_backward", |x, g| {
            if x >= S::zero() {
                g
            } else {
                slope * g
            }
        })
        .expect("gradient shape equals input shape")
}

/// Values saved by [`batch_norm_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormSaved<S> {
    pub normalized: Tensor<S>,
    pub inv_std: Vec<S>,
    pub batch_statistics: bool,
}

/// Per-channel batch mean and unbiased variance, used to update running statistics.
#[derive(Clone, Debug)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var_unbiased: Vec<S>,
}

fn channel_planes<S: Scalar>(input: &Tensor<S>) -> Result<(usize, usize, usize)> {
    if input.rank() < 2 {
        return Err(Error::RankMismatch {
            op: "batch_norm",
            expected: 2,
            actual: input.rank(),
        });
    }
    let n = input.shape()[0];
    let c = input.shape()[1];
    Ok((n, c, input.numel() / (n * c)))
}

/// Output, values saved for the backward pass, and batch statistics when
/// they were computed.
pub type BatchNormOutput<S> = (Tensor<S>, BatchNormSaved<S>, Option<BatchStats<S>>);

/// Normalizes each channel (axis 1) over all other axes.
///
/// With `running = None` batch statistics are used and returned; otherwise the
/// supplied `(mean, var)` are used as-is.
pub fn batch_norm_forward<S: Scalar>(
    input: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    running: Option<(&[S], &[S])>,
    eps: S,
) -> Result<BatchNormOutput<S>> {
    let (n, c, plane) = channel_planes(input)?;
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        if t.numel() != c {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                axis: name.into(),
                expected: c,
                actual: t.numel(),
            });
        }
    }
    let x = input.data();
    let count = n * plane;
    let count_s = S::from_usize(count).expect("count");
    let (means, vars, stats) = match running {
        Some((m, v)) => {
            if m.len() != c || v.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "batch_norm",
                    axis: "running statistics".into(),
                    expected: c,
                    actual: m.len(),
                });
            }
            (m.to_vec(), v.to_vec(), None)
        }
        None => {
            let mut means = vec![S::zero(); c];
            let mut vars = vec![S::zero(); c];
            for ch in 0..c {
                let mut sum = S::zero();
                for i in 0..n {
                    let off = (i * c + ch) * plane;
                    sum = sum + x[off..off + plane].iter().copied().sum::<S>();
                }
                let mean = sum / count_s;
                let mut sq = S::zero();
                for i in 0..n {
                    let off = (i * c + ch) * plane;
                    sq = sq
                        + x[off..off + plane]
                            .iter()
                            .map(|&v| (v - mean) * (v - mean))
                            .sum::<S>();
                }
                means[ch] = mean;
                vars[ch] = sq / count_s;
            }
            let unbiased = if count > 1 {
                let scale = count_s / S::from_usize(count - 1).expect("count");
                vars.iter().map(|&v| v * scale).collect()
            } else {
                vars.clone()
            };
            let stats = BatchStats {
                mean: means.clone(),
                var_unbiased: unbiased,
            };
            (means, vars, Some(stats))
        }
    };
    let inv_std: Vec<S> = vars.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
    let mut normalized = vec![S::zero(); x.len()];
    let mut out = vec![S::zero(); x.len()];
    let (g, b) = (gamma.data(), beta.data());
    for (k, (xs, (ns, os))) in x
        .chunks(plane)
        .zip(normalized.chunks_mut(plane).zip(out.chunks_mut(plane)))
        .enumerate()
    {
        let ch = k % c;
        for ((&xv, nv), ov) in xs.iter().zip(ns.iter_mut()).zip(os.iter_mut()) {
            *nv = (xv - means[ch]) * inv_std[ch];
            *ov = g[ch] * *nv + b[ch];
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), out)?,
        BatchNormSaved {
            normalized: Tensor::from_vec(input.shape(), normalized)?,
            inv_std,
            batch_statistics: running.is_none(),
        },
        stats,
    ))
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn batch_norm_backward<S: Scalar>(
    dout: &Tensor<S>,
    gamma: &Tensor<S>,
    saved: &BatchNormSaved<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, c, plane) = channel_planes(dout)?;
    let dy = dout.data();
    let xhat = saved.normalized.data();
    let mut dgamma = vec![S::zero(); c];
    let mut dbeta = vec![S::zero(); c];
    for (k, (gs, hs)) in dy.chunks(plane).zip(xhat.chunks(plane)).enumerate() {
        let ch = k % c;
        dbeta[ch] = dbeta[ch] + gs.iter().copied().sum::<S>();
        dgamma[ch] = dgamma[ch] + gs.iter().zip(hs).map(|(&g, &h)| g * h).sum::<S>();
    }
    let g = gamma.data();
    let count = S::from_usize(n * plane).expect("count");
    let mut dx = vec![S::zero(); dy.len()];
    for (k, ((gs, hs), ds)) in dy
        .chunks(plane)
        .zip(xhat.chunks(plane))
        .zip(dx.chunks_mut(plane))
        .enumerate()
    {
        let ch = k % c;
        let scale = g[ch] * saved.inv_std[ch];
        if saved.batch_statistics {
            let mean_dy = dbeta[ch] / count;
            let mean_dyh = dgamma[ch] / count;
            for ((&gv, &hv), dv) in gs.iter().zip(hs).zip(ds.iter_mut()) {
                *dv = scale * (gv - mean_dy - hv * mean_dyh);
            }
        } else {
            for (&gv, dv) in gs.iter().zip(ds.iter_mut()) {
                *dv = scale * gv;
            }
        }
    }
    Ok((
        Tensor::from_vec(dout.shape(), dx)?,
        Tensor::from_vec(gamma.shape(), dgamma)?,
        Tensor::from_vec(gamma.shape(), dbeta)?,
    ))
}
