//! Reference implementations shared by the integration tests. These are
//! deliberately naive and never call into the crate's kernels.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcast::{Scalar, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<S: Scalar>(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor<S> {
    Tensor::from_fn(shape, |_| S::from_f64_lossy(rng.gen_range(-bound..bound))).unwrap()
}

fn at(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &e)| acc * e + i)
}

/// Direct definition of 3D cross-correlation with zero padding.
pub fn naive_conv3d(
    x: &[f64],
    xs: [usize; 5],
    w: &[f64],
    ws: [usize; 5],
    bias: &[f64],
    stride: [usize; 3],
    pad: [(usize, usize); 3],
) -> (Vec<f64>, [usize; 5]) {
    let [n, cin, t, h, wd] = xs;
    let [cout, _, kt, kh, kw] = ws;
    let out_ext = |i: usize, k: usize, a: usize| (i + pad[a].0 + pad[a].1 - k) / stride[a] + 1;
    let (ot, oh, ow) = (out_ext(t, kt, 0), out_ext(h, kh, 1), out_ext(wd, kw, 2));
    let os = [n, cout, ot, oh, ow];
    let mut out = vec![0.0; os.iter().product()];
    for b in 0..n {
        for co in 0..cout {
            for to in 0..ot {
                for ho in 0..oh {
                    for wo in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..cin {
                            for a in 0..kt {
                                for c in 0..kh {
                                    for d in 0..kw {
                                        let ti = (to * stride[0] + a) as isize - pad[0].0 as isize;
                                        let hi = (ho * stride[1] + c) as isize - pad[1].0 as isize;
                                        let wi = (wo * stride[2] + d) as isize - pad[2].0 as isize;
                                        if ti < 0 || hi < 0 || wi < 0 {
                                            continue;
                                        }
                                        let (ti, hi, wi) = (ti as usize, hi as usize, wi as usize);
                                        if ti >= t || hi >= h || wi >= wd {
                                            continue;
                                        }
                                        acc += w[at(&ws, &[co, ci, a, c, d])]
                                            * x[at(&xs, &[b, ci, ti, hi, wi])];
                                    }
                                }
                            }
                        }
                        out[at(&os, &[b, co, to, ho, wo])] = acc;
                    }
                }
            }
        }
    }
    (out, os)
}

/// Transposed convolution via zero-stuffing the input and running a stride-1
/// cross-correlation with spatially flipped, channel-swapped kernels.
///
/// Requires `pad.before <= k - 1` and `pad.after <= k - 1 + output_pad` per axis.
#[allow(clippy::too_many_arguments)]
pub fn zero_stuffed_conv_transpose3d(
    x: &[f64],
    xs: [usize; 5],
    w: &[f64],
    ws: [usize; 5],
    bias: &[f64],
    stride: [usize; 3],
    pad: [(usize, usize); 3],
    output_pad: [usize; 3],
) -> (Vec<f64>, [usize; 5]) {
    let [n, cin, t, h, wd] = xs;
    let [_, cout, kt, kh, kw] = ws;
    let ext = [t, h, wd];
    let k = [kt, kh, kw];
    // stuffed and padded input
    let mut sext = [0usize; 3];
    let mut lead = [0usize; 3];
    for a in 0..3 {
        lead[a] = k[a] - 1 - pad[a].0;
        let trail = k[a] - 1 + output_pad[a] - pad[a].1;
        sext[a] = lead[a] + (ext[a] - 1) * stride[a] + 1 + trail;
    }
    let ss = [n, cin, sext[0], sext[1], sext[2]];
    let mut stuffed = vec![0.0; ss.iter().product()];
    for b in 0..n {
        for c in 0..cin {
            for i in 0..t {
                for j in 0..h {
                    for l in 0..wd {
                        let dst = [
                            b,
                            c,
                            lead[0] + i * stride[0],
                            lead[1] + j * stride[1],
                            lead[2] + l * stride[2],
                        ];
                        stuffed[at(&ss, &dst)] = x[at(&xs, &[b, c, i, j, l])];
                    }
                }
            }
        }
    }
    let fs = [cout, cin, kt, kh, kw];
    let mut flipped = vec![0.0; w.len()];
    for ci in 0..cin {
        for co in 0..cout {
            for a in 0..kt {
                for c in 0..kh {
                    for d in 0..kw {
                        flipped[at(&fs, &[co, ci, kt - 1 - a, kh - 1 - c, kw - 1 - d])] =
                            w[at(&ws, &[ci, co, a, c, d])];
                    }
                }
            }
        }
    }
    naive_conv3d(&stuffed, ss, &flipped, fs, bias, [1; 3], [(0, 0); 3])
}

/// Scatter form of transposed convolution, straight from its definition.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv_transpose3d(
    x: &[f64],
    xs: [usize; 5],
    w: &[f64],
    ws: [usize; 5],
    bias: &[f64],
    stride: [usize; 3],
    pad: [(usize, usize); 3],
    output_pad: [usize; 3],
) -> (Vec<f64>, [usize; 5]) {
    let [n, cin, t, h, wd] = xs;
    let [_, cout, kt, kh, kw] = ws;
    let ext = [t, h, wd];
    let k = [kt, kh, kw];
    let mut oe = [0usize; 3];
    for a in 0..3 {
        oe[a] = (ext[a] - 1) * stride[a] + k[a] + output_pad[a] - pad[a].0 - pad[a].1;
    }
    let os = [n, cout, oe[0], oe[1], oe[2]];
    let mut out = vec![0.0; os.iter().product()];
    for b in 0..n {
        for co in 0..cout {
            for i in 0..oe[0] {
                for j in 0..oe[1] {
                    for l in 0..oe[2] {
                        out[at(&os, &[b, co, i, j, l])] = bias[co];
                    }
                }
            }
        }
        for ci in 0..cin {
            for i in 0..t {
                for j in 0..h {
                    for l in 0..wd {
                        let xv = x[at(&xs, &[b, ci, i, j, l])];
                        for co in 0..cout {
                            for a in 0..kt {
                                for c in 0..kh {
                                    for d in 0..kw {
                                        let oi = (i * stride[0] + a) as isize - pad[0].0 as isize;
                                        let oj = (j * stride[1] + c) as isize - pad[1].0 as isize;
                                        let ol = (l * stride[2] + d) as isize - pad[2].0 as isize;
                                        if oi < 0 || oj < 0 || ol < 0 {
                                            continue;
                                        }
                                        let (oi, oj, ol) = (oi as usize, oj as usize, ol as usize);
                                        if oi >= oe[0] || oj >= oe[1] || ol >= oe[2] {
                                            continue;
                                        }
                                        out[at(&os, &[b, co, oi, oj, ol])] +=
                                            w[at(&ws, &[ci, co, a, c, d])] * xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (out, os)
}

pub fn to_f64<S: Scalar>(t: &Tensor<S>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64_lossy()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Central finite-difference derivative of `f` at `x[i]`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Runs one bare temporal layer (no norm, no activation) of `strategy` with
/// the given weight and bias, including the strategy's time reversals.
pub fn temporal_layer(
    strategy: &dyn stcast::model::TemporalStrategy,
    weight: &Tensor<f64>,
    bias: &Tensor<f64>,
    x: &Tensor<f64>,
) -> Tensor<f64> {
    use stcast::layers::{init_conv, Forward, Mode, ParamStore};
    use stcast::tensor::axis;
    let [cout, cin, t, _, _] = <[usize; 5]>::try_from(weight.shape()).unwrap();
    let mut store = ParamStore::new();
    let conv = init_conv(&mut store, "t", strategy.layer(cin, cout, t), &mut rng(0)).unwrap();
    *store.value_mut(conv.weight) = weight.clone();
    *store.value_mut(conv.bias) = bias.clone();
    let mut f = Forward::new(Mode::Eval);
    let mut h = f.input(x.clone());
    if strategy.reverses_time() {
        h = f.tape.reverse(h, axis::TIME).unwrap();
    }
    h = conv.forward(&mut f, &store, h).unwrap();
    if strategy.reverses_time() {
        h = f.tape.reverse(h, axis::TIME).unwrap();
    }
    f.tape.value(h).clone()
}

pub struct Case {
    pub xs: [usize; 5],
    pub ws: [usize; 5],
    pub stride: [usize; 3],
    pub pad: [(usize, usize); 3],
    pub output_pad: [usize; 3],
}

pub fn random_conv_case(rng: &mut impl Rng) -> Case {
    loop {
        let n = rng.gen_range(1..=2);
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=3);
        let ext: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=6)).collect();
        let k: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=3)).collect();
        let stride = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let pad = [
            (rng.gen_range(0..=2), rng.gen_range(0..=2)),
            (rng.gen_range(0..=2), rng.gen_range(0..=2)),
            (rng.gen_range(0..=2), rng.gen_range(0..=2)),
        ];
        if (0..3).all(|a| ext[a] + pad[a].0 + pad[a].1 >= k[a]) {
            return Case {
                xs: [n, cin, ext[0], ext[1], ext[2]],
                ws: [cout, cin, k[0], k[1], k[2]],
                stride,
                pad,
                output_pad: [0; 3],
            };
        }
    }
}

pub fn random_transpose_case(rng: &mut impl Rng) -> Case {
    loop {
        let n = rng.gen_range(1..=2);
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=3);
        let ext: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=4)).collect();
        let k: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=3)).collect();
        let stride = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let mut pad = [(0, 0); 3];
        let mut output_pad = [0; 3];
        let mut ok = true;
        for a in 0..3 {
            output_pad[a] = rng.gen_range(0..stride[a]);
            pad[a] = (rng.gen_range(0..k[a]), rng.gen_range(0..k[a]));
            let grown = (ext[a] - 1) * stride[a] + k[a] + output_pad[a];
            ok &= grown > pad[a].0 + pad[a].1;
        }
        if ok {
            return Case {
                xs: [n, cin, ext[0], ext[1], ext[2]],
                ws: [cin, cout, k[0], k[1], k[2]],
                stride,
                pad,
                output_pad,
            };
        }
    }
}

/// Largest deviation of `conv3d` from the nested-loop definition over
/// `cases` random configurations.
pub fn conv3d_oracle_deviation<S: Scalar>(seed: u64, cases: usize) -> f64 {
    use stcast::tensor::{conv3d, ConvGeometry};
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for case_id in 0..cases {
        let c = random_conv_case(&mut r);
        let x = random_tensor::<S>(&mut r, &c.xs, 1.0);
        let w = random_tensor::<S>(&mut r, &c.ws, 1.0);
        let b = random_tensor::<S>(&mut r, &[c.ws[0]], 1.0);
        let geom = ConvGeometry::with_pad(c.pad).with_stride(c.stride);
        let y = conv3d(&x, &w, Some(&b), &geom).unwrap();
        let (expect, es) = naive_conv3d(&to_f64(&x), c.xs, &to_f64(&w), c.ws, &to_f64(&b), c.stride, c.pad);
        assert_eq!(y.shape(), &es, "case {case_id}: shape");
        worst = worst.max(max_abs_diff(&to_f64(&y), &expect));
    }
    worst
}

/// Largest deviation of `conv_transpose3d` from the zero-stuffing
/// definition; also checks that definition against the scatter form.
pub fn conv_transpose3d_oracle_deviation<S: Scalar>(seed: u64, cases: usize) -> f64 {
    use stcast::tensor::{conv_transpose3d, ConvGeometry};
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for case_id in 0..cases {
        let c = random_transpose_case(&mut r);
        let x = random_tensor::<S>(&mut r, &c.xs, 1.0);
        let w = random_tensor::<S>(&mut r, &c.ws, 1.0);
        let b = random_tensor::<S>(&mut r, &[c.ws[1]], 1.0);
        let geom = ConvGeometry::with_pad(c.pad).with_stride(c.stride);
        let y = conv_transpose3d(&x, &w, Some(&b), &geom, c.output_pad).unwrap();
        let args = (&to_f64(&x), c.xs, &to_f64(&w), c.ws, &to_f64(&b));
        let (stuffed, ss) =
            zero_stuffed_conv_transpose3d(args.0, args.1, args.2, args.3, args.4, c.stride, c.pad, c.output_pad);
        let (scatter, _) =
            naive_conv_transpose3d(args.0, args.1, args.2, args.3, args.4, c.stride, c.pad, c.output_pad);
        assert_eq!(y.shape(), &ss, "case {case_id}: shape");
        assert!(max_abs_diff(&stuffed, &scatter) < 1e-12, "case {case_id}: oracles disagree");
        worst = worst.max(max_abs_diff(&to_f64(&y), &stuffed));
    }
    worst
}
