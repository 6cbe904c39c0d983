mod common;

use common::*;
use stcast::tensor::{conv3d, conv_transpose3d, ConvGeometry};
use stcast::{Scalar, Tensor};

fn check_conv<S: Scalar>(seed: u64, tol: f64) {
    let diff = conv3d_oracle_deviation::<S>(seed, 200);
    assert!(diff <= tol, "conv3d diff {diff:e} > {tol:e}");
}

fn check_transpose<S: Scalar>(seed: u64, tol: f64) {
    let diff = conv_transpose3d_oracle_deviation::<S>(seed, 200);
    assert!(diff <= tol, "conv_transpose3d diff {diff:e} > {tol:e}");
}

#[test]
fn conv3d_matches_naive_loops_single() {
    check_conv::<f32>(11, 1e-5);
}

#[test]
fn conv3d_matches_naive_loops_double() {
    check_conv::<f64>(12, 1e-10);
}

#[test]
fn conv_transpose3d_matches_zero_stuffing_single() {
    check_transpose::<f32>(13, 1e-5);
}

#[test]
fn conv_transpose3d_matches_zero_stuffing_double() {
    check_transpose::<f64>(14, 1e-10);
}

#[test]
fn specific_two_channel_case() {
    // 1×2×4×5×5 input with a 3×2×2×3×3 kernel
    let mut r = rng(5);
    let xs = [1, 2, 4, 5, 5];
    let ws = [3, 2, 2, 3, 3];
    let x = random_tensor::<f32>(&mut r, &xs, 1.0);
    let w = random_tensor::<f32>(&mut r, &ws, 1.0);
    let b = random_tensor::<f32>(&mut r, &[3], 1.0);
    let y = conv3d(&x, &w, Some(&b), &ConvGeometry::default()).unwrap();
    let (expect, es) = naive_conv3d(&to_f64(&x), xs, &to_f64(&w), ws, &to_f64(&b), [1; 3], [(0, 0); 3]);
    assert_eq!(y.shape(), &es);
    assert!(max_abs_diff(&to_f64(&y), &expect) <= 1e-5);
}

#[test]
fn transpose_is_input_gradient_of_conv() {
    // <conv(x), y> == <x, conv_transpose(y)> for the same weights
    let mut r = rng(21);
    let xs = [2, 3, 5, 4, 4];
    let ws = [2, 3, 3, 2, 3];
    let geom = ConvGeometry::with_pad([(1, 0), (1, 1), (0, 2)]).with_stride([2, 1, 2]);
    let x = random_tensor::<f64>(&mut r, &xs, 1.0);
    let w = random_tensor::<f64>(&mut r, &ws, 1.0);
    let cx = conv3d(&x, &w, None, &geom).unwrap();
    let y = random_tensor::<f64>(&mut r, cx.shape(), 1.0);
    // output_pad chosen so the transpose lands back on x's extents
    let mut op = [0; 3];
    for a in 0..3 {
        let ext = xs[2 + a];
        let k = ws[2 + a];
        let back = (cx.shape()[2 + a] - 1) * geom.stride[a] + k - geom.pad[a].0 - geom.pad[a].1;
        op[a] = ext - back;
    }
    let ty = conv_transpose3d(&y, &w, None, &geom, op).unwrap();
    assert_eq!(ty.shape(), x.shape());
    let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    let _ = Tensor::<f64>::zeros(&[1]);
}
