mod common;

use common::*;
use stcast::layers::Mode;
use stcast::model::{
    filter_schedule, generator_layers, Causal, Model, ModelConfig, Reversed, TemporalStrategy, ABLATION_TAGS,
};
use stcast::probe::{probe_causality, ProbeSettings};
use stcast::tensor::axis;
use stcast::Tensor;

fn tiny(variant: &str, t_in: usize, t_out: usize, h: usize, w: usize) -> ModelConfig {
    ModelConfig {
        variant: variant.into(),
        layers: 1,
        temporal_kernel: 3,
        spatial_kernel: 3,
        filters: 2,
        input_len: t_in,
        output_len: t_out,
        height: h,
        width: w,
        ..ModelConfig::default()
    }
}

fn calibrated<S: stcast::Scalar>(cfg: &ModelConfig, seed: u64) -> Model<S> {
    let mut m = Model::build(cfg, seed).unwrap();
    let x = random_tensor(&mut rng(seed ^ 0xabc), &m.input_shape(2), 1.0);
    m.calibrate(&x).unwrap();
    m
}

#[test]
fn output_shape_sweep() {
    for t in [2, 5] {
        for t_out in 1..=4 * t {
            for (h, w) in [(4, 4), (8, 8), (4, 8)] {
                let cfg = tiny("reversed", t, t_out, h, w);
                let mut m = calibrated::<f32>(&cfg, 1);
                let x = random_tensor(&mut rng(2), &m.input_shape(2), 1.0);
                let y = m.predict(&x).unwrap();
                assert_eq!(y.shape(), &[2, 1, t_out, h, w], "T={t} T''={t_out}");
            }
        }
    }
}

#[test]
fn generator_extent_sweep() {
    for t_out in 6..=40 {
        let (gt, gc) = generator_layers(5, t_out).unwrap();
        assert_eq!(gt, (t_out - 5).div_ceil(10));
        assert_eq!(gc, t_out / 5);
        assert!(5 << gt >= t_out - 5, "doubling must cover the extra frames");
        let cfg = tiny("causal", 5, t_out, 4, 4);
        let mut m = calibrated::<f32>(&cfg, 3);
        assert_eq!(m.block_convs("generator").len(), gt + gc);
        let trace = m.trace(&Tensor::zeros(&m.input_shape(1)), Mode::Eval).unwrap();
        let gen = trace.iter().find(|(n, _)| n == "generator").unwrap();
        assert_eq!(gen.1.shape()[axis::TIME], t_out);
    }
}

#[test]
fn filter_schedule_on_built_models() {
    let cfg = ModelConfig {
        layers: 3,
        filters: 4,
        ..tiny("reversed", 5, 5, 4, 4)
    };
    let m = Model::<f32>::build(&cfg, 0).unwrap();
    for block in ["temporal", "spatial"] {
        let outs: Vec<usize> = m.block_convs(block).iter().map(|c| c.spec.out_channels).collect();
        assert_eq!(outs, vec![8, 16, 4]);
    }
    let flat = ModelConfig {
        filter_growth: false,
        ..cfg.clone()
    };
    let m = Model::<f32>::build(&flat, 0).unwrap();
    let outs: Vec<usize> = m.block_convs("temporal").iter().map(|c| c.spec.out_channels).collect();
    assert_eq!(outs, filter_schedule(4, 3, false));
    assert_eq!(outs, vec![4, 4, 4]);
}

#[test]
fn version_four_parameter_count() {
    let cfg = ModelConfig {
        variant: "reversed".into(),
        layers: 3,
        temporal_kernel: 5,
        spatial_kernel: 5,
        filters: 32,
        input_len: 5,
        output_len: 5,
        height: 8,
        width: 8,
        ..ModelConfig::default()
    };
    let m = Model::<f32>::build(&cfg, 0).unwrap();
    // Cout·Cin·k + Cout per conv, 2·Cout per batch norm, by hand.
    let temporal = (64 * 5 + 64 + 128) + (128 * 64 * 5 + 128 + 256) + (32 * 128 * 5 + 32 + 64);
    let spatial = (64 * 32 * 25 + 64 + 128) + (128 * 64 * 25 + 128 + 256) + (32 * 128 * 25 + 32 + 64);
    let projection = 32 + 1;
    assert_eq!(temporal, 62_432);
    assert_eq!(spatial, 359_072);
    assert_eq!(m.parameter_count(), temporal + spatial + projection);
    assert_eq!(m.block_names(), vec!["temporal", "spatial", "projection"]);
    let causal = Model::<f32>::build(&ModelConfig { variant: "causal".into(), ..cfg }, 0).unwrap();
    assert_eq!(causal.parameter_count(), m.parameter_count());
}

#[test]
fn inverted_reorders_the_same_layers() {
    // With C = F the two orders have identical layers.
    let cfg = ModelConfig {
        layers: 2,
        filters: 3,
        channels: 3,
        temporal_kernel: 3,
        spatial_kernel: 5,
        ..tiny("reversed", 5, 5, 6, 6)
    };
    let plain = Model::<f32>::build(&cfg, 0).unwrap();
    let inv = Model::<f32>::build(&ModelConfig { variant: "inverted".into(), ..cfg.clone() }, 0).unwrap();
    assert_eq!(plain.parameter_count(), inv.parameter_count());
    assert_eq!(inv.block_names(), vec!["spatial", "temporal", "projection"]);

    // Otherwise only the first layer of each block changes: the spatial one
    // reads C instead of F channels and the temporal one F instead of C, a
    // difference of (C − F)·g·(d² − t) with g the first layer's width.
    let cfg = ModelConfig { channels: 1, ..cfg };
    let plain = Model::<f32>::build(&cfg, 0).unwrap();
    let inv = Model::<f32>::build(&ModelConfig { variant: "inverted".into(), ..cfg }, 0).unwrap();
    let g = 6i64;
    let expected = (1 - 3) * g * (25 - 3);
    assert_eq!(inv.parameter_count() as i64 - plain.parameter_count() as i64, expected);
}

#[test]
fn ablation_layouts() {
    let base = tiny("reversed", 5, 15, 6, 6);
    let blocks = |tag: &str| {
        let m = Model::<f32>::build(&ModelConfig { variant: tag.into(), ..base.clone() }, 0).unwrap();
        m.block_names().iter().map(|s| s.to_string()).collect::<Vec<_>>()
    };
    assert_eq!(blocks("no-temporal"), ["spatial", "generator", "projection"]);
    assert_eq!(blocks("std-3dcnn"), ["conv3d", "generator", "projection"]);
    assert_eq!(blocks("encoder-decoder"), ["encoder", "decoder", "generator", "projection"]);
    for tag in ABLATION_TAGS {
        let mut m = calibrated::<f32>(&ModelConfig { variant: tag.into(), ..base.clone() }, 4);
        let y = m.predict(&Tensor::zeros(&m.input_shape(1))).unwrap();
        assert_eq!(y.shape(), &[1, 1, 15, 6, 6], "{tag}");
    }
    let m = Model::<f32>::build(&ModelConfig { variant: "no-filter-increase".into(), layers: 2, ..base.clone() }, 0)
        .unwrap();
    assert!(m.block_convs("temporal").iter().all(|c| c.spec.out_channels == 2));
    let m = Model::<f32>::build(&ModelConfig { variant: "two-plus-one-d".into(), ..base.clone() }, 0).unwrap();
    let kernels: Vec<[usize; 3]> = m.block_convs("conv2plus1d").iter().map(|c| c.spec.kernel).collect();
    assert_eq!(kernels, vec![[1, 3, 3], [3, 1, 1]]);
}

#[test]
fn zero_projection_predicts_zero() {
    let mut m = calibrated::<f64>(&tiny("causal", 5, 15, 4, 4), 5);
    let proj = m.block_convs("projection")[0].weight;
    m.store.value_mut(proj).fill(0.0);
    let y = m.predict(&random_tensor(&mut rng(9), &m.input_shape(2), 1.0)).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn identity_tap_passes_input_through() {
    let mut r = rng(11);
    let x: Tensor<f64> = random_tensor(&mut r, &[2, 1, 5, 3, 3], 1.0);
    let w = Tensor::from_vec(&[1, 1, 3, 1, 1], vec![0.0, 0.0, 1.0]).unwrap();
    let b = Tensor::zeros(&[1]);
    for strategy in [&Causal as &dyn TemporalStrategy, &Reversed] {
        let y = temporal_layer(strategy, &w, &b, &x);
        assert_eq!(y.data(), x.data(), "{}", strategy.name());
    }
}

#[test]
fn causal_layer_matches_receptive_field_sum() {
    let mut r = rng(12);
    let (cin, cout, t, len) = (2, 3, 3, 5);
    let x: Tensor<f64> = random_tensor(&mut r, &[1, cin, len, 2, 2], 1.0);
    let w: Tensor<f64> = random_tensor(&mut r, &[cout, cin, t, 1, 1], 1.0);
    let b: Tensor<f64> = random_tensor(&mut r, &[cout], 1.0);
    let y = temporal_layer(&Causal, &w, &b, &x);
    assert_eq!(y.shape(), &[1, cout, len, 2, 2]);
    for co in 0..cout {
        for tau in 0..len {
            for (h, ww) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let mut acc = b.get(&[co]);
                for ci in 0..cin {
                    for j in 0..t {
                        // tap j weighs lag t−1−j
                        let lag = t - 1 - j;
                        if tau >= lag {
                            acc += w.get(&[co, ci, j, 0, 0]) * x.get(&[0, ci, tau - lag, h, ww]);
                        }
                    }
                }
                assert!((acc - y.get(&[0, co, tau, h, ww])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn strategies_agree_with_shared_weights() {
    let mut r = rng(13);
    for case in 0..100 {
        let t = 1 + case % 5;
        let len = 1 + case % 7;
        let x: Tensor<f64> = random_tensor(&mut r, &[2, 2, len, 3, 2], 2.0);
        let w: Tensor<f64> = random_tensor(&mut r, &[3, 2, t, 1, 1], 1.0);
        let b: Tensor<f64> = random_tensor(&mut r, &[3], 1.0);
        let c = temporal_layer(&Causal, &w, &b, &x);
        let v = temporal_layer(&Reversed, &w, &b, &x);
        assert!(max_abs_diff(&to_f64(&c), &to_f64(&v)) <= 1e-12, "case {case}");
    }
}

#[test]
fn spike_at_last_frame_stays_in_the_future() {
    for variant in ["causal", "reversed"] {
        let mut m = calibrated::<f64>(&tiny(variant, 5, 5, 4, 4), 6);
        let zero = Tensor::zeros(&m.input_shape(1));
        let mut spike = zero.clone();
        spike.set(&[0, 0, 4, 1, 2], 5.0);
        let a = m.trace(&zero, Mode::Eval).unwrap();
        let b = m.trace(&spike, Mode::Eval).unwrap();
        let (ta, tb) = (&a[0].1, &b[0].1);
        for (i, (p, q)) in ta.data().iter().zip(tb.data()).enumerate() {
            let frame = (i / 16) % 5;
            if frame < 4 {
                assert_eq!(p, q, "{variant}: frame {frame} saw the spike");
            }
        }
    }
}

#[test]
fn causality_probes_separate_variants() {
    let settings = ProbeSettings::default();
    for variant in ["causal", "reversed"] {
        for t_out in [3, 5, 15] {
            let cfg = ModelConfig { layers: 2, ..tiny(variant, 5, t_out, 5, 4) };
            let report = probe_causality::<f32>(&cfg, 21, settings).unwrap();
            assert_eq!(report.records.len(), 100);
            assert!(report.passed(), "{variant} T''={t_out}: {}", report.max_deviation());
        }
    }
    for base in ["causal", "reversed"] {
        let cfg = ModelConfig {
            ablation_base: base.into(),
            ..tiny("no-causal", 5, 5, 5, 4)
        };
        let report = probe_causality::<f32>(&cfg, 21, settings).unwrap();
        assert!(!report.passed(), "no-causal over {base} must leak");
    }
}

#[test]
fn spatial_block_is_time_equivariant() {
    let mut m = calibrated::<f64>(&tiny("no-temporal", 5, 5, 6, 6), 7);
    let x: Tensor<f64> = random_tensor(&mut rng(14), &m.input_shape(2), 1.0);
    let perm = [3, 0, 4, 1, 2];
    let permute = |t: &Tensor<f64>| {
        let s = t.shape().to_vec();
        let mut out = t.clone();
        for n in 0..s[0] {
            for c in 0..s[1] {
                for (dst, &src) in perm.iter().enumerate() {
                    for h in 0..s[3] {
                        for w in 0..s[4] {
                            out.set(&[n, c, dst, h, w], t.get(&[n, c, src, h, w]));
                        }
                    }
                }
            }
        }
        out
    };
    let a = m.trace(&x, Mode::Eval).unwrap();
    let b = m.trace(&permute(&x), Mode::Eval).unwrap();
    assert_eq!(a[0].0, "spatial");
    assert_eq!(permute(&a[0].1).data(), b[0].1.data());
}

#[test]
fn checkpoint_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.stck");
    let cfg = tiny("reversed", 5, 15, 4, 4);
    let mut a = calibrated::<f32>(&cfg, 8);
    a.save(&path).unwrap();
    let mut b = Model::<f32>::build(&cfg, 99).unwrap();
    b.load(&path).unwrap();
    let x = random_tensor(&mut rng(15), &a.input_shape(2), 1.0);
    assert_eq!(a.predict(&x).unwrap().data(), b.predict(&x).unwrap().data());

    let mut other = Model::<f32>::build(&ModelConfig { filters: 3, ..cfg }, 0).unwrap();
    assert!(matches!(other.load(&path), Err(stcast::Error::DigestMismatch { .. })));
}

#[test]
fn parameter_order_is_stable() {
    let cfg = tiny("two-plus-one-d", 5, 10, 4, 4);
    let a = Model::<f32>::build(&cfg, 1).unwrap();
    let b = Model::<f32>::build(&cfg, 2).unwrap();
    let names = |m: &Model<f32>| m.store.ids().map(|id| m.store.name(id).to_string()).collect::<Vec<_>>();
    assert_eq!(names(&a), names(&b));
}
