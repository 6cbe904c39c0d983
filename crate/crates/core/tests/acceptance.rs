//! The ten acceptance criteria, run in order. Each prints one line with its
//! verdict, the measured quantity and the runtime against its budget; the
//! process fails if any criterion does.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use stcast::ablation::{run_suite, AblationSuite};
use stcast::data::{generate, NormalizationMode, SplitRatios, SynthParams, WindowSpec, WindowedDataset};
use stcast::gradcheck::{check_all_ops, check_model};
use stcast::metrics::{evaluate as metrics_of, Normalization};
use stcast::model::{
    generator_layers, ArchitectureRegistry, BlockKind, Causal, Model, ModelConfig, Reversed, ABLATION_TAGS,
};
use stcast::probe::{probe_causality, ProbeSettings};
use stcast::tensor::axis;
use stcast::train::{self, persistence_baseline, train_with, Schedule};
use stcast::Tensor;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn run(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let started = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f));
    let elapsed = started.elapsed();
    let (passed, detail) = match outcome {
        Ok(v) => (v.passed && elapsed <= budget, v.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "criterion {id:>2} {name:<24} {}  {detail}  [{:.1}s of {}s]",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    passed
}

fn blobs_config() -> ModelConfig {
    ModelConfig {
        variant: "reversed".into(),
        layers: 2,
        temporal_kernel: 3,
        spatial_kernel: 3,
        filters: 16,
        height: 8,
        width: 8,
        ..ModelConfig::default()
    }
}

fn blobs_dataset(frames: usize) -> WindowedDataset {
    let grid = generate(&SynthParams {
        frames,
        height: 8,
        width: 8,
        ..SynthParams::default()
    })
    .unwrap();
    WindowedDataset::new(&grid, WindowSpec::new(5, 5, 1).unwrap(), SplitRatios::default(), NormalizationMode::None)
        .unwrap()
}

fn causality_suite() -> Verdict {
    let settings = ProbeSettings::default();
    let mut worst_causal = 0.0f64;
    let mut probes = 0;
    for variant in ["causal", "reversed"] {
        for t_out in [5, 15] {
            let cfg = ModelConfig {
                variant: variant.into(),
                layers: 2,
                temporal_kernel: 3,
                spatial_kernel: 3,
                filters: 4,
                output_len: t_out,
                height: 8,
                width: 8,
                ..ModelConfig::default()
            };
            let report = probe_causality::<f32>(&cfg, 101, settings).unwrap();
            probes += report.records.len();
            worst_causal = worst_causal.max(report.max_deviation());
        }
    }
    let mut leaks = Vec::new();
    for base in ["causal", "reversed"] {
        let cfg = ModelConfig {
            variant: "no-causal".into(),
            ablation_base: base.into(),
            layers: 2,
            temporal_kernel: 3,
            spatial_kernel: 3,
            filters: 4,
            height: 8,
            width: 8,
            ..ModelConfig::default()
        };
        leaks.push(probe_causality::<f32>(&cfg, 101, settings).unwrap().max_deviation());
    }
    let caught = leaks.iter().all(|&d| d > 0.0);
    verdict(
        worst_causal == 0.0 && caught,
        format!(
            "causal/reversed max deviation {worst_causal:e} over {probes} probes; no-causal deviation {:.3e}/{:.3e}",
            leaks[0], leaks[1]
        ),
    )
}

fn strategy_equivalence() -> Verdict {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let t = r.gen_range(1..=5);
        let len = r.gen_range(1..=8);
        let (cin, cout) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let x: Tensor<f64> = random_tensor(&mut r, &[2, cin, len, 3, 4], 2.0);
        let w: Tensor<f64> = random_tensor(&mut r, &[cout, cin, t, 1, 1], 1.0);
        let b: Tensor<f64> = random_tensor(&mut r, &[cout], 1.0);
        let c = temporal_layer(&Causal, &w, &b, &x);
        let v = temporal_layer(&Reversed, &w, &b, &x);
        assert_eq!(c.shape(), v.shape(), "case {case}");
        worst = worst.max(max_abs_diff(&to_f64(&c), &to_f64(&v)));
    }
    verdict(worst <= 1e-6, format!("max |causal − reversed| {worst:.3e} over 100 inputs (tol 1e-6)"))
}

fn gradient_correctness() -> Verdict {
    let ops = check_all_ops(31).unwrap();
    let worst_op = ops.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let cfg = ModelConfig {
        variant: "reversed".into(),
        layers: 2,
        temporal_kernel: 3,
        spatial_kernel: 3,
        filters: 2,
        input_len: 3,
        output_len: 8,
        height: 4,
        width: 3,
        ..ModelConfig::default()
    };
    let mut worst_model = 0.0f64;
    for seed in 0..3 {
        worst_model = worst_model.max(check_model(&cfg, seed, 10, 2).unwrap().max_rel_error);
    }
    verdict(
        worst_op <= 1e-4 && worst_model <= 1e-3,
        format!(
            "{} ops max rel err {worst_op:.2e} (tol 1e-4); reversed model {worst_model:.2e} (tol 1e-3)",
            ops.len()
        ),
    )
}

fn convolution_oracles() -> Verdict {
    let c32 = conv3d_oracle_deviation::<f32>(41, 200);
    let c64 = conv3d_oracle_deviation::<f64>(42, 200);
    let t32 = conv_transpose3d_oracle_deviation::<f32>(43, 200);
    let t64 = conv_transpose3d_oracle_deviation::<f64>(44, 200);
    verdict(
        c32 <= 1e-5 && t32 <= 1e-5 && c64 <= 1e-10 && t64 <= 1e-10,
        format!("conv3d {c32:.1e}/{c64:.1e}, transpose {t32:.1e}/{t64:.1e} (single/double, 200 cases each)"),
    )
}

fn shape_contract() -> Verdict {
    let mut failures = Vec::new();
    for t_out in 1..=25 {
        let cfg = ModelConfig {
            layers: 1,
            temporal_kernel: 3,
            spatial_kernel: 3,
            filters: 2,
            input_len: 5,
            output_len: t_out,
            height: 4,
            width: 4,
            ..ModelConfig::default()
        };
        let mut model = Model::<f32>::build(&cfg, 5).unwrap();
        let x: Tensor<f32> = random_tensor(&mut rng(t_out as u64), &model.input_shape(2), 1.0);
        model.calibrate(&x).unwrap();
        let y = model.predict(&x).unwrap();
        if y.shape()[axis::TIME] != t_out {
            failures.push(format!("T''={t_out} gives {}", y.shape()[axis::TIME]));
        }
        let expected = (t_out > 5).then(|| ((t_out - 5).div_ceil(10), t_out / 5));
        if generator_layers(5, t_out) != expected {
            failures.push(format!("T''={t_out}: layer counts {:?}", generator_layers(5, t_out)));
        }
        let plan = model.plan();
        let built = plan.blocks.iter().find_map(|b| match b.kind {
            BlockKind::Generator { upsample, .. } => Some((upsample, b.layers.len() - upsample)),
            _ => None,
        });
        if built != expected || plan.upsample_layers != expected.map_or(0, |e| e.0) {
            failures.push(format!("T''={t_out}: built generator {built:?}"));
        }
    }
    let fifteen = generator_layers(5, 15);
    verdict(
        failures.is_empty() && fifteen == Some((1, 3)),
        if failures.is_empty() {
            format!("T''=1..25 all match; T''=15 gives l_gt, l_gc = {fifteen:?}")
        } else {
            failures.join("; ")
        },
    )
}

fn learning_sanity() -> Verdict {
    let data = blobs_dataset(2000);
    let base = persistence_baseline(&data, &data.split().test, 64, Normalization::PerElement).unwrap();
    let mut model = Model::<f32>::build(&blobs_config(), 6).unwrap();
    let schedule = Schedule {
        epochs: 100,
        seed: 6,
        ..Schedule::default()
    };
    let report = train::train(&mut model, &data, &schedule).unwrap();
    let test = train::evaluate(&mut model, &data, &data.split().test, 64, Normalization::PerElement).unwrap();
    let ratio = test.rmse / base.rmse;
    verdict(
        ratio < 0.8,
        format!(
            "test RMSE {:.4} vs persistence {:.4} (ratio {ratio:.3}, need < 0.8) after {} epochs, best {}",
            test.rmse,
            base.rmse,
            report.epochs.len(),
            report.best_epoch
        ),
    )
}

fn overfit_probe() -> Verdict {
    let mut data = blobs_dataset(2000);
    data.truncate_train(50).unwrap();
    let windows = data.split().train.clone();
    let base = persistence_baseline(&data, &windows, 64, Normalization::PerElement).unwrap();
    let mut model = Model::<f32>::build(&blobs_config(), 7).unwrap();
    let schedule = Schedule {
        epochs: 200,
        patience: 200,
        seed: 7,
        ..Schedule::default()
    };
    let mut reached = None;
    let mut best = f64::INFINITY;
    train_with(&mut model, &data, &schedule, |m, record| {
        let fit = train::evaluate(m, &data, &windows, 64, Normalization::PerElement)?;
        best = best.min(fit.rmse);
        if fit.rmse < 0.2 * base.rmse {
            reached = Some(record.epoch);
            return Ok(true);
        }
        Ok(false)
    })
    .unwrap();
    verdict(
        reached.is_some(),
        format!(
            "train RMSE {best:.4} vs persistence {:.4} (ratio {:.3}, need < 0.2) at epoch {}",
            base.rmse,
            best / base.rmse,
            reached.map_or("none".into(), |e| e.to_string())
        ),
    )
}

fn metric_oracles() -> Verdict {
    let mut r = rng(8);
    let (mut worst_scalar, mut worst_recombined) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let shape = [
            r.gen_range(1..5),
            r.gen_range(1..3),
            r.gen_range(1..16),
            r.gen_range(1..7),
            r.gen_range(1..7),
        ];
        let p: Tensor<f64> = random_tensor(&mut r, &shape, 3.0);
        let y: Tensor<f64> = random_tensor(&mut r, &shape, 3.0);
        let (mut sq, mut ab) = (0.0, 0.0);
        for (a, b) in p.data().iter().zip(y.data()) {
            sq += (a - b) * (a - b);
            ab += (a - b).abs();
        }
        let n = p.numel() as f64;
        let got = metrics_of(&p, &y, Normalization::PerElement).unwrap();
        worst_scalar = worst_scalar
            .max((got.rmse - (sq / n).sqrt()).abs())
            .max((got.mae - ab / n).abs());
        let steps = shape[2] as f64;
        let recombined = got.per_step_rmse.iter().map(|v| v * v).sum::<f64>() / steps;
        worst_recombined = worst_recombined.max((recombined - got.rmse * got.rmse).abs());
    }
    verdict(
        worst_scalar <= 1e-10 && worst_recombined <= 1e-10,
        format!("scalar oracle gap {worst_scalar:.1e}, per-step recombination gap {worst_recombined:.1e} (tol 1e-10)"),
    )
}

fn determinism() -> Verdict {
    let data = blobs_dataset(400);
    let run = || {
        let cfg = ModelConfig {
            dropout: 0.1,
            ..blobs_config()
        };
        let mut model = Model::<f32>::build(&cfg, 9).unwrap();
        let schedule = Schedule {
            epochs: 4,
            seed: 9,
            ..Schedule::default()
        };
        train::train(&mut model, &data, &schedule).unwrap().to_csv(false)
    };
    let (a, b) = (run(), run());
    verdict(
        a == b,
        format!(
            "two runs: {} CSV bytes each, identical = {}",
            a.len(),
            a.as_bytes() == b.as_bytes()
        ),
    )
}

fn ablation_harness() -> Verdict {
    let data = blobs_dataset(2000);
    let tags: Vec<String> = ABLATION_TAGS.iter().map(|t| t.to_string()).collect();
    let schedule = Schedule {
        epochs: 1,
        seed: 10,
        ..Schedule::default()
    };
    let suite: AblationSuite = run_suite::<f32>(
        &ArchitectureRegistry::builtin(),
        &blobs_config(),
        &tags,
        &data,
        &schedule,
        false,
        |_, _, _| Ok(()),
    )
    .unwrap();
    let csv = suite.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    let complete = lines[0] == AblationSuite::CSV_HEADER
        && lines.len() == 1 + tags.len()
        && lines[1..].iter().zip(&tags).all(|(line, tag)| {
            let fields: Vec<&str> = line.split(',').collect();
            fields.len() == 6 && fields[0] == tag && fields.iter().all(|f| !f.is_empty()) && fields[5] == "ok"
        });
    let failed: Vec<&str> = suite.rows.iter().filter(|r| !r.ok()).map(|r| r.tag.as_str()).collect();
    verdict(
        complete,
        format!(
            "{} of {} tags trained one epoch; CSV rows {}; failed: {}",
            suite.rows.len() - failed.len(),
            tags.len(),
            lines.len() - 1,
            if failed.is_empty() { "none".into() } else { failed.join(" ") }
        ),
    )
}

fn main() {
    stcast::tensor::set_deterministic(true);
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let results = [
        run(1, "causality suite", minutes(1), causality_suite),
        run(2, "strategy equivalence", Duration::from_secs(10), strategy_equivalence),
        run(3, "gradient correctness", minutes(5), gradient_correctness),
        run(4, "convolution oracles", minutes(2), convolution_oracles),
        run(5, "shape contract", Duration::from_secs(10), shape_contract),
        run(6, "learning sanity", minutes(30), learning_sanity),
        run(7, "overfit probe", minutes(10), overfit_probe),
        run(8, "metric oracles", Duration::from_secs(10), metric_oracles),
        run(9, "determinism", minutes(5), determinism),
        run(10, "ablation harness", minutes(10), ablation_harness),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
