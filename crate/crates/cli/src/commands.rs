use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::json;
use stcast::ablation::{self, AblationRow};
use stcast::data::{
    export_raw, generate, import_raw_file, ByteOrder, GridExtents, GridSeq, RawDtype, RawLayout, SynthKind,
    SynthParams, WindowSpec, WindowedDataset,
};
use stcast::gradcheck;
use stcast::metrics::ErrorAccumulator;
use stcast::model::{ArchitectureRegistry, Model, ModelConfig, ABLATION_TAGS};
use stcast::probe::{self, ProbeSettings};
use stcast::tensor::{self, axis};
use stcast::train::{self, StopReason};
use stcast::{PadSpec, Precision, Scalar, Tensor};

use crate::args::{
    AblateArgs, Command, Common, ConvertArgs, EvalArgs, GradCheckArgs, MakeSynthArgs, ModelArgs, ProbeArgs, TrainArgs,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::heatmap;
use crate::rundir::{Manifest, RunDir};

macro_rules! dispatch {
    ($precision:expr, $f:ident($($arg:expr),*)) => {
        match $precision {
            Precision::Single => $f::<f32>($($arg),*),
            Precision::Double => $f::<f64>($($arg),*),
        }
    };
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::MakeSynth(a) => make_synth(&a),
        Command::Convert(a) => convert(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Ablate(a) => ablate_cmd(&a),
        Command::ProbeCausality(a) => probe_cmd(&a),
        Command::GradCheck(a) => grad_check_cmd(&a),
    }
}

fn start(common: &Common) {
    tensor::set_deterministic(common.deterministic);
}

fn manifest(command: &str, common: &Common, cfg: Option<&RunConfig>) -> Manifest {
    let mut m = Manifest::new(command);
    m.deterministic = common.deterministic;
    if let Some(cfg) = cfg {
        m.seed = Some(cfg.schedule.seed);
        m.precision = Some(cfg.precision.name().into());
        m.config = cfg.to_json();
        m.config_digest = Some(cfg.model.digest_hex());
    } else {
        m.seed = common.seed;
    }
    m
}

fn pair<T: std::str::FromStr>(flag: &str, value: &str) -> Result<(T, T)> {
    let bad = || CliError::Usage(format!("--{flag} expects two comma-separated values, got '{value}'"));
    let (a, b) = value.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn make_synth(a: &MakeSynthArgs) -> Result<()> {
    start(&a.common);
    let kind: SynthKind = a.kind.parse()?;
    let mut p = SynthParams {
        kind,
        frames: a.frames,
        height: a.height,
        width: a.width,
        channels: a.channels,
        seed: a.common.seed.unwrap_or(0),
        ..SynthParams::default()
    };
    if let Some(v) = &a.velocity {
        p.velocity = pair("velocity", v)?;
    }
    if let Some(v) = &a.lifetime {
        p.lifetime = pair("lifetime", v)?;
    }
    if let Some(v) = &a.wavenumber {
        p.wavenumber = pair("wavenumber", v)?;
    }
    if let Some(v) = a.blobs {
        p.blobs = v;
    }
    if let Some(v) = a.sigma {
        p.sigma = v;
    }
    if let Some(v) = a.amplitude {
        p.amplitude = v;
    }
    if let Some(v) = a.noise_std {
        p.noise_std = v;
    }
    let grid = generate(&p)?;
    let name = a.name.clone().unwrap_or_else(|| format!("{}.gseq", kind.name()));
    let mut dir = RunDir::create(&a.common.out)?;
    dir.write(&name, grid.encode())?;
    let mut m = manifest("make-synth", &a.common, None);
    m.seed = Some(p.seed);
    m.config = json!({
        "kind": kind.name(),
        "frames": p.frames,
        "height": p.height,
        "width": p.width,
        "channels": p.channels,
        "velocity": [p.velocity.0, p.velocity.1],
        "blobs": p.blobs,
        "sigma": p.sigma,
        "lifetime": [p.lifetime.0, p.lifetime.1],
        "amplitude": p.amplitude,
        "wavenumber": [p.wavenumber.0, p.wavenumber.1],
        "noise_std": p.noise_std,
    });
    m.summary = json!({ "file": name, "grid_digest": grid.digest_hex() });
    dir.finish(m)?;
    log::info!("wrote {} ({} frames)", a.common.out.join(&name).display(), p.frames);
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

fn convert(a: &ConvertArgs) -> Result<()> {
    start(&a.common);
    let layout = RawLayout::new(&a.order, a.byte_order.parse::<ByteOrder>()?, a.dtype.parse::<RawDtype>()?)?;
    let mut m = manifest("convert", &a.common, None);
    m.input(&a.input)?;
    m.config = json!({
        "direction": if a.export { "export" } else { "import" },
        "order": layout.order(),
        "byte_order": a.byte_order,
        "dtype": a.dtype,
        "fill": a.fill,
    });
    if a.export {
        let grid = GridSeq::read(&a.input)?;
        let name = a.name.clone().unwrap_or_else(|| format!("{}.raw", stem(&a.input)));
        let mut dir = RunDir::create(&a.common.out)?;
        dir.write(&name, export_raw(&grid, layout))?;
        let e = grid.extents();
        m.summary = json!({
            "file": name,
            "frames": e.time, "height": e.height, "width": e.width, "channels": e.channels,
        });
        dir.finish(m)?;
        return Ok(());
    }
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("import needs --{flag}")));
    let extents = GridExtents::new(
        need(a.frames, "frames")?,
        need(a.height, "height")?,
        need(a.width, "width")?,
        a.channels,
    )?;
    let imported = import_raw_file(&a.input, extents, layout, a.fill)?;
    if imported.filled > 0 {
        log::warn!("replaced {} NaN values with {:?}", imported.filled, a.fill);
    }
    let name = a.name.clone().unwrap_or_else(|| format!("{}.gseq", stem(&a.input)));
    let mut dir = RunDir::create(&a.common.out)?;
    dir.write(&name, imported.grid.encode())?;
    m.summary = json!({
        "file": name,
        "filled": imported.filled,
        "grid_digest": imported.grid.digest_hex(),
    });
    dir.finish(m)?;
    Ok(())
}

/// Reads the series, takes the grid extents from it and builds the
/// windowed dataset. Explicit extent flags must agree with the file.
fn load_data(cfg: &mut RunConfig, path: &Path, flags: &ModelArgs) -> Result<WindowedDataset> {
    let grid = GridSeq::read(path)?;
    let e = grid.extents();
    for (flag, given, actual) in [
        ("height", flags.height, e.height),
        ("width", flags.width, e.width),
        ("channels", flags.channels, e.channels),
    ] {
        if given.is_some_and(|g| g != actual) {
            return Err(CliError::Usage(format!(
                "--{flag} {} does not match {} in {}",
                given.unwrap_or(0),
                actual,
                path.display()
            )));
        }
    }
    cfg.model.height = e.height;
    cfg.model.width = e.width;
    cfg.model.channels = e.channels;
    cfg.model.validate()?;
    let spec = WindowSpec::new(cfg.model.input_len, cfg.model.output_len, cfg.stride)?;
    let mut ds = WindowedDataset::new(&grid, spec, cfg.split, cfg.normalize)?;
    if let Some(n) = cfg.max_train {
        ds.truncate_train(n)?;
    }
    let s = ds.split();
    log::info!(
        "{}: {} frames, windows train/val/test {}/{}/{}",
        path.display(),
        e.time,
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(ds)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    start(&a.common);
    let mut cfg = RunConfig::resolve(RunConfig::default(), &a.model, &a.common)?;
    cfg.apply_data_args(&a.data)?;
    cfg.apply_schedule_args(&a.schedule)?;
    let ds = load_data(&mut cfg, &a.data.data, &a.model)?;
    dispatch!(cfg.precision, train_run(a, &cfg, &ds))
}

fn train_run<S: Scalar>(a: &TrainArgs, cfg: &RunConfig, ds: &WindowedDataset) -> Result<()> {
    let mut model = Model::<S>::build(&cfg.model, cfg.schedule.seed)?;
    log::info!(
        "training {} ({} parameters, {})",
        cfg.model.variant,
        model.parameter_count(),
        cfg.precision.name()
    );
    let report = train::train(&mut model, ds, &cfg.schedule)?;
    let s = &cfg.schedule;
    let persistence = train::persistence_baseline(ds, &ds.split().val, s.batch_size, s.metric)?;

    let mut dir = RunDir::create(&a.common.out)?;
    dir.write_with("model.ckpt", |p| Ok(model.save(p)?))?;
    dir.write("config.kv", cfg.to_kv_string())?;
    dir.write("train_report.csv", report.to_csv(!a.common.deterministic))?;
    if !a.common.deterministic {
        dir.write("timings.csv", report.timings_csv())?;
    }
    let mut m = manifest("train", &a.common, Some(cfg));
    m.input(&a.data.data)?;
    m.summary = json!({
        "parameters": model.parameter_count(),
        "epochs_run": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "best_val_rmse": report.best_val_rmse,
        "stop": report.stop.name(),
        "skipped_steps": report.skipped_steps,
        "val_persistence_rmse": persistence.rmse,
    });
    dir.finish(m)?;
    if report.stop == StopReason::Diverged {
        return Err(CliError::Failed(format!(
            "training diverged after {} epochs; partial report in {}",
            report.epochs.len(),
            a.common.out.display()
        )));
    }
    log::info!(
        "best epoch {} val rmse {:.4e} (persistence {:.4e}), stop: {}",
        report.best_epoch,
        report.best_val_rmse,
        persistence.rmse,
        report.stop.name()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    start(&a.common);
    let mut base = RunConfig::default();
    let checkpoint = match (&a.run, &a.checkpoint) {
        (_, Some(c)) => {
            if let Some(run) = &a.run {
                base.apply_file(&run.join("config.kv"))?;
            }
            c.clone()
        }
        (Some(run), None) => {
            base.apply_file(&run.join("config.kv"))?;
            run.join("model.ckpt")
        }
        (None, None) => return Err(CliError::Usage("eval needs --run or --checkpoint".into())),
    };
    let mut cfg = RunConfig::resolve(base, &a.model, &a.common)?;
    cfg.apply_data_args(&a.data)?;
    if let Some(b) = a.batch_size {
        cfg.schedule.batch_size = b;
    }
    if let Some(m) = &a.metric {
        cfg.schedule.metric = m.parse()?;
    }
    // windows are scored on the full split regardless of training truncation
    cfg.max_train = None;
    let ds = load_data(&mut cfg, &a.data.data, &a.model)?;
    let t_out = cfg.model.output_len;
    let horizon = a.horizon.unwrap_or(t_out);
    if horizon == 0 || horizon > t_out {
        return Err(CliError::Usage(format!("--horizon must be in 1..={t_out}, got {horizon}")));
    }
    let windows = match a.on.as_str() {
        "train" => ds.split().train.clone(),
        "val" => ds.split().val.clone(),
        "test" => ds.split().test.clone(),
        other => return Err(CliError::Usage(format!("--on must be train, val or test, got '{other}'"))),
    };
    if a.sample >= windows.len() {
        return Err(CliError::Usage(format!(
            "--sample {} out of range for {} {} windows",
            a.sample,
            windows.len(),
            a.on
        )));
    }
    dispatch!(cfg.precision, eval_run(a, &cfg, &ds, &checkpoint, &windows, horizon))
}

fn first_steps<S: Scalar>(t: &Tensor<S>, horizon: usize) -> Result<Tensor<S>> {
    let steps = t.shape()[axis::TIME];
    Ok(tensor::crop(t, &PadSpec::on_axis(5, axis::TIME, 0, steps - horizon))?)
}

/// Channel `c`, step `t` of sample 0 as an `h × w` frame.
fn plane<S: Scalar>(x: &Tensor<S>, c: usize, t: usize) -> Vec<f64> {
    let [_, _, steps, h, w] = x.dims5("plane").expect("rank 5");
    let start = (c * steps + t) * h * w;
    x.data()[start..start + h * w].iter().map(|v| v.to_f64_lossy()).collect()
}

fn eval_run<S: Scalar>(
    a: &EvalArgs,
    cfg: &RunConfig,
    ds: &WindowedDataset,
    checkpoint: &Path,
    windows: &[usize],
    horizon: usize,
) -> Result<()> {
    let mut model = Model::<S>::build(&cfg.model, cfg.schedule.seed)?;
    model.load(checkpoint)?;
    let norm = ds.normalizer();
    let t_out = cfg.model.output_len;
    let (mut acc, mut base) = (ErrorAccumulator::new(), ErrorAccumulator::new());
    for chunk in windows.chunks(cfg.schedule.batch_size.max(1)) {
        let (x, y) = ds.batch::<S>(chunk)?;
        let pred = norm.invert(&model.predict(&x)?);
        let y = first_steps(&norm.invert(&y), horizon)?;
        acc.add(&first_steps(&pred, horizon)?, &y)?;
        let persist = norm.invert(&train::persistence_forecast(&x, t_out)?);
        base.add(&first_steps(&persist, horizon)?, &y)?;
    }
    let metric = cfg.schedule.metric;
    let result = acc.finish(metric)?;
    let persistence = base.finish(metric)?;

    let mut dir = RunDir::create(&a.common.out)?;
    let digest = cfg.model.digest_hex();
    let metric_name = cfg.get("metric").expect("known key");
    let mut metrics = String::from("model,config_digest,horizon,split,samples,rmse,mae,normalization\n");
    for (name, digest, r) in [
        (cfg.model.variant.as_str(), digest.as_str(), &result),
        ("persistence", "", &persistence),
    ] {
        let _ = writeln!(
            metrics,
            "{name},{digest},{horizon},{},{},{:e},{:e},{metric_name}",
            a.on, r.samples, r.rmse, r.mae
        );
    }
    dir.write("metrics.csv", metrics)?;
    let mut per_step = String::from("step,rmse,mae,cumulative_rmse,cumulative_mae\n");
    for s in 0..horizon {
        let _ = writeln!(
            per_step,
            "{},{:e},{:e},{:e},{:e}",
            s + 1,
            result.per_step_rmse[s],
            result.per_step_mae[s],
            result.cumulative_rmse[s],
            result.cumulative_mae[s]
        );
    }
    dir.write("per_step.csv", per_step)?;

    let window = windows[a.sample];
    let (x, y) = ds.batch::<S>(&[window])?;
    let pred = norm.invert(&model.predict(&x)?);
    let y = norm.invert(&y);
    let (h, w) = (cfg.model.height, cfg.model.width);
    let mut sidecar = String::from("file,kind,window,step,channel,min,max\n");
    for (kind, t) in [("target", &y), ("prediction", &pred)] {
        for step in 0..horizon {
            for c in 0..cfg.model.channels {
                let (img, lo, hi) = heatmap::ppm(&plane(t, c, step), h, w);
                let file = format!("heatmaps/{kind}_s{:02}_c{c}.ppm", step + 1);
                dir.write(&file, img)?;
                let _ = writeln!(sidecar, "{file},{kind},{window},{},{c},{lo:e},{hi:e}", step + 1);
            }
        }
    }
    dir.write("heatmaps.csv", sidecar)?;

    let mut m = manifest("eval", &a.common, Some(cfg));
    m.input(&a.data.data)?;
    m.input(checkpoint)?;
    m.summary = json!({
        "split": a.on,
        "horizon": horizon,
        "samples": result.samples,
        "rmse": result.rmse,
        "mae": result.mae,
        "persistence_rmse": persistence.rmse,
        "persistence_mae": persistence.mae,
        "heatmap_window": window,
    });
    dir.finish(m)?;
    log::info!(
        "{} {} windows, horizon {horizon}: rmse {:.4e} mae {:.4e} (persistence {:.4e})",
        a.on,
        result.samples,
        result.rmse,
        result.mae,
        persistence.rmse
    );
    Ok(())
}

fn ablate_cmd(a: &AblateArgs) -> Result<()> {
    start(&a.common);
    let tags: Vec<String> = match &a.tags {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect(),
        None => ABLATION_TAGS.iter().map(|t| t.to_string()).collect(),
    };
    if tags.is_empty() {
        return Err(CliError::Usage("ablation suite is empty".into()));
    }
    let registry = ArchitectureRegistry::builtin();
    for tag in &tags {
        registry.get(tag)?;
    }
    let mut cfg = RunConfig::resolve(RunConfig::default(), &a.model, &a.common)?;
    cfg.apply_data_args(&a.data)?;
    cfg.apply_schedule_args(&a.schedule)?;
    let ds = load_data(&mut cfg, &a.data.data, &a.model)?;
    dispatch!(cfg.precision, ablate_run(a, &cfg, &ds, &registry, &tags))
}

fn save_variant<S: Scalar>(
    root: &Path,
    cfg: &RunConfig,
    tag: &str,
    model: &Model<S>,
    csv: String,
) -> stcast::Result<Vec<String>> {
    let sub = root.join(tag);
    std::fs::create_dir_all(&sub).map_err(|source| stcast::Error::Io {
        path: sub.clone(),
        source,
    })?;
    model.save(&sub.join("model.ckpt"))?;
    let mut variant = cfg.clone();
    variant.model = model.config().clone();
    for (name, text) in [("config.kv", variant.to_kv_string()), ("train_report.csv", csv)] {
        let path = sub.join(name);
        std::fs::write(&path, text).map_err(|source| stcast::Error::Io { path, source })?;
    }
    Ok(["model.ckpt", "config.kv", "train_report.csv"]
        .iter()
        .map(|f| format!("{tag}/{f}"))
        .collect())
}

fn ablate_run<S: Scalar>(
    a: &AblateArgs,
    cfg: &RunConfig,
    ds: &WindowedDataset,
    registry: &ArchitectureRegistry,
    tags: &[String],
) -> Result<()> {
    let mut dir = RunDir::create(&a.common.out)?;
    let root: PathBuf = dir.root().to_path_buf();
    let saved = Mutex::new(Vec::new());
    let timings = !a.common.deterministic;
    let mut suite = ablation::run_suite::<S>(
        registry,
        &cfg.model,
        tags,
        ds,
        &cfg.schedule,
        a.parallel,
        |tag, model, report| {
            log::info!(
                "{tag}: best epoch {} val rmse {:.4e}, stop: {}",
                report.best_epoch,
                report.best_val_rmse,
                report.stop.name()
            );
            let files = save_variant(&root, cfg, tag, model, report.to_csv(timings))?;
            saved.lock().expect("unpoisoned").extend(files);
            Ok(())
        },
    )?;
    let mut files = saved.into_inner().expect("unpoisoned");
    files.sort();
    for f in &files {
        dir.adopt(f)?;
    }
    if !timings {
        for row in &mut suite.rows {
            row.train_seconds = None;
        }
    }
    suite.rows.push(AblationRow {
        tag: "persistence".into(),
        rmse: Some(suite.persistence.rmse),
        mae: Some(suite.persistence.mae),
        params: Some(0),
        train_seconds: None,
        status: "baseline".into(),
    });
    dir.write("ablation.csv", suite.to_csv())?;
    let failed: Vec<&str> = suite
        .rows
        .iter()
        .filter(|r| !r.ok() && r.status != "baseline")
        .map(|r| r.tag.as_str())
        .collect();
    let mut m = manifest("ablate", &a.common, Some(cfg));
    m.input(&a.data.data)?;
    m.summary = json!({
        "tags": tags,
        "parallel": a.parallel,
        "failed": failed,
        "persistence_rmse": suite.persistence.rmse,
        "persistence_mae": suite.persistence.mae,
    });
    dir.finish(m)?;
    for r in &suite.rows {
        log::info!(
            "{:<16} rmse {:>11} status {}",
            r.tag,
            r.rmse.map(|v| format!("{v:.4e}")).unwrap_or_default(),
            r.status
        );
    }
    if failed.len() == tags.len() {
        return Err(CliError::Failed("every variant in the suite failed".into()));
    }
    if !failed.is_empty() {
        log::warn!("failed variants: {}", failed.join(", "));
    }
    Ok(())
}

/// Small enough for probes and finite differences to finish in seconds.
fn small_model() -> RunConfig {
    RunConfig {
        model: ModelConfig {
            layers: 2,
            temporal_kernel: 3,
            spatial_kernel: 3,
            filters: 4,
            input_len: 5,
            output_len: 5,
            height: 8,
            width: 8,
            ..ModelConfig::default()
        },
        ..RunConfig::default()
    }
}

fn probe_cmd(a: &ProbeArgs) -> Result<()> {
    start(&a.common);
    let cfg = RunConfig::resolve(small_model(), &a.model, &a.common)?;
    cfg.model.validate()?;
    let settings = ProbeSettings {
        models: a.models,
        positions: a.positions,
        batch: a.batch,
    };
    let report = dispatch!(cfg.precision, probe_run(&cfg, settings))?;
    let mut dir = RunDir::create(&a.common.out)?;
    let mut csv = String::from("model,protected,frame,channel,h,w,block_deviation,output_deviation\n");
    for r in &report.records {
        let (f, c, h, w) = r.perturbed;
        let _ = writeln!(
            csv,
            "{},{},{f},{c},{h},{w},{:e},{:e}",
            r.model, r.protected, r.block_deviation, r.output_deviation
        );
    }
    dir.write("probe.csv", csv)?;
    let mut m = manifest("probe-causality", &a.common, Some(&cfg));
    m.summary = json!({
        "variant": report.variant,
        "block": report.block,
        "probes": report.records.len(),
        "violations": report.violations(),
        "max_deviation": report.max_deviation(),
    });
    dir.finish(m)?;
    if !report.passed() {
        return Err(CliError::Failed(format!(
            "{}: {} of {} probes leaked future frames (max deviation {:e})",
            report.variant,
            report.violations(),
            report.records.len(),
            report.max_deviation()
        )));
    }
    log::info!("{}: {} probes, no leakage", report.variant, report.records.len());
    Ok(())
}

fn probe_run<S: Scalar>(cfg: &RunConfig, settings: ProbeSettings) -> Result<probe::ProbeReport> {
    Ok(probe::probe_causality::<S>(&cfg.model, cfg.schedule.seed, settings)?)
}

fn grad_check_cmd(a: &GradCheckArgs) -> Result<()> {
    start(&a.common);
    let mut base = small_model();
    base.model.filters = 2;
    base.model.height = 4;
    base.model.width = 3;
    let mut cfg = RunConfig::resolve(base, &a.model, &a.common)?;
    if cfg.precision != Precision::Double {
        log::info!("gradient checks always run in double precision");
        cfg.precision = Precision::Double;
    }
    cfg.model.validate()?;
    let seed = cfg.schedule.seed;
    let mut checks = gradcheck::check_all_ops(seed)?;
    let mut model = gradcheck::check_model(&cfg.model, seed, a.params, a.batch)?;
    model.name = format!("model:{}", cfg.model.variant);
    checks.push(model);

    let mut dir = RunDir::create(&a.common.out)?;
    let mut csv = String::from("name,coordinates,max_rel_error,tolerance,passed\n");
    for c in &checks {
        let _ = writeln!(
            csv,
            "{},{},{:e},{:e},{}",
            c.name,
            c.coordinates,
            c.max_rel_error,
            c.tolerance,
            c.passed()
        );
    }
    dir.write("gradcheck.csv", csv)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let mut m = manifest("grad-check", &a.common, Some(&cfg));
    m.summary = json!({ "checks": checks.len(), "failed": failed, "max_rel_error": worst });
    dir.finish(m)?;
    if !failed.is_empty() {
        return Err(CliError::Failed(format!("gradient check failed for {}", failed.join(", "))));
    }
    log::info!("{} gradient checks passed (max relative error {worst:e})", checks.len());
    Ok(())
}
