//! Trains a list of architectures under one schedule and tabulates them.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::metrics::EvalResult;
use crate::model::{ArchitectureRegistry, Model, ModelConfig};
use crate::tensor::Scalar;
use crate::train::{self, Schedule, StopReason, TrainReport};

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub tag: String,
    /// Test metrics in original units; absent when the variant failed.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub params: Option<usize>,
    pub train_seconds: Option<f64>,
    /// `ok`, `diverged` or `error: <message>`.
    pub status: String,
}

impl AblationRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug)]
pub struct AblationSuite {
    pub rows: Vec<AblationRow>,
    /// Persistence on the same test windows.
    pub persistence: EvalResult,
}

impl AblationSuite {
    pub const CSV_HEADER: &'static str = "tag,rmse,mae,params,train_seconds,status";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.tag,
                opt(r.rmse.map(|v| format!("{v:e}"))),
                opt(r.mae.map(|v| format!("{v:e}"))),
                opt(r.params.map(|v| v.to_string())),
                opt(r.train_seconds.map(|v| format!("{v:.3}"))),
                r.status.replace([',', '\n'], ";")
            )
            .expect("write to string");
        }
        out
    }
}

fn run_one<S: Scalar>(
    registry: &ArchitectureRegistry,
    base: &ModelConfig,
    tag: &str,
    data: &WindowedDataset,
    schedule: &Schedule,
    on_trained: &(impl Fn(&str, &Model<S>, &TrainReport) -> Result<()> + Sync),
) -> Result<AblationRow> {
    let cfg = ModelConfig {
        variant: tag.to_string(),
        ..base.clone()
    };
    let mut model = Model::<S>::build_with(registry, &cfg, schedule.seed)?;
    let report = train::train(&mut model, data, schedule)?;
    let params = Some(model.parameter_count());
    let train_seconds = Some(report.total_seconds());
    if report.stop == StopReason::Diverged {
        return Ok(AblationRow {
            tag: tag.to_string(),
            rmse: None,
            mae: None,
            params,
            train_seconds,
            status: StopReason::Diverged.name().into(),
        });
    }
    on_trained(tag, &model, &report)?;
    let test = train::evaluate(&mut model, data, &data.split().test, schedule.batch_size, schedule.metric)?;
    Ok(AblationRow {
        tag: tag.to_string(),
        rmse: Some(test.rmse),
        mae: Some(test.mae),
        params,
        train_seconds,
        status: "ok".into(),
    })
}

/// Trains every tag with `base` otherwise unchanged. A failing variant is
/// recorded in its row and the suite continues. `on_trained` sees each
/// model after training, e.g. to save it.
pub fn run_suite<S: Scalar>(
    registry: &ArchitectureRegistry,
    base: &ModelConfig,
    tags: &[String],
    data: &WindowedDataset,
    schedule: &Schedule,
    parallel: bool,
    on_trained: impl Fn(&str, &Model<S>, &TrainReport) -> Result<()> + Sync,
) -> Result<AblationSuite> {
    if tags.is_empty() {
        return Err(Error::Config("ablation suite is empty".into()));
    }
    let one = |tag: &String| {
        run_one(registry, base, tag, data, schedule, &on_trained).unwrap_or_else(|e| {
            log::error!("{tag}: {e}");
            AblationRow {
                tag: tag.clone(),
                rmse: None,
                mae: None,
                params: None,
                train_seconds: None,
                status: format!("error: {e}"),
            }
        })
    };
    let rows = if parallel {
        tags.par_iter().map(one).collect()
    } else {
        tags.iter().map(one).collect()
    };
    let persistence = train::persistence_baseline(data, &data.split().test, schedule.batch_size, schedule.metric)?;
    Ok(AblationSuite { rows, persistence })
}
