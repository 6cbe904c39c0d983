use std::fmt::Write as _;
use std::path::Path;

use stcast::data::{NormalizationMode, SplitRatios};
use stcast::metrics::Normalization;
use stcast::model::ModelConfig;
use stcast::train::Schedule;
use stcast::Precision;

use crate::args::{Common, DataArgs, ModelArgs, ScheduleArgs};
use crate::error::{io, CliError, Result};

/// Everything a run depends on besides the data file, as one flat
/// `key = value` document.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: Schedule,
    pub normalize: NormalizationMode,
    pub stride: usize,
    pub split: SplitRatios,
    pub max_train: Option<usize>,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            schedule: Schedule::default(),
            normalize: NormalizationMode::ZScore,
            stride: 1,
            split: SplitRatios::default(),
            max_train: None,
            precision: Precision::Single,
        }
    }
}

const RUN_KEYS: [&str; 11] = [
    "epochs",
    "batch_size",
    "patience",
    "learning_rate",
    "metric",
    "seed",
    "normalize",
    "stride",
    "split",
    "max_train",
    "precision",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot parse {key} = '{value}'")))
}

fn metric_name(m: Normalization) -> &'static str {
    match m {
        Normalization::PerElement => "per-element",
        Normalization::PerSample => "per-sample",
    }
}

fn normalize_name(m: NormalizationMode) -> &'static str {
    match m {
        NormalizationMode::None => "none",
        NormalizationMode::ZScore => "zscore",
    }
}

pub fn parse_split(value: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| parse("split", p.trim()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [train, val, test] => Ok(SplitRatios { train, val, test }),
        _ => Err(CliError::Usage(format!("split '{value}' needs three ratios"))),
    }
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.schedule;
        Some(match key {
            "epochs" => s.epochs.to_string(),
            "batch_size" => s.batch_size.to_string(),
            "patience" => s.patience.to_string(),
            "learning_rate" => format!("{:?}", s.learning_rate),
            "metric" => metric_name(s.metric).into(),
            "seed" => s.seed.to_string(),
            "normalize" => normalize_name(self.normalize).into(),
            "stride" => self.stride.to_string(),
            "split" => format!("{:?},{:?},{:?}", self.split.train, self.split.val, self.split.test),
            "max_train" => self.max_train.unwrap_or(0).to_string(),
            "precision" => self.precision.name().into(),
            other => return self.model.get(other),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.schedule;
        match key {
            "epochs" => s.epochs = parse(key, value)?,
            "batch_size" => s.batch_size = parse(key, value)?,
            "patience" => s.patience = parse(key, value)?,
            "learning_rate" => s.learning_rate = parse(key, value)?,
            "metric" => s.metric = value.parse()?,
            "seed" => s.seed = parse(key, value)?,
            "normalize" => self.normalize = value.parse()?,
            "stride" => self.stride = parse(key, value)?,
            "split" => self.split = parse_split(value)?,
            "max_train" => {
                let n: usize = parse(key, value)?;
                self.max_train = (n > 0).then_some(n);
            }
            "precision" => self.precision = value.parse().map_err(CliError::Usage)?,
            other => self.model.set(other, value)?,
        }
        Ok(())
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        self.apply_kv_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Model keys first, then run keys.
    pub fn to_kv_string(&self) -> String {
        let mut out = self.model.to_kv_string();
        for key in RUN_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let text = self.to_kv_string();
        let map = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn apply_common(&mut self, common: &Common) {
        if let Some(seed) = common.seed {
            self.schedule.seed = seed;
        }
        if let Some(p) = common.precision {
            self.precision = p;
        }
    }

    pub fn apply_model_args(&mut self, a: &ModelArgs) -> Result<()> {
        let m = &mut self.model;
        if let Some(v) = &a.variant {
            m.variant = v.clone();
        }
        if let Some(v) = &a.ablation_base {
            m.ablation_base = v.clone();
        }
        let sizes = [
            (&mut m.layers, a.layers),
            (&mut m.temporal_kernel, a.kt),
            (&mut m.spatial_kernel, a.kd),
            (&mut m.filters, a.filters),
            (&mut m.input_len, a.t_in),
            (&mut m.output_len, a.t_out),
            (&mut m.height, a.height),
            (&mut m.width, a.width),
            (&mut m.channels, a.channels),
        ];
        for (slot, v) in sizes {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(v) = a.dropout {
            m.dropout = v;
        }
        if a.no_filter_growth {
            m.filter_growth = false;
        }
        if let Some(v) = a.bn_momentum {
            m.bn_momentum = v;
        }
        Ok(())
    }

    pub fn apply_data_args(&mut self, a: &DataArgs) -> Result<()> {
        if let Some(v) = a.stride {
            self.stride = v;
        }
        if let Some(v) = &a.normalize {
            self.normalize = v.parse()?;
        }
        if let Some(v) = &a.split {
            self.split = parse_split(v)?;
        }
        Ok(())
    }

    pub fn apply_schedule_args(&mut self, a: &ScheduleArgs) -> Result<()> {
        let s = &mut self.schedule;
        if let Some(v) = a.epochs {
            s.epochs = v;
        }
        if let Some(v) = a.batch_size {
            s.batch_size = v;
        }
        if let Some(v) = a.patience {
            s.patience = v;
        }
        if let Some(v) = a.lr {
            s.learning_rate = v;
        }
        if let Some(v) = &a.metric {
            s.metric = v.parse()?;
        }
        if let Some(v) = a.max_train {
            self.max_train = (v > 0).then_some(v);
        }
        Ok(())
    }

    /// Base layer: defaults, then `--config`, then the common flags.
    pub fn resolve(base: RunConfig, model: &ModelArgs, common: &Common) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &model.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_common(common);
        cfg.apply_model_args(model)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("epochs", "7").unwrap();
        cfg.set("split", "0.5,0.25,0.25").unwrap();
        cfg.set("metric", "per-sample").unwrap();
        cfg.set("precision", "double").unwrap();
        cfg.set("filters", "4").unwrap();
        cfg.set("max_train", "12").unwrap();
        let mut back = RunConfig::default();
        back.apply_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(RunConfig::default().set("epoch", "3").is_err());
        assert!(parse_split("0.5,0.5").is_err());
    }
}
