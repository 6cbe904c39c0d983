use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::BN_MOMENTUM;

/// Declarative description of a forecaster.
///
/// `variant` names an entry of the architecture registry (`causal`,
/// `reversed`, or an ablation tag). Ablations that keep a temporal block use
/// `ablation_base` to pick its causality strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: String,
    pub ablation_base: String,
    /// Layers per temporal/spatial block (L).
    pub layers: usize,
    /// Temporal kernel size (t).
    pub temporal_kernel: usize,
    /// Spatial kernel size (d), odd.
    pub spatial_kernel: usize,
    /// Base filter count (F).
    pub filters: usize,
    /// Input sequence length (T).
    pub input_len: usize,
    /// Output sequence length (T″).
    pub output_len: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub dropout: f64,
    pub filter_growth: bool,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: "reversed".into(),
            ablation_base: "reversed".into(),
            layers: 3,
            temporal_kernel: 5,
            spatial_kernel: 5,
            filters: 32,
            input_len: 5,
            output_len: 5,
            channels: 1,
            height: 32,
            width: 32,
            dropout: 0.0,
            filter_growth: true,
            bn_momentum: BN_MOMENTUM,
        }
    }
}

const KEYS: [&str; 14] = [
    "variant",
    "ablation_base",
    "layers",
    "temporal_kernel",
    "spatial_kernel",
    "filters",
    "input_len",
    "output_len",
    "channels",
    "height",
    "width",
    "dropout",
    "filter_growth",
    "bn_momentum",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = '{value}'")))
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("temporal_kernel", self.temporal_kernel),
            ("spatial_kernel", self.spatial_kernel),
            ("filters", self.filters),
            ("input_len", self.input_len),
            ("output_len", self.output_len),
            ("channels", self.channels),
            ("height", self.height),
            ("width", self.width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.spatial_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "spatial kernel {} must be odd so the same-size padding (d-1)/2 is integral",
                self.spatial_kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config(format!("bn_momentum {} outside [0, 1]", self.bn_momentum)));
        }
        Ok(())
    }

    /// Canonical flat `key = value` form; the digest is taken over this text.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.clone(),
            "ablation_base" => self.ablation_base.clone(),
            "layers" => self.layers.to_string(),
            "temporal_kernel" => self.temporal_kernel.to_string(),
            "spatial_kernel" => self.spatial_kernel.to_string(),
            "filters" => self.filters.to_string(),
            "input_len" => self.input_len.to_string(),
            "output_len" => self.output_len.to_string(),
            "channels" => self.channels.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "dropout" => format!("{:?}", self.dropout),
            "filter_growth" => self.filter_growth.to_string(),
            "bn_momentum" => format!("{:?}", self.bn_momentum),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = value.to_string(),
            "ablation_base" => self.ablation_base = value.to_string(),
            "layers" => self.layers = parse(key, value)?,
            "temporal_kernel" => self.temporal_kernel = parse(key, value)?,
            "spatial_kernel" => self.spatial_kernel = parse(key, value)?,
            "filters" => self.filters = parse(key, value)?,
            "input_len" => self.input_len = parse(key, value)?,
            "output_len" => self.output_len = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "filter_growth" => self.filter_growth = parse(key, value)?,
            "bn_momentum" => self.bn_momentum = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored; keys not listed keep their current value.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_kv_string().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}
