//! Randomized leakage probes.
//!
//! A probe picks a protected frame τ, perturbs one input element at a later
//! frame and compares two eval-mode runs: the first block's output at frames
//! ≤ τ, and every prediction frame whose support (see
//! [`Model::output_support`]) is ≤ τ, must not change at all.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{Model, ModelConfig};
use crate::rng::{self, streams};
use crate::tensor::{axis, Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct ProbeSettings {
    pub models: usize,
    /// Perturbation positions per model.
    pub positions: usize,
    pub batch: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            models: 5,
            positions: 20,
            batch: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub model: usize,
    pub protected: usize,
    /// Perturbed element as `(frame, channel, h, w)`.
    pub perturbed: (usize, usize, usize, usize),
    pub block_deviation: f64,
    pub output_deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub variant: String,
    /// Block whose output was checked alongside the prediction.
    pub block: String,
    pub records: Vec<ProbeRecord>,
}

impl ProbeReport {
    pub fn max_deviation(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.block_deviation.max(r.output_deviation))
            .fold(0.0, f64::max)
    }

    pub fn violations(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.block_deviation != 0.0 || r.output_deviation != 0.0)
            .count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

/// Largest `|a − b|` over the time frames selected by `keep`.
fn leading_deviation<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, keep: impl Fn(usize) -> bool) -> f64 {
    let shape = a.shape();
    let t_len = shape[axis::TIME];
    let inner: usize = shape[axis::HEIGHT] * shape[axis::WIDTH];
    let mut worst = 0.0f64;
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        if keep((i / inner) % t_len) {
            worst = worst.max((x - y).abs().to_f64_lossy());
        }
    }
    worst
}

fn random_input<S: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<S> {
    Tensor::from_fn(shape, |_| S::from_f64_lossy(rng.gen_range(-1.0..1.0))).expect("positive extents")
}

pub fn probe_causality<S: Scalar>(config: &ModelConfig, seed: u64, settings: ProbeSettings) -> Result<ProbeReport> {
    if config.input_len < 2 {
        return Err(Error::Config("causality probes need at least two input frames".into()));
    }
    let mut rng = rng::stream(seed, streams::PROBE, 0);
    let mut records = Vec::with_capacity(settings.models * settings.positions);
    let mut block_name = String::new();
    for m in 0..settings.models {
        let mut model = Model::<S>::build(config, seed.wrapping_add(m as u64))?;
        let shape = model.input_shape(settings.batch);
        model.calibrate(&random_input(&shape, &mut rng))?;
        block_name = model.block_names()[0].to_string();
        for _ in 0..settings.positions {
            let x: Tensor<S> = random_input(&shape, &mut rng);
            let protected = rng.gen_range(0..config.input_len - 1);
            let frame = rng.gen_range(protected + 1..config.input_len);
            let channel = rng.gen_range(0..config.channels);
            let h = rng.gen_range(0..config.height);
            let w = rng.gen_range(0..config.width);
            let bump = rng.gen_range(1.0..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut xp = x.clone();
            for n in 0..settings.batch {
                let idx = [n, channel, frame, h, w];
                xp.set(&idx, x.get(&idx) + S::from_f64_lossy(bump));
            }
            let a = model.trace(&x, Mode::Eval)?;
            let b = model.trace(&xp, Mode::Eval)?;
            let block_deviation = leading_deviation(&a[0].1, &b[0].1, |t| t <= protected);
            let (ya, yb) = (&a[a.len() - 1].1, &b[b.len() - 1].1);
            let output_deviation = leading_deviation(ya, yb, |j| model.output_support(j) <= protected);
            records.push(ProbeRecord {
                model: m,
                protected,
                perturbed: (frame, channel, h, w),
                block_deviation,
                output_deviation,
            });
        }
    }
    Ok(ProbeReport {
        variant: config.variant.clone(),
        block: block_name,
        records,
    })
}
