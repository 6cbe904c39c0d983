//! RMSprop, mini-batch training with early stopping, and the persistence
//! baseline.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::layers::{Forward, Mode, ParamStore};
use crate::metrics::{ErrorAccumulator, EvalResult, Normalization};
use crate::model::Model;
use crate::rng::{self, streams};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_DECAY: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_PATIENCE: usize = 16;
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// `avg ← decay·avg + (1 − decay)·g²; θ ← θ − lr·g / (√avg + ε)`
#[derive(Clone, Debug)]
pub struct RmsProp<S> {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    avg: Vec<Tensor<S>>,
}

impl<S: Scalar> RmsProp<S> {
    pub fn new(store: &ParamStore<S>, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            avg: store.ids().map(|id| Tensor::zeros(store.value(id).shape())).collect(),
        }
    }

    pub fn averages(&self) -> &[Tensor<S>] {
        &self.avg
    }

    /// Applies the accumulated gradients in `store`. A non-finite gradient
    /// aborts the step before anything is changed.
    pub fn step(&mut self, store: &mut ParamStore<S>) -> Result<()> {
        if !store.grads_finite() {
            return Err(Error::NonFinite("gradient; optimizer step skipped".into()));
        }
        let decay = S::from_f64_lossy(self.decay);
        let keep = S::one() - decay;
        let lr = S::from_f64_lossy(self.learning_rate);
        let eps = S::from_f64_lossy(self.epsilon);
        let ids: Vec<_> = store.ids().collect();
        for (id, avg) in ids.into_iter().zip(&mut self.avg) {
            let (value, grad) = store.value_and_grad_mut(id);
            for ((p, a), &g) in value.data_mut().iter_mut().zip(avg.data_mut()).zip(grad.data()) {
                *a = decay * *a + keep * g * g;
                *p = *p - lr * g / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub metric: Normalization,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: DEFAULT_BATCH_SIZE,
            patience: DEFAULT_PATIENCE,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            metric: Normalization::PerElement,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EpochBudget,
    EarlyStopping,
    Diverged,
    Hook,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            Self::EpochBudget => "epoch-budget",
            Self::EarlyStopping => "early-stopping",
            Self::Diverged => "diverged",
            Self::Hook => "hook",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training MSE in model units.
    pub train_loss: f64,
    /// Validation metrics in original data units.
    pub val_rmse: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were retained.
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub stop: StopReason,
    pub skipped_steps: usize,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_rmse,val_mae,seconds";

    /// With `timings` off the seconds column is left empty, so the file
    /// only depends on the seed, config and data.
    pub fn to_csv(&self, timings: bool) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            let secs = if timings { format!("{:.3}", r.seconds) } else { String::new() };
            writeln!(
                out,
                "{},{:e},{:e},{:e},{secs}",
                r.epoch, r.train_loss, r.val_rmse, r.val_mae
            )
            .expect("write to string");
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for r in &self.epochs {
            writeln!(out, "{},{:.6}", r.epoch, r.seconds).expect("write to string");
        }
        out
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|r| r.seconds).sum()
    }
}

/// Mean-squared-error step over one batch; returns the loss.
fn train_batch<S: Scalar>(
    model: &mut Model<S>,
    opt: &mut RmsProp<S>,
    x: Tensor<S>,
    y: &Tensor<S>,
    seed: u64,
    step: u64,
) -> Result<(f64, bool)> {
    let mut f = Forward::with_rng(Mode::Train, seed, step);
    let xv = f.input(x);
    let pred = model.forward(&mut f, xv)?;
    let loss = f.tape.mse(pred, y)?;
    let value = f.tape.value(loss).data()[0].to_f64_lossy();
    if !value.is_finite() {
        return Ok((value, false));
    }
    let grads = f.tape.backward(loss)?;
    model.store.zero_grad();
    model.store.accumulate(&grads)?;
    match opt.step(&mut model.store) {
        Ok(()) => Ok((value, true)),
        Err(Error::NonFinite(msg)) => {
            log::warn!("step {step}: non-finite {msg}");
            Ok((value, false))
        }
        Err(e) => Err(e),
    }
}

/// Eval-mode metrics of `model` on `windows`, in original data units.
pub fn evaluate<S: Scalar>(
    model: &mut Model<S>,
    data: &WindowedDataset,
    windows: &[usize],
    batch_size: usize,
    metric: Normalization,
) -> Result<EvalResult> {
    let mut acc = ErrorAccumulator::new();
    for chunk in windows.chunks(batch_size.max(1)) {
        let (x, y) = data.batch::<S>(chunk)?;
        let pred = model.predict(&x)?;
        let norm = data.normalizer();
        acc.add(&norm.invert(&pred), &norm.invert(&y))?;
    }
    acc.finish(metric)
}

/// Trains until the epoch budget is spent or validation RMSE has not
/// strictly improved for `patience` epochs, then restores the parameters of
/// the best epoch. A non-finite training loss ends the run early with
/// [`StopReason::Diverged`] and the epochs completed so far.
pub fn train<S: Scalar>(model: &mut Model<S>, data: &WindowedDataset, schedule: &Schedule) -> Result<TrainReport> {
    train_with(model, data, schedule, |_, _| Ok(false))
}

/// [`train`] with a hook run after every epoch; returning `true` ends the
/// run with [`StopReason::Hook`].
pub fn train_with<S: Scalar>(
    model: &mut Model<S>,
    data: &WindowedDataset,
    schedule: &Schedule,
    mut after_epoch: impl FnMut(&mut Model<S>, &EpochRecord) -> Result<bool>,
) -> Result<TrainReport> {
    let split = data.split().clone();
    if schedule.epochs == 0 || schedule.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    if schedule.batch_size > split.train.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds {} training windows",
            schedule.batch_size,
            split.train.len()
        )));
    }
    let mut opt = RmsProp::new(&model.store, schedule.learning_rate);
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, _)> = None;
    let mut since_best = 0;
    let mut step = 0u64;
    let mut skipped = 0;
    let mut stop = StopReason::EpochBudget;
    for epoch in 1..=schedule.epochs {
        let started = Instant::now();
        let mut order = split.train.clone();
        order.shuffle(&mut rng::stream(schedule.seed, streams::SHUFFLE, epoch as u64));
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut diverged = false;
        for chunk in order.chunks(schedule.batch_size) {
            let (x, y) = data.batch::<S>(chunk)?;
            let (loss, applied) = train_batch(model, &mut opt, x, &y, schedule.seed, step)?;
            step += 1;
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            skipped += usize::from(!applied);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        if diverged {
            log::error!("epoch {epoch}: training loss is not finite; stopping");
            stop = StopReason::Diverged;
            break;
        }
        let val = evaluate(model, data, &split.val, schedule.batch_size, schedule.metric)?;
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_rmse: val.rmse,
            val_mae: val.mae,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train loss {:.6}, val rmse {:.6}, val mae {:.6}",
            loss_sum / seen as f64,
            val.rmse,
            val.mae
        );
        if best.as_ref().is_none_or(|(_, b, _)| val.rmse < *b) {
            best = Some((epoch, val.rmse, model.store.snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if after_epoch(model, records.last().expect("just pushed"))? {
            stop = StopReason::Hook;
            break;
        }
        if since_best >= schedule.patience {
            stop = StopReason::EarlyStopping;
            break;
        }
    }
    let (best_epoch, best_val_rmse) = match best {
        Some((epoch, rmse, snapshot)) => {
            model.store.restore(&snapshot)?;
            (epoch, rmse)
        }
        None => (0, f64::NAN),
    };
    Ok(TrainReport {
        epochs: records,
        best_epoch,
        best_val_rmse,
        stop,
        skipped_steps: skipped,
    })
}

/// Repeats the last input frame for every output step.
pub fn persistence_forecast<S: Scalar>(x: &Tensor<S>, t_out: usize) -> Result<Tensor<S>> {
    let [n, c, t, h, w] = x.dims5("persistence")?;
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, c, t_out, h, w]);
    let src = x.data();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let p = i % plane;
        let nc = i / (plane * t_out);
        *v = src[(nc * t + t - 1) * plane + p];
    }
    Ok(out)
}

/// Persistence metrics on `windows`, in original data units.
pub fn persistence_baseline(
    data: &WindowedDataset,
    windows: &[usize],
    batch_size: usize,
    metric: Normalization,
) -> Result<EvalResult> {
    let mut acc = ErrorAccumulator::new();
    let t_out = data.spec().output_len;
    for chunk in windows.chunks(batch_size.max(1)) {
        let (x, y) = data.batch::<f64>(chunk)?;
        let norm = data.normalizer();
        acc.add(&norm.invert(&persistence_forecast(&x, t_out)?), &norm.invert(&y))?;
    }
    acc.finish(metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn persistence_repeats_last_frame() {
        let x = Tensor::<f64>::from_fn(&[2, 1, 3, 1, 2], |i| i as f64).unwrap();
        let p = persistence_forecast(&x, 2).unwrap();
        assert_eq!(p.shape(), &[2, 1, 2, 1, 2]);
        assert_eq!(p.data(), &[4.0, 5.0, 4.0, 5.0, 10.0, 11.0, 10.0, 11.0]);
    }
}
