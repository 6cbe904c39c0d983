//! Central finite-difference checks of the tape's gradients, in double
//! precision.
//!
//! Every op is reduced to a scalar through a fixed random weighting, so each
//! output element contributes to the checked gradient.

use rand::Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Forward, Mode};
use crate::model::{Model, ModelConfig};
use crate::rng::{self, RunRng};
use crate::tensor::{axis, ConvGeometry, PadSpec, Tensor};

/// Step of the central difference.
pub const STEP: f64 = 1e-6;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, ABS_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

type Builder<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

fn scalar_loss(build: &Builder, inputs: &[Tensor<f64>], weights: &Tensor<f64>) -> Result<(Tape<f64>, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars)?;
    let loss = if tape.value(out).numel() == 1 {
        out
    } else {
        tape.weighted_sum(out, weights.clone())?
    };
    Ok((tape, vars, loss))
}

/// Checks every coordinate of every input of the op built by `build`.
pub fn check_op(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    build: &Builder,
    rng: &mut impl Rng,
) -> Result<GradCheck> {
    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &vars)?;
        tape.value(out).shape().to_vec()
    };
    let weights = Tensor::from_fn(&probe, |_| rng.gen_range(-1.0..1.0))?;
    let (tape, vars, loss) = scalar_loss(build, &inputs, &weights)?;
    let grads = tape.backward(loss)?;
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let (tape, _, loss) = scalar_loss(build, inputs, &weights)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut worst = 0.0f64;
    let mut coordinates = 0;
    let mut work = inputs.clone();
    for (k, var) in vars.iter().enumerate() {
        let zero = Tensor::zeros(work[k].shape());
        let analytic = grads.get(*var).unwrap_or(&zero).clone();
        for i in 0..work[k].numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
            coordinates += 1;
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        coordinates,
        max_rel_error: worst,
        tolerance: OP_TOLERANCE,
    })
}

fn uniform(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-2.0..2.0)).expect("positive extents")
}

/// Uniform in `[−2, 2]` but at least `gap` away from zero.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(gap..2.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .expect("positive extents")
}

/// Runs the check for every differentiable op on small random inputs.
pub fn check_all_ops(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = rng::stream(seed, rng::streams::PROBE, 1);
    let r = &mut rng;
    let mut out = Vec::new();

    let geom = ConvGeometry::with_pad([(1, 0), (1, 1), (0, 1)]).with_stride([1, 2, 1]);
    out.push(check_op(
        "conv3d",
        vec![uniform(r, &[2, 2, 3, 4, 3]), uniform(r, &[3, 2, 2, 3, 2]), uniform(r, &[3])],
        &|t, v| t.conv3d(v[0], v[1], Some(v[2]), &geom),
        r,
    )?);
    let tgeom = ConvGeometry::with_pad([(0, 0), (1, 0), (0, 0)]).with_stride([2, 2, 1]);
    out.push(check_op(
        "conv_transpose3d",
        vec![uniform(r, &[2, 2, 3, 3, 2]), uniform(r, &[2, 3, 2, 3, 2]), uniform(r, &[3])],
        &|t, v| t.conv_transpose3d(v[0], v[1], Some(v[2]), &tgeom, [1, 1, 0]),
        r,
    )?);
    let spec = PadSpec::none(5).with(axis::TIME, 2, 0).with(axis::WIDTH, 1, 1);
    out.push(check_op("pad", vec![uniform(r, &[2, 1, 3, 2, 2])], &|t, v| t.pad(v[0], &spec), r)?);
    let crop = PadSpec::none(5).with(axis::TIME, 0, 2).with(axis::HEIGHT, 1, 0);
    out.push(check_op("crop", vec![uniform(r, &[2, 1, 5, 3, 2])], &|t, v| t.crop(v[0], &crop), r)?);
    out.push(check_op(
        "reverse",
        vec![uniform(r, &[2, 1, 4, 2, 2])],
        &|t, v| t.reverse(v[0], axis::TIME),
        r,
    )?);
    out.push(check_op(
        "concat_time",
        vec![uniform(r, &[2, 2, 3, 2, 2]), uniform(r, &[2, 2, 2, 2, 2])],
        &|t, v| t.concat_time(v[0], v[1]),
        r,
    )?);
    out.push(check_op(
        "leaky_relu",
        vec![away_from_zero(r, &[2, 2, 3, 2, 2], 0.05)],
        &|t, v| t.leaky_relu(v[0], 0.01),
        r,
    )?);
    out.push(check_op(
        "batch_norm",
        vec![uniform(r, &[3, 2, 2, 2, 2]), uniform(r, &[2]), uniform(r, &[2])],
        &|t, v| t.batch_norm(v[0], v[1], v[2], None, 1e-5).map(|(y, _)| y),
        r,
    )?);
    let running_mean = [0.3, -0.2];
    let running_var = [1.5, 0.7];
    out.push(check_op(
        "batch_norm_eval",
        vec![uniform(r, &[2, 2, 2, 2, 2]), uniform(r, &[2]), uniform(r, &[2])],
        &|t, v| {
            t.batch_norm(v[0], v[1], v[2], Some((&running_mean, &running_var)), 1e-5)
                .map(|(y, _)| y)
        },
        r,
    )?);
    out.push(check_op(
        "dropout",
        vec![uniform(r, &[2, 2, 3, 2, 2])],
        &|t, v| {
            let mut mask_rng: RunRng = rng::stream(seed, rng::streams::DROPOUT_BASE, 0);
            t.dropout(v[0], 0.5, &mut mask_rng)
        },
        r,
    )?);
    out.push(check_op(
        "add",
        vec![uniform(r, &[2, 3]), uniform(r, &[2, 3])],
        &|t, v| t.add(v[0], v[1]),
        r,
    )?);
    out.push(check_op(
        "mul",
        vec![uniform(r, &[2, 3]), uniform(r, &[2, 3])],
        &|t, v| t.mul(v[0], v[1]),
        r,
    )?);
    out.push(check_op("sum", vec![uniform(r, &[2, 3, 2])], &|t, v| Ok(t.sum(v[0])), r)?);
    let target = uniform(r, &[2, 1, 3, 2, 2]);
    out.push(check_op(
        "mse_loss",
        vec![uniform(r, &[2, 1, 3, 2, 2])],
        &|t, v| t.mse(v[0], &target),
        r,
    )?);
    Ok(out)
}

/// Checks `params` randomly chosen parameter coordinates of a full model
/// against the train-mode MSE loss on random data.
pub fn check_model(config: &ModelConfig, seed: u64, params: usize, batch: usize) -> Result<GradCheck> {
    let mut model = Model::<f64>::build(config, seed)?;
    if model.store.is_empty() {
        return Err(Error::Config("model has no parameters".into()));
    }
    let mut rng = rng::stream(seed, rng::streams::PROBE, 2);
    let x = uniform(&mut rng, &model.input_shape(batch));
    let y = uniform(&mut rng, &model.output_shape(batch));

    let loss_of = |model: &mut Model<f64>, backward: bool| -> Result<(f64, Option<Gradients<f64>>)> {
        let mut f = Forward::new(Mode::Train);
        let xv = f.input(x.clone());
        let pred = model.forward(&mut f, xv)?;
        let loss = f.tape.mse(pred, &y)?;
        let value = f.tape.value(loss).data()[0];
        let grads = if backward { Some(f.tape.backward(loss)?) } else { None };
        Ok((value, grads))
    };

    let (_, grads) = loss_of(&mut model, true)?;
    model.store.zero_grad();
    model.store.accumulate(&grads.expect("requested"))?;
    let ids: Vec<_> = model.store.ids().collect();
    let mut worst = 0.0f64;
    for _ in 0..params {
        let id = ids[rng.gen_range(0..ids.len())];
        let i = rng.gen_range(0..model.store.value(id).numel());
        let analytic = model.store.grad(id).data()[i];
        let orig = model.store.value(id).data()[i];
        model.store.value_mut(id).data_mut()[i] = orig + STEP;
        let (plus, _) = loss_of(&mut model, false)?;
        model.store.value_mut(id).data_mut()[i] = orig - STEP;
        let (minus, _) = loss_of(&mut model, false)?;
        model.store.value_mut(id).data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        worst = worst.max(relative_error(analytic, numeric));
    }
    Ok(GradCheck {
        name: format!("model:{}", config.variant),
        coordinates: params,
        max_rel_error: worst,
        tolerance: MODEL_TOLERANCE,
    })
}
