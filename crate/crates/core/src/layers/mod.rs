//! Stateful layers over the autodiff tape: convolution, batch norm,
//! activation and dropout units, grouped into validated [`LayerStack`]s whose
//! parameters live in a shared [`ParamStore`].

mod checkpoint;
mod store;

use std::collections::HashMap;

use rand::Rng;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use store::{BufferId, ParamId, ParamStore, StoreSnapshot};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{self, streams, RunRng};
use crate::tensor::{axis, ConvGeometry, PadSpec, Scalar, Tensor};

/// Negative slope of every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward pass: the tape plus the parameter leaves registered on it.
pub struct Forward<S> {
    pub tape: Tape<S>,
    vars: HashMap<ParamId, Var>,
    mode: Mode,
    seed: u64,
    step: u64,
}

impl<S: Scalar> Forward<S> {
    pub fn new(mode: Mode) -> Self {
        Self::with_rng(mode, 0, 0)
    }

    /// `seed` and `step` address the dropout mask streams.
    pub fn with_rng(mode: Mode, seed: u64, step: u64) -> Self {
        Self {
            tape: Tape::new(),
            vars: HashMap::new(),
            mode,
            seed,
            step,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        if let Some(&v) = self.vars.get(&id) {
            return v;
        }
        let v = self.tape.param(id.index(), store.value(id).clone());
        self.vars.insert(id, v);
        v
    }

    pub fn input(&mut self, x: Tensor<S>) -> Var {
        self.tape.leaf(x, false)
    }

    fn dropout_rng(&self, layer: u64) -> RunRng {
        rng::stream(self.seed, streams::DROPOUT_BASE + layer, self.step)
    }
}

/// Which factorization a kernel belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelClass {
    /// `t × 1 × 1`
    Temporal,
    /// `1 × d × d`
    Spatial,
    /// `t × d × d`
    Full,
}

impl KernelClass {
    pub fn of(kernel: [usize; 3]) -> Option<Self> {
        let [t, h, w] = kernel;
        match (t, h, w) {
            (_, 1, 1) => Some(KernelClass::Temporal),
            (1, h, w) if h == w => Some(KernelClass::Spatial),
            (_, h, w) if h == w => Some(KernelClass::Full),
            _ => None,
        }
    }
}

/// Shape and placement of one convolution, independent of its weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [(usize, usize); 3],
    /// Trimmed from the output after the convolution.
    pub crop: [(usize, usize); 3],
    /// `Some(output_pad)` for a transposed convolution.
    pub transposed: Option<[usize; 3]>,
    /// Apply the kernel flipped along time (a true convolution in time).
    pub flip_time: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: [1; 3],
            pad: [(0, 0); 3],
            crop: [(0, 0); 3],
            transposed: None,
            flip_time: false,
        }
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        let [kt, kh, kw] = self.kernel;
        match self.transposed {
            Some(_) => [self.in_channels, self.out_channels, kt, kh, kw],
            None => [self.out_channels, self.in_channels, kt, kh, kw],
        }
    }

    /// `Cout·Cin·kt·kh·kw + Cout`
    pub fn parameter_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.out_channels
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub class: KernelClass,
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Uniform `±sqrt(1/fan_in)` weights with `fan_in = shape[1]·kt·kh·kw`, zero bias.
pub fn init_conv<S: Scalar>(
    store: &mut ParamStore<S>,
    name: &str,
    spec: ConvSpec,
    rng: &mut impl Rng,
) -> Result<ConvLayer> {
    let shape = spec.weight_shape();
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "convolution extents must be positive".into(),
        });
    }
    let class = KernelClass::of(spec.kernel).ok_or_else(|| {
        Error::Config(format!(
            "kernel {:?} of {name} is neither temporal, spatial nor full",
            spec.kernel
        ))
    })?;
    let bound = init_bound(&shape);
    let weight = Tensor::from_fn(&shape, |_| S::from_f64_lossy(rng.gen_range(-bound..=bound)))?;
    let bias = Tensor::zeros(&[spec.out_channels]);
    Ok(ConvLayer {
        weight: store.add_param(format!("{name}.weight"), weight),
        bias: store.add_param(format!("{name}.bias"), bias),
        class,
        spec,
    })
}

pub fn init_bound(weight_shape: &[usize]) -> f64 {
    let fan_in: usize = weight_shape[1..].iter().product();
    (1.0 / fan_in as f64).sqrt()
}

impl ConvLayer {
    pub fn forward<S: Scalar>(&self, f: &mut Forward<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let mut w = f.param(store, self.weight);
        let b = f.param(store, self.bias);
        if self.spec.flip_time {
            w = f.tape.reverse(w, axis::TIME)?;
        }
        let pad = PadSpec::new(self.spec.pad.to_vec());
        let geom = ConvGeometry::new(self.spec.stride, &pad)?;
        let y = match self.spec.transposed {
            Some(op) => f.tape.conv_transpose3d(x, w, Some(b), &geom, op)?,
            None => f.tape.conv3d(x, w, Some(b), &geom)?,
        };
        if self.spec.crop.iter().all(|&(b, a)| b == 0 && a == 0) {
            return Ok(y);
        }
        let crop = PadSpec::none(5)
            .with(axis::TIME, self.spec.crop[0].0, self.spec.crop[0].1)
            .with(axis::HEIGHT, self.spec.crop[1].0, self.spec.crop[1].1)
            .with(axis::WIDTH, self.spec.crop[2].0, self.spec.crop[2].1);
        f.tape.crop(y, &crop)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormLayer {
    pub name: String,
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    /// Number of batches folded into the running statistics.
    pub tracked: BufferId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormLayer {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize, momentum: f64) -> Self {
        Self {
            name: name.to_string(),
            channels,
            gamma: store.add_param(format!("{name}.gamma"), Tensor::full(&[channels], S::one())),
            beta: store.add_param(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], S::one())),
            tracked: store.add_buffer(format!("{name}.tracked"), Tensor::zeros(&[1])),
            momentum,
            eps: BN_EPSILON,
        }
    }

    pub fn forward<S: Scalar>(&self, f: &mut Forward<S>, store: &mut ParamStore<S>, x: Var) -> Result<Var> {
        let gamma = f.param(store, self.gamma);
        let beta = f.param(store, self.beta);
        let eps = S::from_f64_lossy(self.eps);
        match f.mode() {
            Mode::Train => {
                let (y, stats) = f.tape.batch_norm(x, gamma, beta, None, eps)?;
                let stats = stats.expect("train mode returns batch statistics");
                let m = S::from_f64_lossy(self.momentum);
                let keep = S::one() - m;
                let mean = store.buffer_mut(self.running_mean);
                for (r, &b) in mean.data_mut().iter_mut().zip(&stats.mean) {
                    *r = keep * *r + m * b;
                }
                let var = store.buffer_mut(self.running_var);
                for (r, &b) in var.data_mut().iter_mut().zip(&stats.var_unbiased) {
                    *r = keep * *r + m * b;
                }
                let tracked = store.buffer_mut(self.tracked);
                tracked.data_mut()[0] = tracked.data()[0] + S::one();
                Ok(y)
            }
            Mode::Eval => {
                if store.buffer(self.tracked).data()[0] == S::zero() {
                    return Err(Error::UninitializedStatistics(self.name.clone()));
                }
                let mean = store.buffer(self.running_mean).data().to_vec();
                let var = store.buffer(self.running_var).data().to_vec();
                let (y, _) = f.tape.batch_norm(x, gamma, beta, Some((&mean, &var)), eps)?;
                Ok(y)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Unit {
    Conv(ConvLayer),
    Norm(BatchNormLayer),
    LeakyRelu { slope: f64 },
    Dropout { rate: f64, layer: u64 },
}

impl Unit {
    fn label(&self) -> String {
        match self {
            Unit::Conv(c) => format!("conv {:?}", c.spec.kernel),
            Unit::Norm(n) => format!("batch norm {}", n.name),
            Unit::LeakyRelu { .. } => "leaky relu".into(),
            Unit::Dropout { .. } => "dropout".into(),
        }
    }

    fn expected_channels(&self) -> Option<usize> {
        match self {
            Unit::Conv(c) => Some(c.spec.in_channels),
            Unit::Norm(n) => Some(n.channels),
            _ => None,
        }
    }

    fn output_channels(&self, input: usize) -> usize {
        match self {
            Unit::Conv(c) => c.spec.out_channels,
            _ => input,
        }
    }
}

/// An ordered list of units with a validated channel chain.
#[derive(Clone, Debug, Default)]
pub struct LayerStack {
    units: Vec<Unit>,
    in_channels: Option<usize>,
    out_channels: Option<usize>,
}

impl LayerStack {
    /// Validates that consecutive units agree on channel counts.
    pub fn new(units: Vec<Unit>) -> Result<Self> {
        let mut channels: Option<usize> = None;
        let mut first = None;
        for (index, unit) in units.iter().enumerate() {
            if let Some(expected) = unit.expected_channels() {
                match channels {
                    Some(actual) if actual != expected => {
                        return Err(Error::ChannelChain {
                            index,
                            unit: unit.label(),
                            expected,
                            actual,
                        })
                    }
                    None => first = Some(expected),
                    _ => {}
                }
                channels = Some(expected);
            }
            if let Some(c) = channels {
                channels = Some(unit.output_channels(c));
            }
        }
        Ok(Self {
            units,
            in_channels: first,
            out_channels: channels,
        })
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn in_channels(&self) -> Option<usize> {
        self.in_channels
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.out_channels
    }

    pub fn convs(&self) -> impl Iterator<Item = &ConvLayer> {
        self.units.iter().filter_map(|u| match u {
            Unit::Conv(c) => Some(c),
            _ => None,
        })
    }

    /// Parameters in registry order: `(weight, bias)` per conv, `(γ, β)` per norm.
    pub fn parameters(&self) -> Vec<ParamId> {
        self.units
            .iter()
            .flat_map(|u| match u {
                Unit::Conv(c) => vec![c.weight, c.bias],
                Unit::Norm(n) => vec![n.gamma, n.beta],
                _ => vec![],
            })
            .collect()
    }

    pub fn forward<S: Scalar>(&self, f: &mut Forward<S>, store: &mut ParamStore<S>, x: Var) -> Result<Var> {
        let mut h = x;
        for (index, unit) in self.units.iter().enumerate() {
            if let Some(expected) = unit.expected_channels() {
                let actual = f.tape.shape(h).get(axis::CHANNEL).copied().unwrap_or(0);
                if actual != expected {
                    return Err(Error::ChannelChain {
                        index,
                        unit: unit.label(),
                        expected,
                        actual,
                    });
                }
            }
            h = match unit {
                Unit::Conv(c) => c.forward(f, store, h)?,
                Unit::Norm(n) => n.forward(f, store, h)?,
                Unit::LeakyRelu { slope } => f.tape.leaky_relu(h, S::from_f64_lossy(*slope))?,
                Unit::Dropout { rate, layer } => match f.mode() {
                    Mode::Eval => h,
                    Mode::Train if *rate == 0.0 => h,
                    Mode::Train => {
                        let mut r = f.dropout_rng(*layer);
                        f.tape.dropout(h, *rate, &mut r)?
                    }
                },
            };
        }
        Ok(h)
    }
}
