//! Forecaster assembly from a [`ModelConfig`].
//!
//! A config is first turned into a [`ModelPlan`] by the architecture registry,
//! then the plan is instantiated into parameterized [`LayerStack`]s. The main
//! variants are a temporal block (causal or reversed strategy), a spatial
//! block, an optional generator that extends the horizon, and a `1×1×1`
//! projection back to the data channels.

mod config;
mod plan;
mod registry;
mod temporal;

use std::path::Path;

pub use config::ModelConfig;
pub use plan::{
    filter_schedule, generator_layers, same_pad, BlockKind, BlockPlan, LayerPlan, ModelPlan,
};
pub use registry::{Architecture, ArchitectureRegistry, ABLATION_TAGS};
pub use temporal::{Causal, Reversed, StrategyRegistry, Symmetric, SymmetricReversed, TemporalStrategy};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::layers::{
    init_conv, load_checkpoint, save_checkpoint, BatchNormLayer, ConvLayer, Forward, LayerStack, Mode, ParamStore,
    Unit, LEAKY_SLOPE,
};
use crate::rng::{self, streams};
use crate::tensor::{axis, PadSpec, Scalar, Tensor};

#[derive(Clone, Debug)]
enum Stage {
    Sequential(LayerStack),
    TimeReversed(LayerStack),
    Generator {
        upsample: LayerStack,
        refine: LayerStack,
        t_out: usize,
    },
    CropTime {
        t_out: usize,
    },
}

#[derive(Clone, Debug)]
struct Block {
    name: String,
    stage: Stage,
}

impl Block {
    fn stacks(&self) -> Vec<&LayerStack> {
        match &self.stage {
            Stage::Sequential(s) | Stage::TimeReversed(s) => vec![s],
            Stage::Generator { upsample, refine, .. } => vec![upsample, refine],
            Stage::CropTime { .. } => vec![],
        }
    }
}

/// An instantiated forecaster together with its parameters.
#[derive(Clone, Debug)]
pub struct Model<S> {
    config: ModelConfig,
    plan: ModelPlan,
    blocks: Vec<Block>,
    pub store: ParamStore<S>,
}

fn instantiate<S: Scalar>(
    store: &mut ParamStore<S>,
    prefix: &str,
    layers: &[LayerPlan],
    cfg: &ModelConfig,
    rng: &mut rng::RunRng,
    dropout_ids: &mut u64,
) -> Result<LayerStack> {
    let mut units = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        let name = format!("{prefix}.{i}");
        let conv = init_conv(store, &name, layer.conv.clone(), rng)?;
        let channels = conv.spec.out_channels;
        units.push(Unit::Conv(conv));
        if layer.normalized {
            units.push(Unit::Norm(BatchNormLayer::new(
                store,
                &format!("{name}.bn"),
                channels,
                cfg.bn_momentum,
            )));
            units.push(Unit::LeakyRelu { slope: LEAKY_SLOPE });
        }
        if layer.dropout {
            units.push(Unit::Dropout {
                rate: cfg.dropout,
                layer: *dropout_ids,
            });
            *dropout_ids += 1;
        }
    }
    LayerStack::new(units)
}

impl<S: Scalar> Model<S> {
    /// Builds with the built-in registry; weights are drawn from `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::build_with(&ArchitectureRegistry::builtin(), config, seed)
    }

    pub fn build_with(registry: &ArchitectureRegistry, config: &ModelConfig, seed: u64) -> Result<Self> {
        let plan = registry.plan(config)?;
        plan::check_chain(&plan, config.channels)?;
        let mut rng = rng::stream(seed, streams::INIT, 0);
        let mut store = ParamStore::new();
        let mut dropout_ids = 0;
        let mut blocks = Vec::with_capacity(plan.blocks.len());
        for bp in &plan.blocks {
            let stage = match bp.kind {
                BlockKind::Sequential => Stage::Sequential(instantiate(
                    &mut store,
                    &bp.name,
                    &bp.layers,
                    config,
                    &mut rng,
                    &mut dropout_ids,
                )?),
                BlockKind::TimeReversed => Stage::TimeReversed(instantiate(
                    &mut store,
                    &bp.name,
                    &bp.layers,
                    config,
                    &mut rng,
                    &mut dropout_ids,
                )?),
                BlockKind::Generator { upsample, t_out } => {
                    if t_out <= config.input_len {
                        return Err(Error::Config(format!(
                            "generator planned for T″ = {t_out} ≤ T = {}",
                            config.input_len
                        )));
                    }
                    let (up, refine) = bp.layers.split_at(upsample);
                    Stage::Generator {
                        upsample: instantiate(
                            &mut store,
                            &format!("{}.up", bp.name),
                            up,
                            config,
                            &mut rng,
                            &mut dropout_ids,
                        )?,
                        refine: instantiate(
                            &mut store,
                            &format!("{}.refine", bp.name),
                            refine,
                            config,
                            &mut rng,
                            &mut dropout_ids,
                        )?,
                        t_out,
                    }
                }
                BlockKind::CropTime { t_out } => Stage::CropTime { t_out },
            };
            blocks.push(Block {
                name: bp.name.clone(),
                stage,
            });
        }
        Ok(Self {
            config: config.clone(),
            plan,
            blocks,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &ModelPlan {
        &self.plan
    }

    pub fn block_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.name.as_str()).collect()
    }

    /// Convolution layers of the named block, in order.
    pub fn block_convs(&self, name: &str) -> Vec<&ConvLayer> {
        self.blocks
            .iter()
            .filter(|b| b.name == name)
            .flat_map(|b| b.stacks())
            .flat_map(|s| s.convs())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    /// How many frames past τ the output at τ may read, summed over the
    /// time-preserving blocks. Zero means causal.
    pub fn lookahead(&self) -> usize {
        let mut total = 0;
        for block in &self.blocks {
            let reversed = matches!(block.stage, Stage::TimeReversed(_));
            if let Stage::Sequential(s) | Stage::TimeReversed(s) = &block.stage {
                for conv in s.convs() {
                    let k = conv.spec.kernel[0];
                    let (before, _) = conv.spec.pad[0];
                    total += if reversed { before } else { (k - 1).saturating_sub(before) };
                }
            }
        }
        total
    }

    /// Latest input frame that output frame `j` can depend on, assuming
    /// [`lookahead`](Self::lookahead) is zero. Generated frames past `T`
    /// trace back through `l_gt` stride-2 upsamplings.
    pub fn output_support(&self, j: usize) -> usize {
        let t = self.config.input_len;
        if j < t {
            j
        } else {
            (j - t) >> self.plan.upsample_layers
        }
    }

    pub fn input_shape(&self, batch: usize) -> [usize; 5] {
        let c = &self.config;
        [batch, c.channels, c.input_len, c.height, c.width]
    }

    pub fn output_shape(&self, batch: usize) -> [usize; 5] {
        let c = &self.config;
        [batch, c.channels, c.output_len, c.height, c.width]
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 5 {
            return Err(Error::RankMismatch {
                op: "model input",
                expected: 5,
                actual: shape.len(),
            });
        }
        let expected = self.input_shape(shape[0]);
        for ax in 1..5 {
            if shape[ax] != expected[ax] {
                return Err(Error::ShapeMismatch {
                    op: "model input",
                    axis: axis::name(ax),
                    expected: expected[ax],
                    actual: shape[ax],
                });
            }
        }
        Ok(())
    }

    /// Runs every block, returning the prediction and each block's output.
    pub fn forward_traced(&mut self, f: &mut Forward<S>, x: Var) -> Result<(Var, Vec<(String, Var)>)> {
        self.check_input(f.tape.shape(x))?;
        let mut h = x;
        let mut trace = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            h = match &block.stage {
                Stage::Sequential(s) => s.forward(f, &mut self.store, h)?,
                Stage::TimeReversed(s) => {
                    let r = f.tape.reverse(h, axis::TIME)?;
                    let y = s.forward(f, &mut self.store, r)?;
                    f.tape.reverse(y, axis::TIME)?
                }
                Stage::Generator { upsample, refine, t_out } => {
                    let g = upsample.forward(f, &mut self.store, h)?;
                    let mut cat = f.tape.concat_time(h, g)?;
                    let len = f.tape.shape(cat)[axis::TIME];
                    if len > *t_out {
                        cat = f.tape.crop(cat, &PadSpec::on_axis(5, axis::TIME, 0, len - t_out))?;
                    }
                    refine.forward(f, &mut self.store, cat)?
                }
                Stage::CropTime { t_out } => {
                    let len = f.tape.shape(h)[axis::TIME];
                    f.tape.crop(h, &PadSpec::on_axis(5, axis::TIME, 0, len - t_out))?
                }
            };
            trace.push((block.name.clone(), h));
        }
        Ok((h, trace))
    }

    pub fn forward(&mut self, f: &mut Forward<S>, x: Var) -> Result<Var> {
        self.forward_traced(f, x).map(|(y, _)| y)
    }

    /// Eval-mode prediction without keeping the tape.
    pub fn predict(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut f = Forward::new(Mode::Eval);
        let xv = f.input(x.clone());
        let y = self.forward(&mut f, xv)?;
        Ok(f.tape.value(y).clone())
    }

    /// One train-mode pass over `x` to populate batch-norm running
    /// statistics; parameters are untouched.
    pub fn calibrate(&mut self, x: &Tensor<S>) -> Result<()> {
        let mut f = Forward::new(Mode::Train);
        let xv = f.input(x.clone());
        self.forward(&mut f, xv).map(|_| ())
    }

    /// Block outputs for `x` in the given mode.
    pub fn trace(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Vec<(String, Tensor<S>)>> {
        let mut f = Forward::new(mode);
        let xv = f.input(x.clone());
        let (_, trace) = self.forward_traced(&mut f, xv)?;
        Ok(trace
            .into_iter()
            .map(|(name, v)| (name, f.tape.value(v).clone()))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.store, &self.config.digest(), path)
    }

    /// Loads parameters and statistics; the checkpoint must carry this
    /// model's config digest.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        load_checkpoint(&mut self.store, &self.config.digest(), path)
    }
}
