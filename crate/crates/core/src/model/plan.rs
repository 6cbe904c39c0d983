//! Precision-independent description of a model: blocks of layers with their
//! convolution geometry, derived from a [`ModelConfig`].

use crate::error::{Error, Result};
use crate::layers::ConvSpec;

use super::config::ModelConfig;
use super::temporal::TemporalStrategy;

/// One convolution plus what follows it inside its block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPlan {
    pub conv: ConvSpec,
    /// Batch norm then LeakyReLU after the convolution.
    pub normalized: bool,
    pub dropout: bool,
}

impl LayerPlan {
    pub fn plain(conv: ConvSpec) -> Self {
        Self {
            conv,
            normalized: false,
            dropout: false,
        }
    }

    pub fn activated(conv: ConvSpec, dropout: bool) -> Self {
        Self {
            conv,
            normalized: true,
            dropout,
        }
    }

    /// Weights and biases plus γ/β when normalized.
    pub fn parameter_count(&self) -> usize {
        let norm = if self.normalized { 2 * self.conv.out_channels } else { 0 };
        self.conv.parameter_count() + norm
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    /// Layers applied in order.
    Sequential,
    /// Time reversed before the first layer and after the last.
    TimeReversed,
    /// The first `upsample` layers are transposed convolutions applied to the
    /// block input; their output is appended to the input along time, cropped
    /// to `t_out` frames and passed through the remaining layers.
    Generator { upsample: usize, t_out: usize },
    /// Keeps the first `t_out` frames.
    CropTime { t_out: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockPlan {
    pub name: String,
    pub kind: BlockKind,
    pub layers: Vec<LayerPlan>,
}

impl BlockPlan {
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerPlan::parameter_count).sum()
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.layers.last().map(|l| l.conv.out_channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPlan {
    pub blocks: Vec<BlockPlan>,
    /// Transposed-conv layers in the generator, 0 when it is bypassed.
    pub upsample_layers: usize,
}

impl ModelPlan {
    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(BlockPlan::parameter_count).sum()
    }

    pub fn block(&self, name: &str) -> Option<&BlockPlan> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Output channels of layers `1..=L`: `F·2^i` for `i < L` and `F` for the
/// last layer when `growth` is on, `F` throughout otherwise.
pub fn filter_schedule(filters: usize, layers: usize, growth: bool) -> Vec<usize> {
    (1..=layers)
        .map(|i| if growth && i < layers { filters << i } else { filters })
        .collect()
}

/// Generator layer counts `(l_gt, l_gc)` for `t_out > t_in`:
/// `l_gt = ceil((T″−T)/(2T))` transposed convolutions and
/// `l_gc = floor(T″/T)` spatial convolutions.
pub fn generator_layers(t_in: usize, t_out: usize) -> Option<(usize, usize)> {
    if t_out <= t_in || t_in == 0 {
        return None;
    }
    let gt = (t_out - t_in).div_ceil(2 * t_in);
    Some((gt, t_out / t_in))
}

/// Symmetric "same" padding for a kernel of extent `k`; the extra zero of an
/// even kernel goes after.
pub fn same_pad(k: usize) -> (usize, usize) {
    let total = k - 1;
    (total / 2, total - total / 2)
}

/// Spatial `1×d×d` layer with same padding on H and W.
pub fn spatial_conv(cin: usize, cout: usize, d: usize) -> ConvSpec {
    let mut spec = ConvSpec::new(cin, cout, [1, d, d]);
    let p = same_pad(d);
    spec.pad = [(0, 0), p, p];
    spec
}

/// Full `t×d×d` layer with same padding on every axis.
pub fn full_conv(cin: usize, cout: usize, t: usize, d: usize) -> ConvSpec {
    let mut spec = ConvSpec::new(cin, cout, [t, d, d]);
    let p = same_pad(d);
    spec.pad = [same_pad(t), p, p];
    spec
}

pub fn temporal_block(
    name: &str,
    cfg: &ModelConfig,
    strategy: &dyn TemporalStrategy,
    in_channels: usize,
) -> BlockPlan {
    let mut cin = in_channels;
    let layers = filter_schedule(cfg.filters, cfg.layers, cfg.filter_growth)
        .into_iter()
        .map(|cout| {
            let spec = strategy.layer(cin, cout, cfg.temporal_kernel);
            cin = cout;
            LayerPlan::activated(spec, cfg.dropout > 0.0)
        })
        .collect();
    BlockPlan {
        name: name.to_string(),
        kind: if strategy.reverses_time() {
            BlockKind::TimeReversed
        } else {
            BlockKind::Sequential
        },
        layers,
    }
}

pub fn spatial_block(name: &str, cfg: &ModelConfig, in_channels: usize) -> BlockPlan {
    let mut cin = in_channels;
    let layers = filter_schedule(cfg.filters, cfg.layers, cfg.filter_growth)
        .into_iter()
        .map(|cout| {
            let spec = spatial_conv(cin, cout, cfg.spatial_kernel);
            cin = cout;
            LayerPlan::activated(spec, cfg.dropout > 0.0)
        })
        .collect();
    BlockPlan {
        name: name.to_string(),
        kind: BlockKind::Sequential,
        layers,
    }
}

/// Horizon adjustment and final `1×1×1` projection back to `C` channels.
///
/// For `T″ > T` this is the generator block; for `T″ < T` a trailing time
/// crop; for `T″ = T` nothing.
pub fn head(cfg: &ModelConfig, in_channels: usize) -> (Vec<BlockPlan>, usize) {
    let mut blocks = Vec::new();
    let mut upsample_layers = 0;
    let (t_in, t_out) = (cfg.input_len, cfg.output_len);
    if let Some((gt, gc)) = generator_layers(t_in, t_out) {
        upsample_layers = gt;
        let mut layers = Vec::with_capacity(gt + gc);
        for _ in 0..gt {
            let mut spec = ConvSpec::new(in_channels, in_channels, [2, 1, 1]);
            spec.stride = [2, 1, 1];
            spec.transposed = Some([0; 3]);
            layers.push(LayerPlan::plain(spec));
        }
        for _ in 0..gc {
            let spec = spatial_conv(in_channels, in_channels, cfg.spatial_kernel);
            layers.push(LayerPlan::activated(spec, cfg.dropout > 0.0));
        }
        blocks.push(BlockPlan {
            name: "generator".into(),
            kind: BlockKind::Generator { upsample: gt, t_out },
            layers,
        });
    } else if t_out < t_in {
        blocks.push(BlockPlan {
            name: "horizon-crop".into(),
            kind: BlockKind::CropTime { t_out },
            layers: Vec::new(),
        });
    }
    blocks.push(BlockPlan {
        name: "projection".into(),
        kind: BlockKind::Sequential,
        layers: vec![LayerPlan::plain(ConvSpec::new(in_channels, cfg.channels, [1, 1, 1]))],
    });
    (blocks, upsample_layers)
}

/// Checks that consecutive blocks agree on channels. `CropTime` blocks pass
/// channels through.
pub fn check_chain(plan: &ModelPlan, in_channels: usize) -> Result<()> {
    let mut channels = in_channels;
    for (index, block) in plan.blocks.iter().enumerate() {
        if let Some(first) = block.layers.first() {
            if first.conv.in_channels != channels {
                return Err(Error::ChannelChain {
                    index,
                    unit: format!("block {}", block.name),
                    expected: first.conv.in_channels,
                    actual: channels,
                });
            }
        }
        channels = block.out_channels().unwrap_or(channels);
    }
    Ok(())
}
