//! Architecture registry: each entry turns a [`ModelConfig`] into a
//! [`ModelPlan`]. The two main variants and every ablation tag are entries.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::layers::ConvSpec;

use super::config::ModelConfig;
use super::plan::{
    filter_schedule, full_conv, head, same_pad, spatial_block, spatial_conv, temporal_block, BlockKind, BlockPlan,
    LayerPlan, ModelPlan,
};
use super::temporal::StrategyRegistry;

/// Tags of the comparison and ablation architectures, in report order.
pub const ABLATION_TAGS: [&str; 7] = [
    "std-3dcnn",
    "encoder-decoder",
    "two-plus-one-d",
    "no-temporal",
    "inverted",
    "no-filter-increase",
    "no-causal",
];

pub trait Architecture: Send + Sync {
    fn tag(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn plan(&self, cfg: &ModelConfig, strategies: &StrategyRegistry) -> Result<ModelPlan>;
}

fn base_strategy(cfg: &ModelConfig) -> Result<&'static str> {
    match cfg.ablation_base.as_str() {
        "causal" => Ok("causal"),
        "reversed" => Ok("reversed"),
        other => Err(Error::Config(format!(
            "ablation_base must be causal or reversed, got '{other}'"
        ))),
    }
}

fn finish(mut blocks: Vec<BlockPlan>, cfg: &ModelConfig) -> ModelPlan {
    let (tail, upsample_layers) = head(cfg, cfg.filters);
    blocks.extend(tail);
    ModelPlan {
        blocks,
        upsample_layers,
    }
}

/// Temporal block with the named strategy, then the spatial block.
fn factorized(cfg: &ModelConfig, strategies: &StrategyRegistry, strategy: &str) -> Result<ModelPlan> {
    let strategy = strategies.get(strategy)?;
    let temporal = temporal_block("temporal", cfg, strategy.as_ref(), cfg.channels);
    let spatial = spatial_block("spatial", cfg, cfg.filters);
    Ok(finish(vec![temporal, spatial], cfg))
}

struct Factorized {
    tag: &'static str,
    strategy: &'static str,
    description: &'static str,
}

impl Architecture for Factorized {
    fn tag(&self) -> &'static str {
        self.tag
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn plan(&self, cfg: &ModelConfig, strategies: &StrategyRegistry) -> Result<ModelPlan> {
        factorized(cfg, strategies, self.strategy)
    }
}

/// `L` layers of full `t×d×d` kernels with centered padding.
struct Standard3d;

impl Architecture for Standard3d {
    fn tag(&self) -> &'static str {
        "std-3dcnn"
    }

    fn description(&self) -> &'static str {
        "full t×d×d kernels, centered padding"
    }

    fn plan(&self, cfg: &ModelConfig, _: &StrategyRegistry) -> Result<ModelPlan> {
        let mut cin = cfg.channels;
        let layers = filter_schedule(cfg.filters, cfg.layers, cfg.filter_growth)
            .into_iter()
            .map(|cout| {
                let spec = full_conv(cin, cout, cfg.temporal_kernel, cfg.spatial_kernel);
                cin = cout;
                LayerPlan::activated(spec, cfg.dropout > 0.0)
            })
            .collect();
        let block = BlockPlan {
            name: "conv3d".into(),
            kind: BlockKind::Sequential,
            layers,
        };
        Ok(finish(vec![block], cfg))
    }
}

/// `L` full-kernel convolutions halving H and W, then `L` transposed
/// convolutions doubling them back; odd extents are restored by cropping the
/// trailing row/column.
struct EncoderDecoder;

impl Architecture for EncoderDecoder {
    fn tag(&self) -> &'static str {
        "encoder-decoder"
    }

    fn description(&self) -> &'static str {
        "strided full-kernel encoder, transposed-conv decoder"
    }

    fn plan(&self, cfg: &ModelConfig, _: &StrategyRegistry) -> Result<ModelPlan> {
        let schedule = filter_schedule(cfg.filters, cfg.layers, cfg.filter_growth);
        let mut channels = vec![cfg.channels];
        channels.extend(&schedule);
        let mut extents = vec![(cfg.height, cfg.width)];
        let mut down = Vec::with_capacity(cfg.layers);
        for (i, &cout) in schedule.iter().enumerate() {
            let mut spec = full_conv(channels[i], cout, cfg.temporal_kernel, cfg.spatial_kernel);
            spec.stride = [1, 2, 2];
            let (h, w) = extents[i];
            extents.push(((h - 1) / 2 + 1, (w - 1) / 2 + 1));
            down.push(LayerPlan::activated(spec, cfg.dropout > 0.0));
        }
        let mut up = Vec::with_capacity(cfg.layers);
        for j in (0..cfg.layers).rev() {
            let cin = channels[j + 1];
            let cout = if j == 0 { cfg.filters } else { channels[j] };
            let (h, w) = extents[j];
            let (hs, ws) = extents[j + 1];
            let mut spec = ConvSpec::new(cin, cout, [1, 2, 2]);
            spec.stride = [1, 2, 2];
            spec.transposed = Some([0; 3]);
            spec.crop = [(0, 0), (0, 2 * hs - h), (0, 2 * ws - w)];
            up.push(LayerPlan::activated(spec, cfg.dropout > 0.0));
        }
        let blocks = vec![
            BlockPlan {
                name: "encoder".into(),
                kind: BlockKind::Sequential,
                layers: down,
            },
            BlockPlan {
                name: "decoder".into(),
                kind: BlockKind::Sequential,
                layers: up,
            },
        ];
        Ok(finish(blocks, cfg))
    }
}

/// `L` composite layers, each a `1×d×d` then a centered `t×1×1` convolution.
struct TwoPlusOne;

impl Architecture for TwoPlusOne {
    fn tag(&self) -> &'static str {
        "two-plus-one-d"
    }

    fn description(&self) -> &'static str {
        "successive spatial and temporal convolutions per layer"
    }

    fn plan(&self, cfg: &ModelConfig, _: &StrategyRegistry) -> Result<ModelPlan> {
        let mut cin = cfg.channels;
        let mut layers = Vec::with_capacity(2 * cfg.layers);
        for cout in filter_schedule(cfg.filters, cfg.layers, cfg.filter_growth) {
            layers.push(LayerPlan::activated(
                spatial_conv(cin, cout, cfg.spatial_kernel),
                cfg.dropout > 0.0,
            ));
            let mut temporal = ConvSpec::new(cout, cout, [cfg.temporal_kernel, 1, 1]);
            temporal.pad[0] = same_pad(cfg.temporal_kernel);
            layers.push(LayerPlan::activated(temporal, cfg.dropout > 0.0));
            cin = cout;
        }
        let block = BlockPlan {
            name: "conv2plus1d".into(),
            kind: BlockKind::Sequential,
            layers,
        };
        Ok(finish(vec![block], cfg))
    }
}

struct NoTemporal;

impl Architecture for NoTemporal {
    fn tag(&self) -> &'static str {
        "no-temporal"
    }

    fn description(&self) -> &'static str {
        "spatial block only"
    }

    fn plan(&self, cfg: &ModelConfig, _: &StrategyRegistry) -> Result<ModelPlan> {
        Ok(finish(vec![spatial_block("spatial", cfg, cfg.channels)], cfg))
    }
}

struct Inverted;

impl Architecture for Inverted {
    fn tag(&self) -> &'static str {
        "inverted"
    }

    fn description(&self) -> &'static str {
        "spatial block before the temporal block"
    }

    fn plan(&self, cfg: &ModelConfig, strategies: &StrategyRegistry) -> Result<ModelPlan> {
        let strategy = strategies.get(base_strategy(cfg)?)?;
        let spatial = spatial_block("spatial", cfg, cfg.channels);
        let temporal = temporal_block("temporal", cfg, strategy.as_ref(), cfg.filters);
        Ok(finish(vec![spatial, temporal], cfg))
    }
}

struct NoFilterIncrease;

impl Architecture for NoFilterIncrease {
    fn tag(&self) -> &'static str {
        "no-filter-increase"
    }

    fn description(&self) -> &'static str {
        "F filters in every layer"
    }

    fn plan(&self, cfg: &ModelConfig, strategies: &StrategyRegistry) -> Result<ModelPlan> {
        let cfg = ModelConfig {
            filter_growth: false,
            ..cfg.clone()
        };
        factorized(&cfg, strategies, base_strategy(&cfg)?)
    }
}

struct NoCausal;

impl Architecture for NoCausal {
    fn tag(&self) -> &'static str {
        "no-causal"
    }

    fn description(&self) -> &'static str {
        "temporal block with centered time padding"
    }

    fn plan(&self, cfg: &ModelConfig, strategies: &StrategyRegistry) -> Result<ModelPlan> {
        let strategy = match base_strategy(cfg)? {
            "causal" => "symmetric",
            _ => "symmetric-reversed",
        };
        factorized(cfg, strategies, strategy)
    }
}

#[derive(Clone)]
pub struct ArchitectureRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Architecture>>,
    strategies: StrategyRegistry,
}

impl ArchitectureRegistry {
    pub fn empty(strategies: StrategyRegistry) -> Self {
        Self {
            entries: BTreeMap::new(),
            strategies,
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty(StrategyRegistry::builtin());
        reg.register(Arc::new(Factorized {
            tag: "causal",
            strategy: "causal",
            description: "causal temporal block, spatial block",
        }));
        reg.register(Arc::new(Factorized {
            tag: "reversed",
            strategy: "reversed",
            description: "reversed temporal block, spatial block",
        }));
        reg.register(Arc::new(Standard3d));
        reg.register(Arc::new(EncoderDecoder));
        reg.register(Arc::new(TwoPlusOne));
        reg.register(Arc::new(NoTemporal));
        reg.register(Arc::new(Inverted));
        reg.register(Arc::new(NoFilterIncrease));
        reg.register(Arc::new(NoCausal));
        reg
    }

    pub fn register(&mut self, arch: Arc<dyn Architecture>) -> Option<Arc<dyn Architecture>> {
        self.entries.insert(arch.tag(), arch)
    }

    pub fn strategies(&self) -> &StrategyRegistry {
        &self.strategies
    }

    pub fn get(&self, tag: &str) -> Result<Arc<dyn Architecture>> {
        self.entries.get(tag).cloned().ok_or_else(|| Error::UnknownName {
            kind: "architecture",
            name: tag.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn plan(&self, cfg: &ModelConfig) -> Result<ModelPlan> {
        cfg.validate()?;
        self.get(&cfg.variant)?.plan(cfg, &self.strategies)
    }
}

impl Default for ArchitectureRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
