//! Temporal-block strategies: how a `t×1×1` layer is padded, cropped and
//! oriented so that its output keeps the input's time extent.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::layers::ConvSpec;

use super::plan::same_pad;

pub trait TemporalStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Geometry of one `t×1×1` layer from `cin` to `cout` channels.
    fn layer(&self, cin: usize, cout: usize, t: usize) -> ConvSpec;

    /// Whether the block reverses time at entry and exit.
    fn reverses_time(&self) -> bool {
        false
    }

    /// Output at frame τ depends only on inputs at frames ≤ τ.
    fn is_causal(&self) -> bool;

    /// Zeros inserted along time per layer.
    fn padded_steps(&self, t: usize) -> usize {
        let (b, a) = self.layer(1, 1, t).pad[0];
        b + a
    }
}

fn temporal_spec(cin: usize, cout: usize, t: usize) -> ConvSpec {
    ConvSpec::new(cin, cout, [t, 1, 1])
}

/// Pad `t−1` on both ends, convolve, drop the trailing `t−1` frames.
pub struct Causal;

impl TemporalStrategy for Causal {
    fn name(&self) -> &'static str {
        "causal"
    }

    fn layer(&self, cin: usize, cout: usize, t: usize) -> ConvSpec {
        let mut spec = temporal_spec(cin, cout, t);
        spec.pad[0] = (t - 1, t - 1);
        spec.crop[0] = (0, t - 1);
        spec
    }

    fn is_causal(&self) -> bool {
        true
    }
}

/// Reverse time, pad `t−1` after, convolve with the time-flipped kernel,
/// reverse back. Tap `j` weighs lag `t−1−j`, as in [`Causal`].
pub struct Reversed;

impl TemporalStrategy for Reversed {
    fn name(&self) -> &'static str {
        "reversed"
    }

    fn layer(&self, cin: usize, cout: usize, t: usize) -> ConvSpec {
        let mut spec = temporal_spec(cin, cout, t);
        spec.pad[0] = (0, t - 1);
        spec.flip_time = true;
        spec
    }

    fn reverses_time(&self) -> bool {
        true
    }

    fn is_causal(&self) -> bool {
        true
    }
}

/// Centered padding; sees the future.
pub struct Symmetric;

impl TemporalStrategy for Symmetric {
    fn name(&self) -> &'static str {
        "symmetric"
    }

    fn layer(&self, cin: usize, cout: usize, t: usize) -> ConvSpec {
        let mut spec = temporal_spec(cin, cout, t);
        spec.pad[0] = same_pad(t);
        spec
    }

    fn is_causal(&self) -> bool {
        false
    }
}

/// [`Reversed`] with centered padding; sees the future.
pub struct SymmetricReversed;

impl TemporalStrategy for SymmetricReversed {
    fn name(&self) -> &'static str {
        "symmetric-reversed"
    }

    fn layer(&self, cin: usize, cout: usize, t: usize) -> ConvSpec {
        let mut spec = temporal_spec(cin, cout, t);
        spec.pad[0] = same_pad(t);
        spec.flip_time = true;
        spec
    }

    fn reverses_time(&self) -> bool {
        true
    }

    fn is_causal(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub struct StrategyRegistry {
    entries: BTreeMap<&'static str, Arc<dyn TemporalStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(Causal));
        reg.register(Arc::new(Reversed));
        reg.register(Arc::new(Symmetric));
        reg.register(Arc::new(SymmetricReversed));
        reg
    }

    /// Returns the strategy previously registered under the same name.
    pub fn register(&mut self, strategy: Arc<dyn TemporalStrategy>) -> Option<Arc<dyn TemporalStrategy>> {
        self.entries.insert(strategy.name(), strategy)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TemporalStrategy>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownName {
            kind: "temporal strategy",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_counts() {
        let reg = StrategyRegistry::builtin();
        assert_eq!(reg.get("causal").unwrap().padded_steps(5), 8);
        assert_eq!(reg.get("reversed").unwrap().padded_steps(5), 4);
        assert_eq!(reg.get("symmetric").unwrap().padded_steps(5), 4);
        for t in 1..8 {
            assert!(Reversed.padded_steps(t) <= Causal.padded_steps(t));
            if t > 1 {
                assert!(Reversed.padded_steps(t) < Causal.padded_steps(t));
            }
        }
    }

    #[test]
    fn unknown_strategy() {
        let err = StrategyRegistry::builtin().get("sideways").err().unwrap();
        assert!(err.to_string().contains("sideways"));
    }
}
