use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(usize);

#[derive(Clone, Debug)]
struct Param<S> {
    name: String,
    value: Tensor<S>,
    grad: Tensor<S>,
}

/// Registry of trainable parameters (with gradient accumulators) and
/// non-trainable buffers such as running statistics. Registration order is
/// the order used by optimizers and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    params: Vec<Param<S>>,
    buffers: Vec<(String, Tensor<S>)>,
}

/// Copy of all parameter and buffer values.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreSnapshot<S> {
    pub params: Vec<Tensor<S>>,
    pub buffers: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn add_param(&mut self, name: String, value: Tensor<S>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: String, value: Tensor<S>) -> BufferId {
        self.buffers.push((name, value));
        BufferId(self.buffers.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].grad
    }

    /// Mutable access to a value together with its gradient.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<S>, &Tensor<S>) {
        let p = &mut self.params[id.0];
        (&mut p.value, &p.grad)
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<S> {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor<S> {
        &mut self.buffers[id.0].1
    }

    pub fn buffer_names(&self) -> impl Iterator<Item = &str> {
        self.buffers.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(S::zero());
        }
    }

    /// Adds the gradients of every parameter leaf recorded on the tape.
    pub fn accumulate(&mut self, grads: &Gradients<S>) -> Result<()> {
        for (tag, g) in grads.tagged() {
            let Some(g) = g else { continue };
            let p = self
                .params
                .get_mut(tag)
                .ok_or_else(|| Error::InvalidArgument(format!("gradient for unknown parameter {tag}")))?;
            p.grad.add_assign(g)?;
        }
        Ok(())
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }

    pub fn snapshot(&self) -> StoreSnapshot<S> {
        StoreSnapshot {
            params: self.params.iter().map(|p| p.value.clone()).collect(),
            buffers: self.buffers.iter().map(|(_, b)| b.clone()).collect(),
        }
    }

    pub fn restore(&mut self, snap: &StoreSnapshot<S>) -> Result<()> {
        if snap.params.len() != self.params.len() || snap.buffers.len() != self.buffers.len() {
            return Err(Error::Format(format!(
                "snapshot holds {}+{} tensors, store has {}+{}",
                snap.params.len(),
                snap.buffers.len(),
                self.params.len(),
                self.buffers.len()
            )));
        }
        let targets = self
            .params
            .iter_mut()
            .map(|p| (&p.name, &mut p.value))
            .chain(self.buffers.iter_mut().map(|(n, b)| (&*n, b)));
        for ((name, dst), src) in targets.zip(snap.params.iter().chain(&snap.buffers)) {
            if dst.shape() != src.shape() {
                return Err(Error::Format(format!(
                    "{name}: stored shape {:?} does not match {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }
}
