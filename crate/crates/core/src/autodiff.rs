//! Reverse-mode differentiation over a linear tape.
//!
//! Every differentiable operation appends a node holding its forward value
//! and what its backward rule needs. Nodes are only ever appended, so tape
//! order is a topological order and [`Tape::backward`] walks it once in
//! reverse.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, BatchNormSaved, BatchStats, ConvGeometry, PadSpec, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Conv3d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose3d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
        output_pad: [usize; 3],
    },
    Pad {
        input: Var,
        spec: PadSpec,
    },
    Crop {
        input: Var,
        spec: PadSpec,
    },
    Reverse {
        input: Var,
        axis: usize,
    },
    Concat {
        a: Var,
        b: Var,
        axis: usize,
    },
    LeakyRelu {
        input: Var,
        slope: S,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: BatchNormSaved<S>,
    },
    Dropout {
        input: Var,
        mask: Vec<S>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        input: Var,
    },
    WeightedSum {
        input: Var,
        weights: Tensor<S>,
    },
    Mse {
        pred: Var,
        target: Tensor<S>,
    },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
    tag: Option<usize>,
}

/// Record of executed operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

/// Gradients from one [`Tape::backward`] call, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    tags: Vec<Option<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradients of tagged leaves (parameters), in tape order.
    pub fn tagged(&self) -> impl Iterator<Item = (usize, Option<&Tensor<S>>)> + '_ {
        self.tags
            .iter()
            .zip(&self.grads)
            .filter_map(|(tag, g)| tag.map(|t| (t, g.as_ref())))
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<S> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            tag: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant (`requires_grad = false`) or free variable.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            tag: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf whose gradient is reported under `tag`.
    pub fn param(&mut self, tag: usize, value: Tensor<S>) -> Var {
        let v = self.leaf(value, true);
        self.nodes[v.0].tag = Some(tag);
        v
    }

    pub fn conv3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: &ConvGeometry,
    ) -> Result<Var> {
        let out = tensor::conv3d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            geom,
        )?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        Ok(self.push(
            out,
            Op::Conv3d {
                input,
                weight,
                bias,
                geom: geom.clone(),
            },
            &deps,
        ))
    }

    pub fn conv_transpose3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: &ConvGeometry,
        output_pad: [usize; 3],
    ) -> Result<Var> {
        let out = tensor::conv_transpose3d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            geom,
            output_pad,
        )?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        Ok(self.push(
            out,
            Op::ConvTranspose3d {
                input,
                weight,
                bias,
                geom: geom.clone(),
                output_pad,
            },
            &deps,
        ))
    }

    pub fn pad(&mut self, input: Var, spec: &PadSpec) -> Result<Var> {
        let out = tensor::pad(self.value(input), spec)?;
        Ok(self.push(
            out,
            Op::Pad {
                input,
                spec: spec.clone(),
            },
            &[input],
        ))
    }

    pub fn crop(&mut self, input: Var, spec: &PadSpec) -> Result<Var> {
        let out = tensor::crop(self.value(input), spec)?;
        Ok(self.push(
            out,
            Op::Crop {
                input,
                spec: spec.clone(),
            },
            &[input],
        ))
    }

    pub fn reverse(&mut self, input: Var, axis: usize) -> Result<Var> {
        let out = tensor::reverse_axis(self.value(input), axis)?;
        Ok(self.push(out, Op::Reverse { input, axis }, &[input]))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let out = tensor::concat(self.value(a), self.value(b), axis)?;
        Ok(self.push(out, Op::Concat { a, b, axis }, &[a, b]))
    }

    /// Concatenation along the time axis of `(N, C, T, H, W)` tensors.
    pub fn concat_time(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).rank() != 5 || self.value(b).rank() != 5 {
            return Err(Error::RankMismatch {
                op: "concat_time",
                expected: 5,
                actual: self.value(a).rank().min(self.value(b).rank()),
            });
        }
        self.concat(a, b, tensor::axis::TIME)
    }

    pub fn leaky_relu(&mut self, input: Var, slope: S) -> Result<Var> {
        if !(slope >= S::zero() && slope < S::one()) {
            return Err(Error::InvalidArgument(format!(
                "leaky_relu slope {slope} outside [0, 1)"
            )));
        }
        let out = tensor::leaky_relu(self.value(input), slope);
        Ok(self.push(out, Op::LeakyRelu { input, slope }, &[input]))
    }

    /// Batch normalization over channel axis 1.
    ///
    /// `running = None` normalizes with batch statistics (train mode) and
    /// returns them so the caller can update its running estimates.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[S], &[S])>,
        eps: S,
    ) -> Result<(Var, Option<BatchStats<S>>)> {
        let (out, saved, stats) = tensor::batch_norm_forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running,
            eps,
        )?;
        let v = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
            &[input, gamma, beta],
        );
        Ok((v, stats))
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1 / (1 - rate)`.
    pub fn dropout(&mut self, input: Var, rate: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        let keep = S::from_f64_lossy(1.0 / (1.0 - rate));
        let x = self.value(input);
        let mask: Vec<S> = (0..x.numel())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = Tensor::from_vec(
            x.shape(),
            x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
        )?;
        Ok(self.push(out, Op::Dropout { input, mask }, &[input]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        self.push(out, Op::Sum { input }, &[input])
    }

    /// `Σ input ⊙ weights` with constant weights; a convenient probe loss.
    pub fn weighted_sum(&mut self, input: Var, weights: Tensor<S>) -> Result<Var> {
        self.value(input).expect_same_shape(&weights, "weighted_sum")?;
        let total = self
            .value(input)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedSum { input, weights },
            &[input],
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<S>) -> Result<Var> {
        self.value(pred).expect_same_shape(target, "mse_loss")?;
        let n = S::from_usize(target.numel()).expect("count");
        let total: S = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            &[pred],
        ))
    }

    /// Propagates `d loss / d node` back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), S::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            tags: self.nodes.iter().map(|n| n.tag).collect(),
        })
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<S>>], var: Var, g: Tensor<S>) -> Result<()> {
        if !self.wants(var) {
            return Ok(());
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, op: &Op<S>, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv3d {
                input,
                weight,
                bias,
                geom,
            } => {
                let cg = tensor::conv3d_backward(
                    self.value(*input),
                    self.value(*weight),
                    g,
                    geom,
                    self.wants(*input),
                )?;
                if let Some(gi) = cg.input {
                    self.accumulate(grads, *input, gi)?;
                }
                self.accumulate(grads, *weight, cg.weight)?;
                if let Some(b) = bias {
                    self.accumulate(grads, *b, cg.bias)?;
                }
            }
            Op::ConvTranspose3d {
                input,
                weight,
                bias,
                geom,
                output_pad,
            } => {
                let cg = tensor::conv_transpose3d_backward(
                    self.value(*input),
                    self.value(*weight),
                    g,
                    geom,
                    *output_pad,
                    self.wants(*input),
                )?;
                if let Some(gi) = cg.input {
                    self.accumulate(grads, *input, gi)?;
                }
                self.accumulate(grads, *weight, cg.weight)?;
                if let Some(b) = bias {
                    self.accumulate(grads, *b, cg.bias)?;
                }
            }
            Op::Pad { input, spec } => {
                self.accumulate(grads, *input, tensor::crop(g, spec)?)?;
            }
            Op::Crop { input, spec } => {
                self.accumulate(grads, *input, tensor::pad(g, spec)?)?;
            }
            Op::Reverse { input, axis } => {
                self.accumulate(grads, *input, tensor::reverse_axis(g, *axis)?)?;
            }
            Op::Concat { a, b, axis } => {
                let at = self.value(*a).shape()[*axis];
                let (ga, gb) = tensor::split(g, *axis, at)?;
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::LeakyRelu { input, slope } => {
                let gi = tensor::leaky_relu_backward(self.value(*input), g, *slope);
                self.accumulate(grads, *input, gi)?;
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            } => {
                let (gi, gg, gb) = tensor::batch_norm_backward(g, self.value(*gamma), saved)?;
                self.accumulate(grads, *input, gi)?;
                self.accumulate(grads, *gamma, gg)?;
                self.accumulate(grads, *beta, gb)?;
            }
            Op::Dropout { input, mask } => {
                let gi = Tensor::from_vec(
                    g.shape(),
                    g.data().iter().zip(mask).map(|(&v, &m)| v * m).collect(),
                )?;
                self.accumulate(grads, *input, gi)?;
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Mul { a, b } => {
                let ga = g.zip_map(self.value(*b), "mul", |x, y| x * y)?;
                let gb = g.zip_map(self.value(*a), "mul", |x, y| x * y)?;
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::Sum { input } => {
                let s = g.data()[0];
                self.accumulate(grads, *input, Tensor::full(self.value(*input).shape(), s))?;
            }
            Op::WeightedSum { input, weights } => {
                let s = g.data()[0];
                self.accumulate(grads, *input, weights.map(|w| w * s))?;
            }
            Op::Mse { pred, target } => {
                let n = S::from_usize(target.numel()).expect("count");
                let two = S::from_f64_lossy(2.0);
                let s = g.data()[0];
                let gp = self
                    .value(*pred)
                    .zip_map(target, "mse_loss", |p, t| two * (p - t) / n * s)?;
                self.accumulate(grads, *pred, gp)?;
            }
        }
        Ok(())
    }
}
