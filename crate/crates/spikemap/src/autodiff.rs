//! Tape-based reverse-mode automatic differentiation.
//!
//! The tape is append-only: every operation evaluates eagerly, records its
//! inputs by node id, and `backward` walks the nodes once in reverse
//! creation order, accumulating gradients in a fixed sequence. Two runs over
//! the same graph produce bitwise-identical gradients.
//!
//! The spike nonlinearity uses a piecewise-linear surrogate derivative on
//! the backward pass while the forward pass stays exactly binary.

use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    Conv2d { input: NodeId, kernel: NodeId, bias: Option<NodeId>, stride: usize, padding: usize },
    Linear { input: NodeId, weight: NodeId, bias: Option<NodeId> },
    AvgPool2d { input: NodeId, kernel: usize },
    Relu { input: NodeId },
    Flatten { input: NodeId },
    Add { lhs: NodeId, rhs: NodeId },
    MulScalar { input: NodeId, factor: S },
    MaskMul { input: NodeId, mask: Tensor<S> },
    Spike { input: NodeId, threshold: S, beta: S },
    LifUpdate { u_prev: NodeId, spike: NodeId, input: NodeId, leak: S, threshold: S },
    BnScale { input: NodeId, gamma: NodeId, mean: Vec<S>, var: Vec<S>, eps: S, batch_stats: bool },
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize>, probs: Tensor<S> },
    PickClass { input: NodeId, class: usize },
    Sum { input: NodeId },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

/// Result of a backward pass. Gradients exist for every node; leaves that
/// the loss does not depend on carry zero gradients and are reported as
/// disconnected.
pub struct Gradients<S: Scalar> {
    grads: Vec<Tensor<S>>,
    connected: Vec<bool>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    /// False when the node does not influence the differentiated output.
    pub fn is_connected(&self, id: NodeId) -> bool {
        self.connected[id.0]
    }

    /// Ids of leaf-or-interior nodes that were not reached by the backward
    /// traversal.
    pub fn disconnected(&self) -> Vec<NodeId> {
        self.connected
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(i, _)| NodeId(i))
            .collect()
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    fn check(&self, id: NodeId, op: &str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::invalid(op, format!("node id {} out of range", id.0)));
        }
        Ok(())
    }

    pub fn leaf(&mut self, value: Tensor<S>) -> Result<NodeId> {
        value.ensure_finite("tape::leaf")?;
        Ok(self.push(value, Op::Leaf))
    }

    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        self.check(input, "tape::conv2d")?;
        self.check(kernel, "tape::conv2d")?;
        if let Some(b) = bias {
            self.check(b, "tape::conv2d")?;
        }
        let y = kernels::conv2d_forward(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        Ok(self.push(y, Op::Conv2d { input, kernel, bias, stride, padding }))
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        self.check(input, "tape::linear")?;
        self.check(weight, "tape::linear")?;
        if let Some(b) = bias {
            self.check(b, "tape::linear")?;
        }
        let y = kernels::linear_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
        )?;
        Ok(self.push(y, Op::Linear { input, weight, bias }))
    }

    pub fn avgpool2d(&mut self, input: NodeId, kernel: usize) -> Result<NodeId> {
        self.check(input, "tape::avgpool2d")?;
        let y = kernels::avgpool2d_forward(self.value(input), kernel)?;
        Ok(self.push(y, Op::AvgPool2d { input, kernel }))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input, "tape::relu")?;
        let y = kernels::relu_forward(self.value(input));
        Ok(self.push(y, Op::Relu { input }))
    }

    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input, "tape::flatten")?;
        let y = kernels::flatten_batch(self.value(input))?;
        Ok(self.push(y, Op::Flatten { input }))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        self.check(lhs, "tape::add")?;
        self.check(rhs, "tape::add")?;
        let y = self.value(lhs).add(self.value(rhs))?;
        y.ensure_finite("tape::add")?;
        Ok(self.push(y, Op::Add { lhs, rhs }))
    }

    pub fn mul_scalar(&mut self, input: NodeId, factor: S) -> Result<NodeId> {
        self.check(input, "tape::mul_scalar")?;
        let y = self.value(input).scale(factor);
        y.ensure_finite("tape::mul_scalar")?;
        Ok(self.push(y, Op::MulScalar { input, factor }))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask_mul(&mut self, input: NodeId, mask: Tensor<S>) -> Result<NodeId> {
        self.check(input, "tape::mask_mul")?;
        let y = self.value(input).zip(&mask, "tape::mask_mul", |a, b| a * b)?;
        y.ensure_finite("tape::mask_mul")?;
        Ok(self.push(y, Op::MaskMul { input, mask }))
    }

    /// Heaviside spike on the strict threshold crossing, with the
    /// piecewise-linear surrogate derivative beta*max(0, 1 - |u-th|/th) on
    /// the backward pass. An infinite threshold never fires and carries a
    /// zero derivative.
    pub fn spike(&mut self, input: NodeId, threshold: S, beta: S) -> Result<NodeId> {
        self.check(input, "tape::spike")?;
        if !(threshold > S::zero()) {
            return Err(Error::invalid("tape::spike", format!("threshold {} must be positive", threshold)));
        }
        let y = self.value(input).map(|u| {
            if threshold.is_finite() && u > threshold {
                S::one()
            } else {
                S::zero()
            }
        });
        Ok(self.push(y, Op::Spike { input, threshold, beta }))
    }

    /// Membrane update u_new = leak * u_prev + input - threshold * spike.
    /// The reset term is applied by branch so an infinite threshold with a
    /// zero spike stays finite.
    pub fn lif_update(
        &mut self,
        u_prev: NodeId,
        spike: NodeId,
        input: NodeId,
        leak: S,
        threshold: S,
    ) -> Result<NodeId> {
        self.check(u_prev, "tape::lif_update")?;
        self.check(spike, "tape::lif_update")?;
        self.check(input, "tape::lif_update")?;
        let u = self.value(u_prev);
        let s = self.value(spike);
        let x = self.value(input);
        if u.shape() != s.shape() || u.shape() != x.shape() {
            return Err(Error::shape(
                "tape::lif_update",
                format!("{:?} vs {:?} vs {:?}", u.shape(), s.shape(), x.shape()),
            ));
        }
        let mut data = Vec::with_capacity(u.numel());
        for i in 0..u.numel() {
            let mut v = leak * u.data()[i] + x.data()[i];
            if s.data()[i] > S::zero() {
                v = v - threshold * s.data()[i];
            }
            data.push(v);
        }
        let y = Tensor::from_vec(u.shape(), data)?;
        Ok(self.push(y, Op::LifUpdate { u_prev, spike, input, leak, threshold }))
    }

    /// Scale-only normalization with explicit statistics. With
    /// `batch_stats` set, gradients flow through mean and variance.
    pub fn bn_scale(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        mean: Vec<S>,
        var: Vec<S>,
        eps: S,
        batch_stats: bool,
    ) -> Result<NodeId> {
        self.check(input, "tape::bn_scale")?;
        self.check(gamma, "tape::bn_scale")?;
        let y = kernels::bn_scale_forward(
            self.value(input),
            self.value(gamma).data(),
            &mean,
            &var,
            eps,
        )?;
        Ok(self.push(y, Op::BnScale { input, gamma, mean, var, eps, batch_stats }))
    }

    /// Convenience: computes batch statistics from the input node, then
    /// applies scale-only normalization through them.
    pub fn bn_scale_batch(&mut self, input: NodeId, gamma: NodeId, eps: S) -> Result<NodeId> {
        self.check(input, "tape::bn_scale")?;
        let (mean, var, _) = kernels::channel_stats(self.value(input))?;
        self.bn_scale(input, gamma, mean, var, eps, true)
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.check(logits, "tape::softmax_cross_entropy")?;
        let out = kernels::softmax_cross_entropy_forward(self.value(logits), labels)?;
        let value = Tensor::scalar(out.loss);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs: out.probs },
        ))
    }

    /// Picks logits[0, class] from a single-row 2-d tensor as a scalar.
    pub fn pick_class(&mut self, input: NodeId, class: usize) -> Result<NodeId> {
        self.check(input, "tape::pick_class")?;
        let v = self.value(input);
        if v.shape().len() != 2 || v.shape()[0] != 1 {
            return Err(Error::shape(
                "tape::pick_class",
                format!("need [1, C] input, got {:?}", v.shape()),
            ));
        }
        let c = v.shape()[1];
        if class >= c {
            return Err(Error::invalid(
                "tape::pick_class",
                format!("class {} out of range for {} outputs", class, c),
            ));
        }
        let value = Tensor::scalar(v.data()[class]);
        Ok(self.push(value, Op::PickClass { input, class }))
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input, "tape::sum")?;
        let value = Tensor::scalar(self.value(input).sum());
        value.ensure_finite("tape::sum")?;
        Ok(self.push(value, Op::Sum { input }))
    }

    /// Reverse pass from a scalar output node. Visits every node exactly
    /// once in reverse creation order.
    pub fn backward(&self, output: NodeId) -> Result<Gradients<S>> {
        self.check(output, "tape::backward")?;
        if self.value(output).numel() != 1 {
            return Err(Error::shape(
                "tape::backward",
                format!("output must be scalar, got {:?}", self.value(output).shape()),
            ));
        }

        let n = self.nodes.len();
        let mut grads: Vec<Tensor<S>> =
            self.nodes.iter().map(|node| Tensor::zeros(node.value.shape())).collect();
        let mut connected = vec![false; n];
        grads[output.0].data_mut()[0] = S::one();
        connected[output.0] = true;

        for i in (0..=output.0).rev() {
            if !connected[i] {
                continue;
            }
            // Split off the current gradient to satisfy the borrow checker
            // while accumulating into earlier slots.
            let g = std::mem::replace(&mut grads[i], Tensor::zeros(&[]));
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv2d { input, kernel, bias, stride, padding } => {
                    let out = kernels::conv2d_backward(
                        &g,
                        self.value(*input),
                        self.value(*kernel),
                        bias.is_some(),
                        *stride,
                        *padding,
                    )?;
                    accumulate(&mut grads[input.0], &out.input)?;
                    connected[input.0] = true;
                    accumulate(&mut grads[kernel.0], &out.kernel)?;
                    connected[kernel.0] = true;
                    if let (Some(b), Some(gb)) = (bias, out.bias) {
                        accumulate(&mut grads[b.0], &gb)?;
                        connected[b.0] = true;
                    }
                }
                Op::Linear { input, weight, bias } => {
                    let out = kernels::linear_backward(
                        &g,
                        self.value(*input),
                        self.value(*weight),
                        bias.is_some(),
                    )?;
                    accumulate(&mut grads[input.0], &out.input)?;
                    connected[input.0] = true;
                    accumulate(&mut grads[weight.0], &out.weight)?;
                    connected[weight.0] = true;
                    if let (Some(b), Some(gb)) = (bias, out.bias) {
                        accumulate(&mut grads[b.0], &gb)?;
                        connected[b.0] = true;
                    }
                }
                Op::AvgPool2d { input, kernel } => {
                    let gx = kernels::avgpool2d_backward(&g, self.value(*input).shape(), *kernel)?;
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::Relu { input } => {
                    let gx = kernels::relu_backward(&g, self.value(*input))?;
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::Flatten { input } => {
                    let gx = g.reshaped(self.value(*input).shape())?;
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::Add { lhs, rhs } => {
                    accumulate(&mut grads[lhs.0], &g)?;
                    connected[lhs.0] = true;
                    accumulate(&mut grads[rhs.0], &g)?;
                    connected[rhs.0] = true;
                }
                Op::MulScalar { input, factor } => {
                    let gx = g.scale(*factor);
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::MaskMul { input, mask } => {
                    let gx = g.zip(mask, "tape::mask_mul_backward", |a, b| a * b)?;
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::Spike { input, threshold, beta } => {
                    let th = *threshold;
                    let beta = *beta;
                    let u = self.value(*input);
                    let gx = if th.is_finite() {
                        g.zip(u, "tape::spike_backward", |gv, uv| {
                            let w = S::one() - ((uv - th).abs() / th);
                            let d = if w > S::zero() { beta * w } else { S::zero() };
                            gv * d
                        })?
                    } else {
                        Tensor::zeros(u.shape())
                    };
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::LifUpdate { u_prev, spike, input, leak, threshold } => {
                    let gu = g.scale(*leak);
                    accumulate(&mut grads[u_prev.0], &gu)?;
                    connected[u_prev.0] = true;
                    if threshold.is_finite() {
                        let gs = g.scale(S::zero() - *threshold);
                        accumulate(&mut grads[spike.0], &gs)?;
                    }
                    connected[spike.0] = true;
                    accumulate(&mut grads[input.0], &g)?;
                    connected[input.0] = true;
                }
                Op::BnScale { input, gamma, mean, var, eps, batch_stats } => {
                    let out = if *batch_stats {
                        kernels::bn_scale_backward_batch(
                            &g,
                            self.value(*input),
                            self.value(*gamma).data(),
                            mean,
                            var,
                            *eps,
                        )?
                    } else {
                        kernels::bn_scale_backward_fixed(
                            &g,
                            self.value(*input),
                            self.value(*gamma).data(),
                            mean,
                            var,
                            *eps,
                        )?
                    };
                    accumulate(&mut grads[input.0], &out.input)?;
                    connected[input.0] = true;
                    let ggamma = Tensor::from_vec(&[out.gamma.len()], out.gamma)?;
                    accumulate(&mut grads[gamma.0], &ggamma)?;
                    connected[gamma.0] = true;
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let seed = g.data()[0];
                    let gx = kernels::softmax_cross_entropy_backward(probs, labels, seed)?;
                    accumulate(&mut grads[logits.0], &gx)?;
                    connected[logits.0] = true;
                }
                Op::PickClass { input, class } => {
                    let seed = g.data()[0];
                    let mut gx = Tensor::zeros(self.value(*input).shape());
                    gx.data_mut()[*class] = seed;
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
                Op::Sum { input } => {
                    let seed = g.data()[0];
                    let gx = Tensor::filled(self.value(*input).shape(), seed);
                    accumulate(&mut grads[input.0], &gx)?;
                    connected[input.0] = true;
                }
            }
            grads[i] = g;
        }

        for (i, gt) in grads.iter().enumerate() {
            gt.ensure_finite("tape::backward")
                .map_err(|e| Error::non_finite("tape::backward", format!("node {}: {}", i, e)))?;
        }
        Ok(Gradients { grads, connected })
    }
}

fn accumulate<S: Scalar>(into: &mut Tensor<S>, add: &Tensor<S>) -> Result<()> {
    if into.shape() != add.shape() {
        return Err(Error::shape(
            "tape::accumulate",
            format!("{:?} vs {:?}", into.shape(), add.shape()),
        ));
    }
    for (a, &b) in into.data_mut().iter_mut().zip(add.data().iter()) {
        *a = *a + b;
    }
    Ok(())
}
