//! Reverse-mode autodiff over an eagerly evaluated op tape.
//!
//! A [`Tape`] records every op as it computes forward values; ops reference
//! earlier nodes only, so [`Tape::backward`] is a single reverse sweep that
//! accumulates gradients into the referenced [`ParamSet`] slots. One tape
//! covers one sample's computation; batching is a caller-side sum of
//! per-sample gradients, which keeps samples independent and lets them run
//! on worker threads without changing results.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::tensor::Tensor;
use super::{relu, sigmoid, softmax, NnError, CROSS_ENTROPY_CLAMP};

pub type NodeId = usize;

/// Named parameter storage. Slots are stable for the lifetime of the set, so
/// gradients and optimizer state index by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Non-trainable entries (running statistics, preprocessing constants)
    /// ride along in checkpoints but are ignored by the optimizer.
    pub trainable: bool,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> usize {
        let name = name.into();
        debug_assert!(self.slot(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, tensor, trainable });
        self.entries.len() - 1
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, slot: usize) -> &ParamEntry {
        &self.entries[slot]
    }

    pub fn tensor(&self, slot: usize) -> &Tensor {
        &self.entries[slot].tensor
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.entries[slot].tensor
    }

    pub fn tensor_named(&self, name: &str) -> Result<&Tensor, NnError> {
        self.slot(name)
            .map(|s| self.tensor(s))
            .ok_or_else(|| NnError::UnknownParam(name.into()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet::new()
    }
}

/// Per-slot gradients produced by [`Tape::backward`]. Slots never touched by
/// the recorded computation stay `None`; [`Gradients::get`] reports them as
/// exact zeros and [`Gradients::untouched`] lists them so callers can raise a
/// disconnected-parameter warning.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_slot: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn empty(n_slots: usize) -> Self {
        Gradients { by_slot: vec![None; n_slots] }
    }

    pub fn n_slots(&self) -> usize {
        self.by_slot.len()
    }

    pub fn get(&self, slot: usize) -> Option<&Tensor> {
        self.by_slot[slot].as_ref()
    }

    /// Flat gradient values for a slot, materializing zeros for untouched
    /// parameters.
    pub fn dense(&self, params: &ParamSet, slot: usize) -> Tensor {
        match &self.by_slot[slot] {
            Some(t) => t.clone(),
            None => Tensor::zeros(params.tensor(slot).shape()),
        }
    }

    pub fn untouched(&self, params: &ParamSet) -> Vec<String> {
        self.by_slot
            .iter()
            .enumerate()
            .filter(|(slot, g)| g.is_none() && params.entry(*slot).trainable)
            .map(|(slot, _)| params.entry(slot).name.clone())
            .collect()
    }

    /// Directly sets a slot's gradient, replacing any accumulated value.
    pub fn set(&mut self, slot: usize, grad: Tensor) {
        self.by_slot[slot] = Some(grad);
    }

    fn add_slot(&mut self, slot: usize, grad: Tensor) {
        match &mut self.by_slot[slot] {
            Some(acc) => add_assign(acc, &grad),
            none => *none = Some(grad),
        }
    }

    /// Sums another gradient set into this one (used for batch reduction in a
    /// fixed sample order).
    pub fn accumulate(&mut self, other: &Gradients) {
        debug_assert_eq!(self.by_slot.len(), other.by_slot.len());
        for (slot, g) in other.by_slot.iter().enumerate() {
            if let Some(g) = g {
                self.add_slot(slot, g.clone());
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.by_slot.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

fn add_assign(dst: &mut Tensor, src: &Tensor) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// Cached batch-norm statistics for one node.
#[derive(Debug, Clone)]
struct BnStats {
    mean: Vec<f64>,
    var: Vec<f64>,
    /// True when the stats came from this forward pass (training mode), so
    /// the backward pass must differentiate through them.
    from_batch: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { slot: usize },
    Add { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId> },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    MatMul { a: NodeId, b: NodeId },
    Conv1d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    DepthwiseConv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    Relu { x: NodeId },
    Silu { x: NodeId, sig: Vec<f64> },
    Sigmoid { x: NodeId },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64, stats: BnStats },
    MaxPool1d { x: NodeId, argmax: Vec<usize> },
    MaskedMaxRows { x: NodeId, argmax_rows: Vec<usize> },
    GlobalAvgPool2d { x: NodeId },
    Reshape { x: NodeId },
    Softmax { x: NodeId },
    CrossEntropy { probs: NodeId, label: usize, clamped: bool },
}

struct Node {
    op: Op,
    /// Forward value; `None` for `Param` nodes, which resolve through the
    /// parameter set to avoid copying weight tensors into every tape.
    value: Option<Tensor>,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, op: Op, value: Option<Tensor>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id];
        match &node.op {
            Op::Param { slot } => self.params.tensor(*slot),
            _ => node.value.as_ref().expect("non-param node has a value"),
        }
    }

    pub fn input(&mut self, tensor: Tensor) -> NodeId {
        self.push(Op::Input, Some(tensor))
    }

    pub fn param(&mut self, slot: usize) -> NodeId {
        debug_assert!(slot < self.params.len());
        self.push(Op::Param { slot }, None)
    }

    pub fn param_named(&mut self, name: &str) -> Result<NodeId, NnError> {
        let slot = self
            .params
            .slot(name)
            .ok_or_else(|| NnError::UnknownParam(name.into()))?;
        Ok(self.param(slot))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::ShapeError(format!(
                "add {} vs {}",
                self.value(a).shape_string(),
                self.value(b).shape_string()
            )));
        }
        let mut out = self.value(a).clone();
        add_assign(&mut out, self.value(b));
        Ok(self.push(Op::Add { a, b }, Some(out)))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        if parts.is_empty() {
            return Err(NnError::EmptyInput);
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                return Err(NnError::ShapeError(format!(
                    "concat expects vectors, got {}",
                    v.shape_string()
                )));
            }
            data.extend_from_slice(v.data());
        }
        let n = data.len();
        let out = Tensor::from_vec(&[n], data)?;
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, Some(out)))
    }

    /// Dense layer `y = x W^T + b`. A 1-D `x` is one feature vector; a 2-D
    /// `[n, in]` input applies the same weights to every row (shared MLP).
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let out = linear_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(Op::Linear { x, w, b }, Some(out)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let out = matmul_forward(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul { a, b }, Some(out)))
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, NnError> {
        let out = conv1d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(Op::Conv1d { x, w, b, stride, pad }, Some(out)))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, NnError> {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(Op::Conv2d { x, w, b, stride, pad }, Some(out)))
    }

    pub fn depthwise_conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, NnError> {
        let out = depthwise_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        Ok(self.push(Op::DepthwiseConv2d { x, w, b, stride, pad }, Some(out)))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = map_unary(self.value(x), relu);
        self.push(Op::Relu { x }, Some(out))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let sig: Vec<f64> = xv.data().iter().map(|&v| sigmoid(v)).collect();
        let data: Vec<f64> = xv.data().iter().zip(&sig).map(|(&v, &s)| v * s).collect();
        let out = Tensor::from_vec(xv.shape(), data).expect("same length");
        self.push(Op::Silu { x, sig }, Some(out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = map_unary(self.value(x), sigmoid);
        self.push(Op::Sigmoid { x }, Some(out))
    }

    /// Batch normalization over all non-channel axes of `[C, ...]`, using
    /// statistics of this input (training mode). The observed statistics are
    /// retrievable through [`Tape::bn_observed`] for running-average updates.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId, NnError> {
        let (mean, var) = bn_batch_stats(self.value(x))?;
        let stats = BnStats { mean, var, from_batch: true };
        let out = bn_forward(self.value(x), self.value(gamma), self.value(beta), &stats, eps)?;
        Ok(self.push(Op::BatchNorm { x, gamma, beta, eps, stats }, Some(out)))
    }

    /// Batch normalization with frozen statistics (inference mode).
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> Result<NodeId, NnError> {
        let stats = BnStats {
            mean: running_mean.to_vec(),
            var: running_var.to_vec(),
            from_batch: false,
        };
        let out = bn_forward(self.value(x), self.value(gamma), self.value(beta), &stats, eps)?;
        Ok(self.push(Op::BatchNorm { x, gamma, beta, eps, stats }, Some(out)))
    }

    /// Per-channel statistics observed by a training-mode batch-norm node.
    pub fn bn_observed(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id].op {
            Op::BatchNorm { stats, .. } if stats.from_batch => Some((&stats.mean, &stats.var)),
            _ => None,
        }
    }

    pub fn maxpool1d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId, NnError> {
        let (out, argmax) = maxpool1d_forward(self.value(x), window, stride)?;
        Ok(self.push(Op::MaxPool1d { x, argmax }, Some(out)))
    }

    /// Column-wise max over unmasked rows of `[n, d]`; the global pooling of
    /// a point-feature matrix. `None` masks nothing.
    pub fn masked_max_rows(&mut self, x: NodeId, mask: Option<&[bool]>) -> Result<NodeId, NnError> {
        let (out, argmax_rows) = masked_max_rows_forward(self.value(x), mask)?;
        Ok(self.push(Op::MaskedMaxRows { x, argmax_rows }, Some(out)))
    }

    pub fn global_avg_pool2d(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let v = self.value(x);
        let &[c, h, w] = v.shape() else {
            return Err(NnError::ShapeError(format!(
                "global_avg_pool2d expects [C, H, W], got {}",
                v.shape_string()
            )));
        };
        let mut out = Tensor::zeros(&[c]);
        let area = (h * w) as f64;
        for ch in 0..c {
            let sum: f64 = v.data()[ch * h * w..(ch + 1) * h * w].iter().sum();
            out.data_mut()[ch] = sum / area;
        }
        Ok(self.push(Op::GlobalAvgPool2d { x }, Some(out)))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, NnError> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape { x }, Some(out)))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let v = self.value(x);
        if v.shape().len() != 1 || v.is_empty() {
            return Err(NnError::ShapeError(format!(
                "softmax expects a nonempty vector, got {}",
                v.shape_string()
            )));
        }
        let out = Tensor::from_vec(&[v.len()], softmax(v.data()))?;
        Ok(self.push(Op::Softmax { x }, Some(out)))
    }

    /// `-ln(probs[label])` with the probability clamped at
    /// [`CROSS_ENTROPY_CLAMP`]; output is a scalar loss node.
    pub fn cross_entropy(&mut self, probs: NodeId, label: usize) -> Result<NodeId, NnError> {
        let v = self.value(probs);
        if label >= v.len() {
            return Err(NnError::LabelOutOfRange { label, classes: v.len() });
        }
        let p = v.data()[label];
        let clamped = p < CROSS_ENTROPY_CLAMP;
        let loss = -(p.max(CROSS_ENTROPY_CLAMP)).ln();
        Ok(self.push(
            Op::CrossEntropy { probs, label, clamped },
            Some(Tensor::scalar(loss)),
        ))
    }

    /// Reverse sweep from a scalar loss node. Returns one gradient per
    /// parameter slot; slots the computation never read stay unset (exactly
    /// zero gradient).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::ShapeError(format!(
                "backward needs a scalar loss, got {}",
                self.value(loss).shape_string()
            )));
        }
        let mut node_grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        node_grads[loss] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        let mut out = Gradients::empty(self.params.len());

        for id in (0..=loss).rev() {
            let Some(gy) = node_grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param { slot } => out.add_slot(*slot, gy),
                Op::Add { a, b } => {
                    acc(&mut node_grads, *a, gy.clone());
                    acc(&mut node_grads, *b, gy);
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let piece = Tensor::from_vec(&[len], gy.data()[offset..offset + len].to_vec())?;
                        acc(&mut node_grads, p, piece);
                        offset += len;
                    }
                }
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = linear_backward(self.value(*x), self.value(*w), &gy);
                    acc(&mut node_grads, *x, dx);
                    acc(&mut node_grads, *w, dw);
                    acc(&mut node_grads, *b, db);
                }
                Op::MatMul { a, b } => {
                    let (da, db) = matmul_backward(self.value(*a), self.value(*b), &gy);
                    acc(&mut node_grads, *a, da);
                    acc(&mut node_grads, *b, db);
                }
                Op::Conv1d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        conv1d_backward(self.value(*x), self.value(*w), &gy, *stride, *pad);
                    acc(&mut node_grads, *x, dx);
                    acc(&mut node_grads, *w, dw);
                    acc(&mut node_grads, *b, db);
                }
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        conv2d_backward(self.value(*x), self.value(*w), &gy, *stride, *pad);
                    acc(&mut node_grads, *x, dx);
                    acc(&mut node_grads, *w, dw);
                    acc(&mut node_grads, *b, db);
                }
                Op::DepthwiseConv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) =
                        depthwise_backward(self.value(*x), self.value(*w), &gy, *stride, *pad);
                    acc(&mut node_grads, *x, dx);
                    acc(&mut node_grads, *w, dw);
                    acc(&mut node_grads, *b, db);
                }
                Op::Relu { x } => {
                    let dx = map_backward(self.value(*x), &gy, |v| if v > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut node_grads, *x, dx);
                }
                Op::Silu { x, sig } => {
                    let xv = self.value(*x);
                    let data: Vec<f64> = xv
                        .data()
                        .iter()
                        .zip(sig)
                        .zip(gy.data())
                        .map(|((&v, &s), &g)| g * (s * (1.0 + v * (1.0 - s))))
                        .collect();
                    acc(&mut node_grads, *x, Tensor::from_vec(xv.shape(), data)?);
                }
                Op::Sigmoid { x } => {
                    // sigmoid' from the forward output: s * (1 - s).
                    let out = self.value(id).data();
                    let data: Vec<f64> = out
                        .iter()
                        .zip(gy.data())
                        .map(|(&s, &g)| g * s * (1.0 - s))
                        .collect();
                    acc(&mut node_grads, *x, Tensor::from_vec(self.value(*x).shape(), data)?);
                }
                Op::BatchNorm { x, gamma, beta, eps, stats } => {
                    let (dx, dgamma, dbeta) =
                        bn_backward(self.value(*x), self.value(*gamma), stats, *eps, &gy);
                    acc(&mut node_grads, *x, dx);
                    acc(&mut node_grads, *gamma, dgamma);
                    acc(&mut node_grads, *beta, dbeta);
                }
                Op::MaxPool1d { x, argmax } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    for (out_i, &src) in argmax.iter().enumerate() {
                        dx.data_mut()[src] += gy.data()[out_i];
                    }
                    acc(&mut node_grads, *x, dx);
                }
                Op::MaskedMaxRows { x, argmax_rows } => {
                    let xv = self.value(*x);
                    let d = xv.shape()[1];
                    let mut dx = Tensor::zeros(xv.shape());
                    for (col, &row) in argmax_rows.iter().enumerate() {
                        dx.data_mut()[row * d + col] += gy.data()[col];
                    }
                    acc(&mut node_grads, *x, dx);
                }
                Op::GlobalAvgPool2d { x } => {
                    let xv = self.value(*x);
                    let &[c, h, w] = xv.shape() else { unreachable!() };
                    let area = (h * w) as f64;
                    let mut dx = Tensor::zeros(xv.shape());
                    for ch in 0..c {
                        let g = gy.data()[ch] / area;
                        for v in &mut dx.data_mut()[ch * h * w..(ch + 1) * h * w] {
                            *v = g;
                        }
                    }
                    acc(&mut node_grads, *x, dx);
                }
                Op::Reshape { x } => {
                    let dx = gy.reshaped(self.value(*x).shape())?;
                    acc(&mut node_grads, *x, dx);
                }
                Op::Softmax { x } => {
                    let p = self.value(id).data();
                    let dot: f64 = p.iter().zip(gy.data()).map(|(pi, gi)| pi * gi).sum();
                    let dx_data: Vec<f64> = p
                        .iter()
                        .zip(gy.data())
                        .map(|(pi, gi)| pi * (gi - dot))
                        .collect();
                    acc(&mut node_grads, *x, Tensor::from_vec(self.value(*x).shape(), dx_data)?);
                }
                Op::CrossEntropy { probs, label, clamped } => {
                    let pv = self.value(*probs);
                    let mut dp = Tensor::zeros(pv.shape());
                    if !clamped {
                        dp.data_mut()[*label] = -gy.item() / pv.data()[*label];
                    }
                    acc(&mut node_grads, *probs, dp);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => add_assign(g, &delta),
        none => *none = Some(delta),
    }
}

fn map_unary(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_vec(x.shape(), data).expect("same length")
}

fn map_backward(x: &Tensor, gy: &Tensor, dfdx: impl Fn(f64) -> f64) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&v, &g)| g * dfdx(v))
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same length")
}

// ── dense / matmul ──────────────────────────────────────────────────────────

fn linear_shapes<'a>(
    x: &'a Tensor,
    w: &Tensor,
    b: &Tensor,
) -> Result<(usize, usize, usize), NnError> {
    let (out_dim, in_dim) = match *w.shape() {
        [o, i] => (o, i),
        _ => {
            return Err(NnError::ShapeError(format!(
                "linear weight must be [out, in], got {}",
                w.shape_string()
            )))
        }
    };
    if b.shape() != [out_dim] {
        return Err(NnError::ShapeError(format!(
            "linear bias {} does not match out dim {out_dim}",
            b.shape_string()
        )));
    }
    let rows = match *x.shape() {
        [i] if i == in_dim => 1,
        [n, i] if i == in_dim => n,
        _ => {
            return Err(NnError::ShapeError(format!(
                "linear input {} does not match in dim {in_dim}",
                x.shape_string()
            )))
        }
    };
    Ok((rows, in_dim, out_dim))
}

fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (rows, in_dim, out_dim) = linear_shapes(x, w, b)?;
    // Transposed weights make the inner loop a contiguous axpy.
    let mut wt = vec![0.0; in_dim * out_dim];
    for o in 0..out_dim {
        for i in 0..in_dim {
            wt[i * out_dim + o] = w.data()[o * in_dim + i];
        }
    }
    let mut y = vec![0.0; rows * out_dim];
    for r in 0..rows {
        let xr = &x.data()[r * in_dim..(r + 1) * in_dim];
        let yr = &mut y[r * out_dim..(r + 1) * out_dim];
        yr.copy_from_slice(b.data());
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &wt[i * out_dim..(i + 1) * out_dim];
            for (yv, &wv) in yr.iter_mut().zip(wrow) {
                *yv += xv * wv;
            }
        }
    }
    if x.shape().len() == 1 {
        Tensor::from_vec(&[out_dim], y)
    } else {
        Tensor::from_vec(&[rows, out_dim], y)
    }
}

fn linear_backward(x: &Tensor, w: &Tensor, gy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    let rows = if x.shape().len() == 1 { 1 } else { x.shape()[0] };
    let mut dx = vec![0.0; rows * in_dim];
    let mut dw = vec![0.0; out_dim * in_dim];
    let mut db = vec![0.0; out_dim];
    for r in 0..rows {
        let gyr = &gy.data()[r * out_dim..(r + 1) * out_dim];
        let xr = &x.data()[r * in_dim..(r + 1) * in_dim];
        let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            let g = gyr[o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wrow = &w.data()[o * in_dim..(o + 1) * in_dim];
            let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                dxr[i] += g * wrow[i];
                dwrow[i] += g * xr[i];
            }
        }
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(w.shape(), dw).expect("shape"),
        Tensor::from_vec(&[out_dim], db).expect("shape"),
    )
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(NnError::ShapeError(format!(
            "matmul expects 2-D operands, got {} and {}",
            a.shape_string(),
            b.shape_string()
        )));
    };
    if k != k2 {
        return Err(NnError::ShapeError(format!(
            "matmul inner dims {k} vs {k2}"
        )));
    }
    let mut y = vec![0.0; m * n];
    for i in 0..m {
        let yr = &mut y[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a.data()[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[l * n..(l + 1) * n];
            for (yv, &bv) in yr.iter_mut().zip(brow) {
                *yv += av * bv;
            }
        }
    }
    Tensor::from_vec(&[m, n], y)
}

fn matmul_backward(a: &Tensor, b: &Tensor, gy: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut da = vec![0.0; m * k];
    let mut db = vec![0.0; k * n];
    for i in 0..m {
        let gyr = &gy.data()[i * n..(i + 1) * n];
        for l in 0..k {
            let brow = &b.data()[l * n..(l + 1) * n];
            let mut accum = 0.0;
            for j in 0..n {
                accum += gyr[j] * brow[j];
            }
            da[i * k + l] = accum;
            let av = a.data()[i * k + l];
            if av != 0.0 {
                let dbrow = &mut db[l * n..(l + 1) * n];
                for (dv, &g) in dbrow.iter_mut().zip(gyr) {
                    *dv += av * g;
                }
            }
        }
    }
    (
        Tensor::from_vec(a.shape(), da).expect("shape"),
        Tensor::from_vec(b.shape(), db).expect("shape"),
    )
}

// ── convolutions ────────────────────────────────────────────────────────────

fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize, NnError> {
    let padded = input + 2 * pad;
    if padded < kernel || stride == 0 {
        return Err(NnError::ShapeError(format!(
            "kernel {kernel} (stride {stride}) does not fit input {input} with pad {pad}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn pad1d(x: &Tensor, pad: usize) -> (Vec<f64>, usize) {
    let (c, l) = (x.shape()[0], x.shape()[1]);
    let lp = l + 2 * pad;
    let mut out = vec![0.0; c * lp];
    for ch in 0..c {
        out[ch * lp + pad..ch * lp + pad + l].copy_from_slice(&x.data()[ch * l..(ch + 1) * l]);
    }
    (out, lp)
}

fn conv1d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let (&[cin, l], &[cout, cin2, k]) = (x.shape(), w.shape()) else {
        return Err(NnError::ShapeError(format!(
            "conv1d expects x [Cin, L] and w [Cout, Cin, K], got {} and {}",
            x.shape_string(),
            w.shape_string()
        )));
    };
    if cin != cin2 || b.shape() != [cout] {
        return Err(NnError::ShapeError(format!(
            "conv1d channels: x {cin}, w {cin2}, bias {}",
            b.shape_string()
        )));
    }
    let lo = conv_out_len(l, k, stride, pad)?;
    let (xp, lp) = pad1d(x, pad);
    let mut y = vec![0.0; cout * lo];
    for co in 0..cout {
        let yr = &mut y[co * lo..(co + 1) * lo];
        yr.iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..cin {
            let xrow = &xp[ci * lp..(ci + 1) * lp];
            for kk in 0..k {
                let wv = w.data()[(co * cin + ci) * k + kk];
                if wv == 0.0 {
                    continue;
                }
                for t in 0..lo {
                    yr[t] += wv * xrow[t * stride + kk];
                }
            }
        }
    }
    Tensor::from_vec(&[cout, lo], y)
}

fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, l) = (x.shape()[0], x.shape()[1]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let lo = gy.shape()[1];
    let (xp, lp) = pad1d(x, pad);
    let mut dxp = vec![0.0; cin * lp];
    let mut dw = vec![0.0; cout * cin * k];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        let gyr = &gy.data()[co * lo..(co + 1) * lo];
        db[co] += gyr.iter().sum::<f64>();
        for ci in 0..cin {
            let xrow = &xp[ci * lp..(ci + 1) * lp];
            let dxrow = &mut dxp[ci * lp..(ci + 1) * lp];
            for kk in 0..k {
                let wv = w.data()[(co * cin + ci) * k + kk];
                let mut dwv = 0.0;
                for t in 0..lo {
                    let g = gyr[t];
                    dwv += g * xrow[t * stride + kk];
                    dxrow[t * stride + kk] += g * wv;
                }
                dw[(co * cin + ci) * k + kk] += dwv;
            }
        }
    }
    let mut dx = vec![0.0; cin * l];
    for ci in 0..cin {
        dx[ci * l..(ci + 1) * l].copy_from_slice(&dxp[ci * lp + pad..ci * lp + pad + l]);
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(w.shape(), dw).expect("shape"),
        Tensor::from_vec(&[cout], db).expect("shape"),
    )
}

fn pad2d(x: &Tensor, pad: usize) -> (Vec<f64>, usize, usize) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for row in 0..h {
            let src = &x.data()[(ch * h + row) * w..(ch * h + row + 1) * w];
            let dst_base = (ch * hp + row + pad) * wp + pad;
            out[dst_base..dst_base + w].copy_from_slice(src);
        }
    }
    (out, hp, wp)
}

fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let (&[cin, h, wd], &[cout, cin2, kh, kw]) = (x.shape(), w.shape()) else {
        return Err(NnError::ShapeError(format!(
            "conv2d expects x [Cin, H, W] and w [Cout, Cin, Kh, Kw], got {} and {}",
            x.shape_string(),
            w.shape_string()
        )));
    };
    if cin != cin2 || b.shape() != [cout] {
        return Err(NnError::ShapeError(format!(
            "conv2d channels: x {cin}, w {cin2}, bias {}",
            b.shape_string()
        )));
    }
    let oh = conv_out_len(h, kh, stride, pad)?;
    let ow = conv_out_len(wd, kw, stride, pad)?;
    if kh == 1 && kw == 1 && stride == 1 && pad == 0 {
        return conv2d_1x1_forward(x, w, b, cin, cout, h * wd);
    }
    let (xp, hp, wp) = pad2d(x, pad);
    let mut y = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        let ybase = co * oh * ow;
        y[ybase..ybase + oh * ow].iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let xrow = &xp[(ci * hp + oy * stride + ky) * wp + kx..];
                        let yrow = &mut y[ybase + oy * ow..ybase + (oy + 1) * ow];
                        if stride == 1 {
                            for (yv, &xv) in yrow.iter_mut().zip(&xrow[..ow]) {
                                *yv += wv * xv;
                            }
                        } else {
                            for (ox, yv) in yrow.iter_mut().enumerate() {
                                *yv += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[cout, oh, ow], y)
}

fn conv2d_1x1_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    cin: usize,
    cout: usize,
    area: usize,
) -> Result<Tensor, NnError> {
    let mut y = vec![0.0; cout * area];
    for co in 0..cout {
        let yslice = &mut y[co * area..(co + 1) * area];
        yslice.iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..cin {
            let wv = w.data()[co * cin + ci];
            if wv == 0.0 {
                continue;
            }
            let xslice = &x.data()[ci * area..(ci + 1) * area];
            for (yv, &xv) in yslice.iter_mut().zip(xslice) {
                *yv += wv * xv;
            }
        }
    }
    let (h, wd) = (x.shape()[1], x.shape()[2]);
    Tensor::from_vec(&[cout, h, wd], y)
}

fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (gy.shape()[1], gy.shape()[2]);
    if kh == 1 && kw == 1 && stride == 1 && pad == 0 {
        return conv2d_1x1_backward(x, w, gy, cin, cout, h * wd);
    }
    let (xp, hp, wp) = pad2d(x, pad);
    let mut dxp = vec![0.0; cin * hp * wp];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        let gslice = &gy.data()[co * oh * ow..(co + 1) * oh * ow];
        db[co] += gslice.iter().sum::<f64>();
        for ci in 0..cin {
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((co * cin + ci) * kh + ky) * kw + kx;
                    let wv = w.data()[widx];
                    let mut dwv = 0.0;
                    for oy in 0..oh {
                        let gyrow = &gslice[oy * ow..(oy + 1) * ow];
                        let base = (ci * hp + oy * stride + ky) * wp + kx;
                        if stride == 1 {
                            let xrow = &xp[base..base + ow];
                            let dxrow = &mut dxp[base..base + ow];
                            for ox in 0..ow {
                                let g = gyrow[ox];
                                dwv += g * xrow[ox];
                                dxrow[ox] += g * wv;
                            }
                        } else {
                            for ox in 0..ow {
                                let g = gyrow[ox];
                                dwv += g * xp[base + ox * stride];
                                dxp[base + ox * stride] += g * wv;
                            }
                        }
                    }
                    dw[widx] += dwv;
                }
            }
        }
    }
    let mut dx = vec![0.0; cin * h * wd];
    for ci in 0..cin {
        for row in 0..h {
            let src = (ci * hp + row + pad) * wp + pad;
            let dst = (ci * h + row) * wd;
            dx[dst..dst + wd].copy_from_slice(&dxp[src..src + wd]);
        }
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(w.shape(), dw).expect("shape"),
        Tensor::from_vec(&[cout], db).expect("shape"),
    )
}

fn conv2d_1x1_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    cin: usize,
    cout: usize,
    area: usize,
) -> (Tensor, Tensor, Tensor) {
    let mut dx = vec![0.0; cin * area];
    let mut dw = vec![0.0; cout * cin];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        let gslice = &gy.data()[co * area..(co + 1) * area];
        db[co] += gslice.iter().sum::<f64>();
        for ci in 0..cin {
            let wv = w.data()[co * cin + ci];
            let xslice = &x.data()[ci * area..(ci + 1) * area];
            let dxslice = &mut dx[ci * area..(ci + 1) * area];
            let mut dwv = 0.0;
            for ((dv, &xv), &g) in dxslice.iter_mut().zip(xslice).zip(gslice) {
                dwv += g * xv;
                *dv += g * wv;
            }
            dw[co * cin + ci] += dwv;
        }
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(w.shape(), dw).expect("shape"),
        Tensor::from_vec(&[cout], db).expect("shape"),
    )
}

fn depthwise_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let (&[c, h, wd], &[c2, kh, kw]) = (x.shape(), w.shape()) else {
        return Err(NnError::ShapeError(format!(
            "depthwise conv expects x [C, H, W] and w [C, Kh, Kw], got {} and {}",
            x.shape_string(),
            w.shape_string()
        )));
    };
    if c != c2 || b.shape() != [c] {
        return Err(NnError::ShapeError(format!(
            "depthwise channels: x {c}, w {c2}, bias {}",
            b.shape_string()
        )));
    }
    let oh = conv_out_len(h, kh, stride, pad)?;
    let ow = conv_out_len(wd, kw, stride, pad)?;
    let (xp, hp, wp) = pad2d(x, pad);
    let mut y = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let ybase = ch * oh * ow;
        y[ybase..ybase + oh * ow].iter_mut().for_each(|v| *v = b.data()[ch]);
        for ky in 0..kh {
            for kx in 0..kw {
                let wv = w.data()[(ch * kh + ky) * kw + kx];
                if wv == 0.0 {
                    continue;
                }
                for oy in 0..oh {
                    let xrow = &xp[(ch * hp + oy * stride + ky) * wp + kx..];
                    let yrow = &mut y[ybase + oy * ow..ybase + (oy + 1) * ow];
                    for (ox, yv) in yrow.iter_mut().enumerate() {
                        *yv += wv * xrow[ox * stride];
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], y)
}

fn depthwise_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw) = (w.shape()[1], w.shape()[2]);
    let (oh, ow) = (gy.shape()[1], gy.shape()[2]);
    let (xp, hp, wp) = pad2d(x, pad);
    let mut dxp = vec![0.0; c * hp * wp];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c];
    for ch in 0..c {
        let gslice = &gy.data()[ch * oh * ow..(ch + 1) * oh * ow];
        db[ch] += gslice.iter().sum::<f64>();
        for ky in 0..kh {
            for kx in 0..kw {
                let widx = (ch * kh + ky) * kw + kx;
                let wv = w.data()[widx];
                let mut dwv = 0.0;
                for oy in 0..oh {
                    let gyrow = &gslice[oy * ow..(oy + 1) * ow];
                    let base = (ch * hp + oy * stride + ky) * wp + kx;
                    for ox in 0..ow {
                        let g = gyrow[ox];
                        dwv += g * xp[base + ox * stride];
                        dxp[base + ox * stride] += g * wv;
                    }
                }
                dw[widx] += dwv;
            }
        }
    }
    let mut dx = vec![0.0; c * h * wd];
    for ch in 0..c {
        for row in 0..h {
            let src = (ch * hp + row + pad) * wp + pad;
            let dst = (ch * h + row) * wd;
            dx[dst..dst + wd].copy_from_slice(&dxp[src..src + wd]);
        }
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(w.shape(), dw).expect("shape"),
        Tensor::from_vec(&[c], db).expect("shape"),
    )
}

// ── pooling / normalization ─────────────────────────────────────────────────

pub(super) fn maxpool1d_forward(
    x: &Tensor,
    window: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>), NnError> {
    let &[c, l] = x.shape() else {
        return Err(NnError::ShapeError(format!(
            "maxpool1d expects [C, L], got {}",
            x.shape_string()
        )));
    };
    if window == 0 || stride == 0 || l == 0 {
        return Err(NnError::ShapeError(format!(
            "maxpool1d window {window}, stride {stride}, length {l}"
        )));
    }
    // Inputs shorter than the window pool into a single truncated window;
    // otherwise trailing elements that do not fill a window are dropped.
    let lo = if l >= window { (l - window) / stride + 1 } else { 1 };
    let mut y = vec![0.0; c * lo];
    let mut argmax = vec![0usize; c * lo];
    for ch in 0..c {
        let row = &x.data()[ch * l..(ch + 1) * l];
        for t in 0..lo {
            let start = t * stride;
            let end = (start + window).min(l);
            let mut best = start;
            for i in start + 1..end {
                if row[i] > row[best] {
                    best = i;
                }
            }
            y[ch * lo + t] = row[best];
            argmax[ch * lo + t] = ch * l + best;
        }
    }
    Ok((Tensor::from_vec(&[c, lo], y)?, argmax))
}

pub(super) fn masked_max_rows_forward(
    x: &Tensor,
    mask: Option<&[bool]>,
) -> Result<(Tensor, Vec<usize>), NnError> {
    let &[n, d] = x.shape() else {
        return Err(NnError::ShapeError(format!(
            "masked max expects [n, d], got {}",
            x.shape_string()
        )));
    };
    if let Some(m) = mask {
        if m.len() != n {
            return Err(NnError::ShapeError(format!(
                "mask length {} vs {n} rows",
                m.len()
            )));
        }
    }
    let live = |row: usize| mask.map_or(true, |m| m[row]);
    let mut first = None;
    for row in 0..n {
        if live(row) {
            first = Some(row);
            break;
        }
    }
    let Some(first) = first else {
        return Err(NnError::AllMasked);
    };
    let mut y = x.data()[first * d..(first + 1) * d].to_vec();
    let mut argmax = vec![first; d];
    for row in first + 1..n {
        if !live(row) {
            continue;
        }
        let xr = &x.data()[row * d..(row + 1) * d];
        for col in 0..d {
            if xr[col] > y[col] {
                y[col] = xr[col];
                argmax[col] = row;
            }
        }
    }
    Ok((Tensor::from_vec(&[d], y)?, argmax))
}

fn bn_layout(x: &Tensor) -> Result<(usize, usize), NnError> {
    match x.shape() {
        [] => Err(NnError::ShapeError("batch norm on a scalar".into())),
        [c] => Ok((*c, 1)),
        shape => Ok((shape[0], shape[1..].iter().product())),
    }
}

fn bn_batch_stats(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let (c, m) = bn_layout(x)?;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let slice = &x.data()[ch * m..(ch + 1) * m];
        let mu = slice.iter().sum::<f64>() / m as f64;
        let v = slice.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        mean[ch] = mu;
        var[ch] = v;
    }
    Ok((mean, var))
}

fn bn_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &BnStats,
    eps: f64,
) -> Result<Tensor, NnError> {
    let (c, m) = bn_layout(x)?;
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c {
        return Err(NnError::ShapeError(format!(
            "batch norm over {c} channels, gamma {}, beta {}",
            gamma.shape_string(),
            beta.shape_string()
        )));
    }
    let mut y = vec![0.0; x.len()];
    for ch in 0..c {
        let inv = 1.0 / (stats.var[ch] + eps).sqrt();
        let (g, b, mu) = (gamma.data()[ch], beta.data()[ch], stats.mean[ch]);
        let xs = &x.data()[ch * m..(ch + 1) * m];
        let ys = &mut y[ch * m..(ch + 1) * m];
        for (yv, &xv) in ys.iter_mut().zip(xs) {
            *yv = g * (xv - mu) * inv + b;
        }
    }
    Tensor::from_vec(x.shape(), y)
}

fn bn_backward(
    x: &Tensor,
    gamma: &Tensor,
    stats: &BnStats,
    eps: f64,
    gy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (c, m) = bn_layout(x).expect("validated at forward");
    let mut dx = vec![0.0; x.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let inv = 1.0 / (stats.var[ch] + eps).sqrt();
        let mu = stats.mean[ch];
        let g = gamma.data()[ch];
        let xs = &x.data()[ch * m..(ch + 1) * m];
        let gys = &gy.data()[ch * m..(ch + 1) * m];
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (&xv, &gv) in xs.iter().zip(gys) {
            let xhat = (xv - mu) * inv;
            sum_dy += gv;
            sum_dy_xhat += gv * xhat;
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let dxs = &mut dx[ch * m..(ch + 1) * m];
        if stats.from_batch {
            let mf = m as f64;
            for ((dv, &xv), &gv) in dxs.iter_mut().zip(xs).zip(gys) {
                let xhat = (xv - mu) * inv;
                *dv = g * inv * (gv - sum_dy / mf - xhat * sum_dy_xhat / mf);
            }
        } else {
            for (dv, &gv) in dxs.iter_mut().zip(gys) {
                *dv = g * inv * gv;
            }
        }
    }
    (
        Tensor::from_vec(x.shape(), dx).expect("shape"),
        Tensor::from_vec(&[c], dgamma).expect("shape"),
        Tensor::from_vec(&[c], dbeta).expect("shape"),
    )
}
