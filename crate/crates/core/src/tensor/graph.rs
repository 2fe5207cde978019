use std::collections::HashMap;

use rayon::prelude::*;

use super::kernels::{self, ConvGeom};
use super::{Real, Tensor};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Below this many multiply-adds per sample a conv runs on the calling thread.
const PAR_WORK_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `(x, w [fin, fout], b [fout])`; `x` is flattened per sample.
    Dense,
    /// `(x [n, ci, h, w], w [co, ci, k, k], b [co])`
    Conv2d { stride: usize, padding: usize },
    /// `(x [n, ci, h, w], w [ci, co, k, k], b [co])`
    Deconv2d {
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    Relu,
    LeakyRelu(f64),
    Tanh,
    /// Concatenates along axis 1; all other axes must agree.
    ConcatChannels,
    /// `(x, mask)`; the mask already carries the `1 / (1 - rate)` scaling.
    Dropout { rate: f64 },
    /// `[n, k] -> [n, k, height, width]`
    SpatialReplicate { height: usize, width: usize },
    Add,
    Scale(f64),
    /// Per-sample sum, `[n, ..] -> [n, 1]`.
    ReduceSum,
    /// Per-sample mean, `[n, ..] -> [n, 1]`.
    ReduceMean,
    /// `(x, gamma [c], beta [c])` normalized with the statistics of the
    /// current batch over every axis except axis 1.
    BatchNorm { eps: f64 },
    /// Reshapes each sample; the batch axis is kept.
    Reshape(Vec<usize>),
}

impl OpKind {
    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Dense | OpKind::Conv2d { .. } | OpKind::Deconv2d { .. } | OpKind::BatchNorm { .. } => Some(3),
            OpKind::Dropout { .. } | OpKind::Add => Some(2),
            OpKind::ConcatChannels => None,
            _ => Some(1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Dense => "dense",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Deconv2d { .. } => "deconv2d",
            OpKind::Relu => "relu",
            OpKind::LeakyRelu(_) => "leaky_relu",
            OpKind::Tanh => "tanh",
            OpKind::ConcatChannels => "concat_channels",
            OpKind::Dropout { .. } => "dropout",
            OpKind::SpatialReplicate { .. } => "spatial_replicate",
            OpKind::Add => "add",
            OpKind::Scale(_) => "scale",
            OpKind::ReduceSum => "reduce_sum",
            OpKind::ReduceMean => "reduce_mean",
            OpKind::BatchNorm { .. } => "batchnorm",
            OpKind::Reshape(_) => "reshape",
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Input(String),
    Op { kind: OpKind, inputs: Vec<NodeId> },
}

/// A static computation graph. Nodes can only reference earlier nodes, so the
/// insertion order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: HashMap<String, NodeId>,
    outputs: Vec<(String, NodeId)>,
}

/// Named tensors bound to graph inputs for one evaluation.
pub struct Bindings<'a, S> {
    map: HashMap<&'a str, &'a Tensor<S>>,
}

impl<'a, S> Default for Bindings<'a, S> {
    fn default() -> Self {
        Bindings {
            map: HashMap::new(),
        }
    }
}

impl<'a, S> Bindings<'a, S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: &'a str, t: &'a Tensor<S>) -> &mut Self {
        self.map.insert(name, t);
        self
    }

    pub fn with(mut self, name: &'a str, t: &'a Tensor<S>) -> Self {
        self.map.insert(name, t);
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a Tensor<S>> {
        self.map.get(name).copied()
    }
}

enum Slot<'a, S> {
    Empty,
    Borrowed(&'a Tensor<S>),
    Owned(Tensor<S>),
}

/// Forward values recorded by [`Graph::evaluate`], consumed by [`Graph::backprop`].
pub struct Tape<'a, S> {
    values: Vec<Slot<'a, S>>,
    // batchnorm: per-channel (mean, inv_std)
    aux: Vec<Option<(Vec<S>, Vec<S>)>>,
}

impl<'a, S: Real> Tape<'a, S> {
    pub fn value(&self, id: NodeId) -> Option<&Tensor<S>> {
        match self.values.get(id)? {
            Slot::Empty => None,
            Slot::Borrowed(t) => Some(t),
            Slot::Owned(t) => Some(t),
        }
    }

    fn val(&self, id: NodeId) -> &Tensor<S> {
        self.value(id).expect("node evaluated before use")
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a named input (data, parameter, or dropout mask).
    pub fn input(&mut self, name: &str) -> NodeId {
        assert!(
            !self.inputs.contains_key(name),
            "duplicate graph input `{name}`"
        );
        let id = self.nodes.len();
        self.nodes.push(Node::Input(name.to_string()));
        self.inputs.insert(name.to_string(), id);
        id
    }

    pub fn op(&mut self, kind: OpKind, inputs: &[NodeId]) -> NodeId {
        if let Some(n) = kind.arity() {
            assert_eq!(inputs.len(), n, "{} takes {n} inputs", kind.name());
        } else {
            assert!(!inputs.is_empty(), "{} needs inputs", kind.name());
        }
        let id = self.nodes.len();
        assert!(inputs.iter().all(|&i| i < id), "inputs must precede the op");
        self.nodes.push(Node::Op {
            kind,
            inputs: inputs.to_vec(),
        });
        id
    }

    pub fn set_output(&mut self, name: &str, id: NodeId) {
        assert!(id < self.nodes.len());
        self.outputs.retain(|(n, _)| n != name);
        self.outputs.push((name.to_string(), id));
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, id)| id)
    }

    pub fn input_id(&self, name: &str) -> Option<NodeId> {
        self.inputs.get(name).copied()
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Input(name) => Some(name.as_str()),
            Node::Op { .. } => None,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Kinds of all op nodes, in evaluation order.
    pub fn op_kinds(&self) -> impl Iterator<Item = &OpKind> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Op { kind, .. } => Some(kind),
            Node::Input(_) => None,
        })
    }

    // ---- builder conveniences ----

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        self.op(OpKind::Dense, &[x, w, b])
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize, padding: usize) -> NodeId {
        self.op(OpKind::Conv2d { stride, padding }, &[x, w, b])
    }

    pub fn deconv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> NodeId {
        self.op(
            OpKind::Deconv2d {
                stride,
                padding,
                output_padding,
            },
            &[x, w, b],
        )
    }

    pub fn unary(&mut self, kind: OpKind, x: NodeId) -> NodeId {
        self.op(kind, &[x])
    }

    pub fn concat_channels(&mut self, xs: &[NodeId]) -> NodeId {
        self.op(OpKind::ConcatChannels, xs)
    }

    // ---- evaluation ----

    fn live_set(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        for &(_, id) in &self.outputs {
            live[id] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if !live[i] {
                continue;
            }
            if let Node::Op { inputs, .. } = &self.nodes[i] {
                for &j in inputs {
                    live[j] = true;
                }
            }
        }
        live
    }

    pub fn evaluate<'a, S: Real>(&self, bindings: &Bindings<'a, S>) -> Result<Tape<'a, S>> {
        self.run(bindings, false)
    }

    /// Like [`Graph::evaluate`] but fails on the first non-finite value.
    pub fn evaluate_checked<'a, S: Real>(&self, bindings: &Bindings<'a, S>) -> Result<Tape<'a, S>> {
        self.run(bindings, true)
    }

    fn run<'a, S: Real>(&self, bindings: &Bindings<'a, S>, checked: bool) -> Result<Tape<'a, S>> {
        let live = self.live_set();
        let mut tape = Tape {
            values: Vec::with_capacity(self.nodes.len()),
            aux: vec![None; self.nodes.len()],
        };
        for (id, node) in self.nodes.iter().enumerate() {
            let slot = match node {
                Node::Input(name) => match bindings.get(name) {
                    Some(t) => {
                        if checked && !t.is_finite() {
                            return Err(Error::NonFinite(format!("input `{name}`")));
                        }
                        Slot::Borrowed(t)
                    }
                    None if live[id] => return Err(Error::UnboundInput(name.clone())),
                    None => Slot::Empty,
                },
                Node::Op { .. } if !live[id] => Slot::Empty,
                Node::Op { kind, inputs } => {
                    let args: Vec<&Tensor<S>> = inputs.iter().map(|&i| tape.val(i)).collect();
                    let (out, aux) = forward(kind, &args)?;
                    if checked && !out.is_finite() {
                        return Err(Error::NonFinite(format!("{} (node {id})", kind.name())));
                    }
                    tape.aux[id] = aux;
                    Slot::Owned(out)
                }
            };
            tape.values.push(slot);
        }
        Ok(tape)
    }

    /// Value of a named output on a tape.
    pub fn fetch<'t, S: Real>(&self, tape: &'t Tape<'_, S>, output: &str) -> Result<&'t Tensor<S>> {
        let id = self
            .output(output)
            .ok_or_else(|| Error::UnknownNode(output.to_string()))?;
        tape.value(id)
            .ok_or_else(|| Error::UnknownNode(output.to_string()))
    }

    /// Reverse-mode gradients of `<seed, output>` with respect to the named
    /// inputs in `wrt`.
    pub fn backprop<S: Real>(
        &self,
        tape: &Tape<'_, S>,
        output: &str,
        seed: &Tensor<S>,
        wrt: &[&str],
    ) -> Result<HashMap<String, Tensor<S>>> {
        let out_id = self
            .output(output)
            .ok_or_else(|| Error::UnknownNode(output.to_string()))?;
        let mut targets = Vec::with_capacity(wrt.len());
        for &name in wrt {
            let id = self
                .input_id(name)
                .filter(|&id| tape.value(id).is_some())
                .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
            targets.push((name, id));
        }
        let out_val = tape.value(out_id).ok_or_else(|| Error::UnknownNode(output.to_string()))?;
        if seed.shape() != out_val.shape() {
            return Err(Error::shape(format!(
                "seed {:?} vs output {:?}",
                seed.shape(),
                out_val.shape()
            )));
        }

        // Only nodes that depend on a requested input carry adjoints.
        let mut need = vec![false; self.nodes.len()];
        for &(_, id) in &targets {
            need[id] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Op { inputs, .. } = node {
                need[i] = inputs.iter().any(|&j| need[j]);
            }
        }

        let mut adj: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        if need[out_id] {
            adj[out_id] = Some(seed.clone());
        }
        for i in (0..=out_id).rev() {
            let Node::Op { kind, inputs } = &self.nodes[i] else {
                continue;
            };
            if !need[i] {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let args: Vec<&Tensor<S>> = inputs.iter().map(|&j| tape.val(j)).collect();
            let want: Vec<bool> = inputs.iter().map(|&j| need[j]).collect();
            let grads = backward(kind, &args, tape.val(i), tape.aux[i].as_ref(), &g, &want)?;
            for (&j, gj) in inputs.iter().zip(grads) {
                let Some(gj) = gj else { continue };
                match &mut adj[j] {
                    Some(acc) => acc.axpy(S::one(), &gj)?,
                    slot @ None => *slot = Some(gj),
                }
            }
        }

        let mut result = HashMap::with_capacity(targets.len());
        for (name, id) in targets {
            let g = adj[id]
                .take()
                .unwrap_or_else(|| Tensor::zeros(tape.val(id).shape().to_vec()));
            result.insert(name.to_string(), g);
        }
        Ok(result)
    }
}

// ---------------------------------------------------------------------------
// forward

fn expect_rank<S: Real>(t: &Tensor<S>, rank: usize, what: &str) -> Result<()> {
    if t.shape().len() != rank {
        return Err(Error::shape(format!(
            "{what}: expected rank {rank}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn conv_geom<S: Real>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>, stride: usize, pad: usize) -> Result<ConvGeom> {
    expect_rank(x, 4, "conv2d input")?;
    expect_rank(w, 4, "conv2d weight")?;
    let (ci, h, wd) = (x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, wci, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if wci != ci || k != k2 || b.shape() != [co] || stride == 0 {
        return Err(Error::shape(format!(
            "conv2d: input {:?}, weight {:?}, bias {:?}, stride {stride}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(Error::shape(format!("conv2d: kernel {k} larger than padded input {h}x{wd}")));
    }
    Ok(ConvGeom {
        ci,
        h,
        w: wd,
        co,
        ho: (h + 2 * pad - k) / stride + 1,
        wo: (wd + 2 * pad - k) / stride + 1,
        k,
        stride,
        pad,
    })
}

/// Geometry of a transposed convolution, expressed as the forward conv it is
/// the adjoint of: the conv's input is the deconv output.
fn deconv_geom<S: Real>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<ConvGeom> {
    expect_rank(x, 4, "deconv2d input")?;
    expect_rank(w, 4, "deconv2d weight")?;
    let (ci, h, wd) = (x.shape()[1], x.shape()[2], x.shape()[3]);
    let (wci, co, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if wci != ci || k != k2 || b.shape() != [co] || stride == 0 || out_pad >= stride {
        return Err(Error::shape(format!(
            "deconv2d: input {:?}, weight {:?}, bias {:?}, stride {stride}, output_padding {out_pad}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let full_h = (h - 1) * stride + k + out_pad;
    let full_w = (wd - 1) * stride + k + out_pad;
    if full_h <= 2 * pad || full_w <= 2 * pad {
        return Err(Error::shape("deconv2d: padding consumes the whole output"));
    }
    Ok(ConvGeom {
        ci: co,
        h: full_h - 2 * pad,
        w: full_w - 2 * pad,
        co: ci,
        ho: h,
        wo: wd,
        k,
        stride,
        pad,
    })
}

fn add_bias<S: Real>(out: &mut [S], b: &[S], plane: usize) {
    for (c, chunk) in out.chunks_mut(plane).enumerate() {
        let bv = b[c % b.len()];
        for v in chunk {
            *v += bv;
        }
    }
}

fn forward<S: Real>(kind: &OpKind, a: &[&Tensor<S>]) -> Result<(Tensor<S>, Option<(Vec<S>, Vec<S>)>)> {
    let out = match kind {
        OpKind::Dense => {
            let (x, w, b) = (a[0], a[1], a[2]);
            let n = x.batch();
            let fin = x.per_sample();
            if w.shape().len() != 2 || w.shape()[0] != fin || b.shape() != [w.shape()[1]] {
                return Err(Error::shape(format!(
                    "dense: input {:?}, weight {:?}, bias {:?}",
                    x.shape(),
                    w.shape(),
                    b.shape()
                )));
            }
            let fout = w.shape()[1];
            let mut out = Tensor::zeros([n, fout]);
            for i in 0..n {
                let o = out.sample_mut(i);
                o.copy_from_slice(b.data());
                kernels::dense_forward(x.sample(i), w.data(), fout, o);
            }
            out
        }
        OpKind::Conv2d { stride, padding } => {
            let (x, w, b) = (a[0], a[1], a[2]);
            let g = conv_geom(x, w, b, *stride, *padding)?;
            let n = x.batch();
            let mut out = Tensor::zeros([n, g.co, g.ho, g.wo]);
            let run = |(i, o): (usize, &mut [S])| {
                add_bias(o, b.data(), g.ho * g.wo);
                kernels::conv_forward(&g, x.sample(i), w.data(), o);
            };
            if g.out_len() * g.ci * g.k * g.k >= PAR_WORK_THRESHOLD && n > 1 {
                out.data_mut().par_chunks_mut(g.out_len()).enumerate().for_each(run);
            } else {
                out.data_mut().chunks_mut(g.out_len()).enumerate().for_each(run);
            }
            out
        }
        OpKind::Deconv2d {
            stride,
            padding,
            output_padding,
        } => {
            let (x, w, b) = (a[0], a[1], a[2]);
            let g = deconv_geom(x, w, b, *stride, *padding, *output_padding)?;
            let n = x.batch();
            let mut out = Tensor::zeros([n, g.ci, g.h, g.w]);
            let run = |(i, o): (usize, &mut [S])| {
                add_bias(o, b.data(), g.h * g.w);
                kernels::conv_backward_data(&g, x.sample(i), w.data(), o);
            };
            if g.out_len() * g.ci * g.k * g.k >= PAR_WORK_THRESHOLD && n > 1 {
                out.data_mut().par_chunks_mut(g.in_len()).enumerate().for_each(run);
            } else {
                out.data_mut().chunks_mut(g.in_len()).enumerate().for_each(run);
            }
            out
        }
        OpKind::Relu => a[0].map(|v| if v > S::zero() { v } else { S::zero() }),
        OpKind::LeakyRelu(slope) => {
            let s = S::of(*slope);
            a[0].map(|v| if v > S::zero() { v } else { v * s })
        }
        OpKind::Tanh => a[0].map(|v| v.tanh()),
        OpKind::ConcatChannels => {
            let first = a[0];
            if first.shape().len() < 2 {
                return Err(Error::shape("concat_channels needs rank >= 2"));
            }
            let n = first.batch();
            let rest = &first.shape()[2..];
            let mut channels = 0;
            for t in a {
                if t.shape().len() != first.shape().len() || t.batch() != n || &t.shape()[2..] != rest {
                    return Err(Error::shape(format!(
                        "concat_channels: {:?} vs {:?}",
                        t.shape(),
                        first.shape()
                    )));
                }
                channels += t.shape()[1];
            }
            let mut shape = vec![n, channels];
            shape.extend_from_slice(rest);
            let mut data = Vec::with_capacity(shape.iter().product());
            for i in 0..n {
                for t in a {
                    data.extend_from_slice(t.sample(i));
                }
            }
            Tensor::from_vec(shape, data)?
        }
        OpKind::Dropout { .. } => a[0]
            .zip_map(a[1], |x, m| x * m)
            .map_err(|_| Error::shape(format!("dropout mask {:?} vs input {:?}", a[1].shape(), a[0].shape())))?,
        OpKind::SpatialReplicate { height, width } => {
            let v = a[0];
            expect_rank(v, 2, "spatial_replicate")?;
            let (n, k) = (v.shape()[0], v.shape()[1]);
            let plane = height * width;
            let mut data = Vec::with_capacity(n * k * plane);
            for &x in v.data() {
                data.extend(std::iter::repeat_n(x, plane));
            }
            Tensor::from_vec([n, k, *height, *width], data)?
        }
        OpKind::Add => a[0].add(a[1])?,
        OpKind::Scale(k) => a[0].scale(S::of(*k)),
        OpKind::ReduceSum | OpKind::ReduceMean => {
            let x = a[0];
            let n = x.batch();
            let per = x.per_sample().max(1);
            let norm = if matches!(kind, OpKind::ReduceMean) {
                S::one() / S::of(per as f64)
            } else {
                S::one()
            };
            let data = (0..n).map(|i| x.sample(i).iter().copied().sum::<S>() * norm).collect();
            Tensor::from_vec([n, 1], data)?
        }
        OpKind::BatchNorm { eps } => return batchnorm_forward(a[0], a[1], a[2], *eps),
        OpKind::Reshape(shape) => {
            let x = a[0];
            let mut full = vec![x.batch()];
            full.extend_from_slice(shape);
            x.clone().reshape(full)?
        }
    };
    Ok((out, None))
}

/// `(channels, spatial size per channel)` for a batchnorm input.
fn bn_layout<S: Real>(x: &Tensor<S>) -> Result<(usize, usize)> {
    if x.shape().len() < 2 {
        return Err(Error::shape("batchnorm needs rank >= 2"));
    }
    let c = x.shape()[1];
    Ok((c, x.shape()[2..].iter().product()))
}

#[allow(clippy::type_complexity)]
fn batchnorm_forward<S: Real>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: f64,
) -> Result<(Tensor<S>, Option<(Vec<S>, Vec<S>)>)> {
    let (c, plane) = bn_layout(x)?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "batchnorm: input {:?}, gamma {:?}, beta {:?}",
            x.shape(),
            gamma.shape(),
            beta.shape()
        )));
    }
    let n = x.batch();
    let m = S::of((n * plane) as f64);
    let mut mean = vec![S::zero(); c];
    let mut inv_std = vec![S::zero(); c];
    for ch in 0..c {
        let mut s = S::zero();
        for i in 0..n {
            s += x.sample(i)[ch * plane..(ch + 1) * plane].iter().copied().sum::<S>();
        }
        let mu = s / m;
        let mut v = S::zero();
        for i in 0..n {
            for &xv in &x.sample(i)[ch * plane..(ch + 1) * plane] {
                v += (xv - mu) * (xv - mu);
            }
        }
        mean[ch] = mu;
        inv_std[ch] = S::one() / (v / m + S::of(eps)).sqrt();
    }
    let mut out = x.clone();
    for i in 0..n {
        let s = out.sample_mut(i);
        for ch in 0..c {
            for v in &mut s[ch * plane..(ch + 1) * plane] {
                *v = gamma.data()[ch] * (*v - mean[ch]) * inv_std[ch] + beta.data()[ch];
            }
        }
    }
    Ok((out, Some((mean, inv_std))))
}

// ---------------------------------------------------------------------------
// backward

fn backward<S: Real>(
    kind: &OpKind,
    a: &[&Tensor<S>],
    out: &Tensor<S>,
    aux: Option<&(Vec<S>, Vec<S>)>,
    g: &Tensor<S>,
    want: &[bool],
) -> Result<Vec<Option<Tensor<S>>>> {
    let grads = match kind {
        OpKind::Dense => {
            let (x, w) = (a[0], a[1]);
            let n = x.batch();
            let fout = w.shape()[1];
            let dx = want[0].then(|| {
                let mut dx = Tensor::zeros(x.shape().to_vec());
                for i in 0..n {
                    kernels::dense_backward_data(g.sample(i), w.data(), fout, dx.sample_mut(i));
                }
                dx
            });
            let dw = want[1].then(|| {
                let mut dw = Tensor::zeros(w.shape().to_vec());
                for i in 0..n {
                    kernels::dense_backward_weight(x.sample(i), g.sample(i), dw.data_mut());
                }
                dw
            });
            let db = want[2].then(|| sum_over_batch(g, 1));
            vec![dx, dw, db]
        }
        OpKind::Conv2d { stride, padding } => {
            let (x, w, b) = (a[0], a[1], a[2]);
            let geom = conv_geom(x, w, b, *stride, *padding)?;
            let par = geom.out_len() * geom.ci * geom.k * geom.k >= PAR_WORK_THRESHOLD && x.batch() > 1;
            let dx = want[0].then(|| {
                let mut dx = Tensor::zeros(x.shape().to_vec());
                let run = |(i, d): (usize, &mut [S])| kernels::conv_backward_data(&geom, g.sample(i), w.data(), d);
                if par {
                    dx.data_mut().par_chunks_mut(geom.in_len()).enumerate().for_each(run);
                } else {
                    dx.data_mut().chunks_mut(geom.in_len()).enumerate().for_each(run);
                }
                dx
            });
            let dw = want[1].then(|| {
                per_sample_reduce(x.batch(), geom.weight_len(), w.shape(), par, |i, acc| {
                    kernels::conv_backward_weight(&geom, x.sample(i), g.sample(i), acc)
                })
            });
            let db = want[2].then(|| sum_channels(g));
            vec![dx, dw, db]
        }
        OpKind::Deconv2d {
            stride,
            padding,
            output_padding,
        } => {
            let (x, w, b) = (a[0], a[1], a[2]);
            let geom = deconv_geom(x, w, b, *stride, *padding, *output_padding)?;
            let par = geom.out_len() * geom.ci * geom.k * geom.k >= PAR_WORK_THRESHOLD && x.batch() > 1;
            let dx = want[0].then(|| {
                let mut dx = Tensor::zeros(x.shape().to_vec());
                let run = |(i, d): (usize, &mut [S])| kernels::conv_forward(&geom, g.sample(i), w.data(), d);
                if par {
                    dx.data_mut().par_chunks_mut(geom.out_len()).enumerate().for_each(run);
                } else {
                    dx.data_mut().chunks_mut(geom.out_len()).enumerate().for_each(run);
                }
                dx
            });
            let dw = want[1].then(|| {
                per_sample_reduce(x.batch(), geom.weight_len(), w.shape(), par, |i, acc| {
                    kernels::conv_backward_weight(&geom, g.sample(i), x.sample(i), acc)
                })
            });
            let db = want[2].then(|| sum_channels(g));
            vec![dx, dw, db]
        }
        OpKind::Relu => vec![Some(a[0].zip_map(g, |x, d| if x > S::zero() { d } else { S::zero() })?)],
        OpKind::LeakyRelu(slope) => {
            let s = S::of(*slope);
            vec![Some(a[0].zip_map(g, |x, d| if x > S::zero() { d } else { d * s })?)]
        }
        OpKind::Tanh => vec![Some(out.zip_map(g, |y, d| d * (S::one() - y * y))?)],
        OpKind::ConcatChannels => {
            let n = g.batch();
            let mut grads: Vec<Option<Tensor<S>>> = Vec::with_capacity(a.len());
            let mut offset = 0;
            for (t, &w) in a.iter().zip(want) {
                let k = t.per_sample();
                if w {
                    let mut d = Tensor::zeros(t.shape().to_vec());
                    for i in 0..n {
                        d.sample_mut(i).copy_from_slice(&g.sample(i)[offset..offset + k]);
                    }
                    grads.push(Some(d));
                } else {
                    grads.push(None);
                }
                offset += k;
            }
            grads
        }
        OpKind::Dropout { .. } => vec![
            want[0].then(|| a[1].zip_map(g, |m, d| m * d)).transpose()?,
            want[1].then(|| a[0].zip_map(g, |x, d| x * d)).transpose()?,
        ],
        OpKind::SpatialReplicate { height, width } => {
            let plane = height * width;
            let data = g.data().chunks(plane).map(|c| c.iter().copied().sum()).collect();
            vec![Some(Tensor::from_vec(a[0].shape().to_vec(), data)?)]
        }
        OpKind::Add => vec![want[0].then(|| g.clone()), want[1].then(|| g.clone())],
        OpKind::Scale(k) => vec![Some(g.scale(S::of(*k)))],
        OpKind::ReduceSum | OpKind::ReduceMean => {
            let x = a[0];
            let per = x.per_sample().max(1);
            let norm = if matches!(kind, OpKind::ReduceMean) {
                S::one() / S::of(per as f64)
            } else {
                S::one()
            };
            let mut d = Tensor::zeros(x.shape().to_vec());
            for i in 0..x.batch() {
                let gi = g.sample(i)[0] * norm;
                d.sample_mut(i).iter_mut().for_each(|v| *v = gi);
            }
            vec![Some(d)]
        }
        OpKind::BatchNorm { .. } => {
            let (mean, inv_std) = aux.expect("batchnorm saves statistics");
            batchnorm_backward(a[0], a[1], mean, inv_std, g, want)?
        }
        OpKind::Reshape(_) => vec![Some(g.clone().reshape(a[0].shape().to_vec())?)],
    };
    Ok(grads)
}

/// Sum of per-sample weight gradients, reduced in sample order so the result
/// does not depend on the thread schedule.
fn per_sample_reduce<S: Real>(
    n: usize,
    len: usize,
    shape: &[usize],
    par: bool,
    f: impl Fn(usize, &mut [S]) + Sync,
) -> Tensor<S> {
    let mut total = vec![S::zero(); len];
    if par {
        let parts: Vec<Vec<S>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![S::zero(); len];
                f(i, &mut acc);
                acc
            })
            .collect();
        for p in parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
    } else {
        for i in 0..n {
            f(i, &mut total);
        }
    }
    Tensor::from_vec(shape.to_vec(), total).expect("weight gradient shape")
}

fn sum_over_batch<S: Real>(g: &Tensor<S>, _axis: usize) -> Tensor<S> {
    let k = g.per_sample();
    let mut d = vec![S::zero(); k];
    for i in 0..g.batch() {
        for (a, &b) in d.iter_mut().zip(g.sample(i)) {
            *a += b;
        }
    }
    Tensor::from_vec([k], d).expect("bias gradient shape")
}

fn sum_channels<S: Real>(g: &Tensor<S>) -> Tensor<S> {
    let c = g.shape()[1];
    let plane: usize = g.shape()[2..].iter().product();
    let mut d = vec![S::zero(); c];
    for i in 0..g.batch() {
        let s = g.sample(i);
        for (ch, acc) in d.iter_mut().enumerate() {
            *acc += s[ch * plane..(ch + 1) * plane].iter().copied().sum::<S>();
        }
    }
    Tensor::from_vec([c], d).expect("bias gradient shape")
}

fn batchnorm_backward<S: Real>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    mean: &[S],
    inv_std: &[S],
    g: &Tensor<S>,
    want: &[bool],
) -> Result<Vec<Option<Tensor<S>>>> {
    let (c, plane) = bn_layout(x)?;
    let n = x.batch();
    let m = S::of((n * plane) as f64);
    let mut sum_g = vec![S::zero(); c];
    let mut sum_gx = vec![S::zero(); c];
    for i in 0..n {
        let (xs, gs) = (x.sample(i), g.sample(i));
        for ch in 0..c {
            for p in ch * plane..(ch + 1) * plane {
                let xhat = (xs[p] - mean[ch]) * inv_std[ch];
                sum_g[ch] += gs[p];
                sum_gx[ch] += gs[p] * xhat;
            }
        }
    }
    let dx = want[0].then(|| {
        let mut dx = Tensor::zeros(x.shape().to_vec());
        for i in 0..n {
            let (xs, gs) = (x.sample(i), g.sample(i));
            let d = dx.sample_mut(i);
            for ch in 0..c {
                let k = gamma.data()[ch] * inv_std[ch] / m;
                for p in ch * plane..(ch + 1) * plane {
                    let xhat = (xs[p] - mean[ch]) * inv_std[ch];
                    d[p] = k * (m * gs[p] - sum_g[ch] - xhat * sum_gx[ch]);
                }
            }
        }
        dx
    });
    let dgamma = want[1].then(|| Tensor::from_vec([c], sum_gx.clone()).expect("gamma shape"));
    let dbeta = want[2].then(|| Tensor::from_vec([c], sum_g.clone()).expect("beta shape"));
    Ok(vec![dx, dgamma, dbeta])
}
