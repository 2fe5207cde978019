use std::collections::BTreeMap;

use super::arch::{Activation, ArchDescriptor, LayerSpec, OutputActivation};
use super::{Init, LatentSpec, Network, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, OpKind};

const BN_EPS: f64 = 1e-5;

/// A graph node together with its per-sample shape.
#[derive(Debug, Clone)]
pub struct Feature {
    pub id: NodeId,
    pub shape: Vec<usize>,
}

impl Feature {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_spatial(&self) -> bool {
        self.shape.len() == 3
    }
}

/// Incremental network construction with static shape tracking. Used by the
/// built-in variants and available to custom ones.
pub struct NetBuilder {
    graph: Graph,
    params: Vec<ParamSpec>,
    latents: Vec<LatentSpec>,
    shapes: BTreeMap<String, Vec<usize>>,
    init_std: f64,
    activation: Activation,
    batchnorm: bool,
}

fn same_padding(kernel: usize) -> usize {
    (kernel - 1) / 2
}

impl NetBuilder {
    pub fn new(desc: &ArchDescriptor) -> Self {
        NetBuilder {
            graph: Graph::new(),
            params: Vec::new(),
            latents: Vec::new(),
            shapes: BTreeMap::new(),
            init_std: desc.init_std,
            activation: desc.activation,
            batchnorm: desc.batchnorm,
        }
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Feature {
        Feature {
            id: self.graph.input(name),
            shape: shape.to_vec(),
        }
    }

    pub fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> NodeId {
        let id = self.graph.input(&name);
        self.params.push(ParamSpec { name, shape, init });
        id
    }

    /// Declares a dropout-mask input; it becomes part of the latent.
    pub fn dropout(&mut self, x: Feature, name: &str, rate: f64) -> Feature {
        let mask = self.graph.input(name);
        self.latents.push(LatentSpec::DropoutMask {
            name: name.to_string(),
            shape: x.shape.clone(),
            rate,
        });
        Feature {
            id: self.graph.op(OpKind::Dropout { rate }, &[x.id, mask]),
            shape: x.shape,
        }
    }

    pub fn record_shape(&mut self, key: &str, shape: &[usize]) {
        self.shapes.insert(key.to_string(), shape.to_vec());
    }

    pub fn reshape(&mut self, x: Feature, shape: Vec<usize>) -> Result<Feature> {
        if shape.iter().product::<usize>() != x.len() {
            return Err(Error::shape(format!("cannot reshape {:?} into {shape:?}", x.shape)));
        }
        if shape == x.shape {
            return Ok(x);
        }
        Ok(Feature {
            id: self.graph.unary(OpKind::Reshape(shape.clone()), x.id),
            shape,
        })
    }

    pub fn flatten(&mut self, x: Feature) -> Feature {
        let n = x.len();
        self.reshape(x, vec![n]).expect("flatten preserves length")
    }

    fn spatial(&mut self, x: Feature) -> Feature {
        if x.is_spatial() {
            x
        } else {
            let n = x.len();
            self.reshape(x, vec![n, 1, 1]).expect("lift preserves length")
        }
    }

    pub fn layer(&mut self, x: Feature, spec: &LayerSpec, name: &str) -> Result<Feature> {
        let std = self.init_std;
        match *spec {
            LayerSpec::Dense { units } => {
                let w = self.param(format!("{name}.w"), vec![x.len(), units], Init::Normal(std));
                let b = self.param(format!("{name}.b"), vec![units], Init::Zeros);
                Ok(Feature {
                    id: self.graph.dense(x.id, w, b),
                    shape: vec![units],
                })
            }
            LayerSpec::Conv {
                kernel,
                stride,
                channels,
                padding,
            } => {
                let x = self.spatial(x);
                let (ci, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
                let pad = padding.unwrap_or_else(|| same_padding(kernel));
                if h + 2 * pad < kernel || wd + 2 * pad < kernel {
                    return Err(Error::config(format!(
                        "{name}: kernel {kernel} larger than padded input {:?}",
                        x.shape
                    )));
                }
                let ho = (h + 2 * pad - kernel) / stride + 1;
                let wo = (wd + 2 * pad - kernel) / stride + 1;
                let w = self.param(
                    format!("{name}.w"),
                    vec![channels, ci, kernel, kernel],
                    Init::Normal(std),
                );
                let b = self.param(format!("{name}.b"), vec![channels], Init::Zeros);
                Ok(Feature {
                    id: self.graph.conv2d(x.id, w, b, stride, pad),
                    shape: vec![channels, ho, wo],
                })
            }
            LayerSpec::Deconv {
                kernel,
                stride,
                channels,
                padding,
                output_padding,
            } => {
                let x = self.spatial(x);
                let pad = padding.unwrap_or_else(|| same_padding(kernel));
                let op = output_padding
                    .unwrap_or_else(|| (stride + 2 * pad).saturating_sub(kernel).min(stride - 1));
                self.deconv_raw(x, kernel, stride, channels, pad, op, name)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn deconv_raw(
        &mut self,
        x: Feature,
        kernel: usize,
        stride: usize,
        channels: usize,
        pad: usize,
        output_padding: usize,
        name: &str,
    ) -> Result<Feature> {
        let x = self.spatial(x);
        let (ci, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
        let extent = |n: usize| ((n - 1) * stride + kernel + output_padding).checked_sub(2 * pad);
        let (ho, wo) = match (extent(h), extent(wd)) {
            (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
            _ => {
                return Err(Error::config(format!(
                    "{name}: padding {pad} leaves no output for input {:?}",
                    x.shape
                )))
            }
        };
        let w = self.param(
            format!("{name}.w"),
            vec![ci, channels, kernel, kernel],
            Init::Normal(self.init_std),
        );
        let b = self.param(format!("{name}.b"), vec![channels], Init::Zeros);
        Ok(Feature {
            id: self.graph.deconv2d(x.id, w, b, stride, pad, output_padding),
            shape: vec![channels, ho, wo],
        })
    }

    pub fn batchnorm(&mut self, x: Feature, name: &str) -> Feature {
        let c = x.shape[0];
        let gamma = self.param(format!("{name}.gamma"), vec![c], Init::Ones);
        let beta = self.param(format!("{name}.beta"), vec![c], Init::Zeros);
        Feature {
            id: self.graph.op(OpKind::BatchNorm { eps: BN_EPS }, &[x.id, gamma, beta]),
            shape: x.shape,
        }
    }

    pub fn act(&mut self, x: Feature, act: Activation) -> Feature {
        let kind = match act {
            Activation::Relu => OpKind::Relu,
            Activation::LeakyRelu(s) => OpKind::LeakyRelu(s),
            Activation::Tanh => OpKind::Tanh,
        };
        Feature {
            id: self.graph.unary(kind, x.id),
            shape: x.shape,
        }
    }

    /// Optional batchnorm followed by the descriptor's activation.
    pub fn hidden(&mut self, x: Feature, name: &str) -> Feature {
        let x = if self.batchnorm { self.batchnorm(x, name) } else { x };
        self.act(x, self.activation)
    }

    /// Applies `layers` in order, activating all but (optionally) the last.
    pub fn stack(&mut self, mut x: Feature, layers: &[LayerSpec], prefix: &str, activate_last: bool) -> Result<Feature> {
        for (i, spec) in layers.iter().enumerate() {
            let name = format!("{prefix}{i}");
            x = self.layer(x, spec, &name)?;
            if i + 1 < layers.len() || activate_last {
                x = self.hidden(x, &name);
            }
        }
        Ok(x)
    }

    /// Fuses a condition into a feature map: vectors are concatenated, a
    /// vector condition is replicated over the spatial extent of a map, and
    /// two maps are joined along channels.
    pub fn fuse(&mut self, h: Feature, c: Feature) -> Result<Feature> {
        let (h, c) = match (h.is_spatial(), c.is_spatial()) {
            (false, false) => (h, c),
            (false, true) => (h, self.flatten(c)),
            (true, false) => {
                let (hh, hw) = (h.shape[1], h.shape[2]);
                let k = c.len();
                let rep = Feature {
                    id: self.graph.unary(
                        OpKind::SpatialReplicate {
                            height: hh,
                            width: hw,
                        },
                        c.id,
                    ),
                    shape: vec![k, hh, hw],
                };
                (h, rep)
            }
            (true, true) => {
                if h.shape[1..] != c.shape[1..] {
                    return Err(Error::config(format!(
                        "cannot join maps {:?} and {:?} along channels",
                        h.shape, c.shape
                    )));
                }
                (h, c)
            }
        };
        let mut shape = h.shape.clone();
        shape[0] += c.shape[0];
        let id = self.graph.concat_channels(&[h.id, c.id]);
        Ok(Feature { id, shape })
    }

    pub fn output_head(&mut self, x: Feature, out: OutputActivation) -> Feature {
        match out {
            OutputActivation::Tanh => self.act(x, Activation::Tanh),
            OutputActivation::Identity => x,
        }
    }

    pub fn finish(mut self, output: &str, out: Feature) -> Network {
        self.graph.set_output(output, out.id);
        self.shapes.insert(output.to_string(), out.shape);
        Network {
            graph: self.graph,
            params: self.params,
            latents: self.latents,
            shapes: self.shapes,
        }
    }
}
