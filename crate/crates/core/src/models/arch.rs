use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One learnable layer. Padding defaults to `(kernel - 1) / 2`; transposed
/// convolutions pick the smallest output padding that yields `stride * input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv {
        kernel: usize,
        stride: usize,
        channels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        padding: Option<usize>,
    },
    Deconv {
        kernel: usize,
        stride: usize,
        channels: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        padding: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_padding: Option<usize>,
    },
}

impl LayerSpec {
    pub fn out_units(&self) -> usize {
        match *self {
            LayerSpec::Dense { units } => units,
            LayerSpec::Conv { channels, .. } | LayerSpec::Deconv { channels, .. } => channels,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { units } => units > 0,
            LayerSpec::Conv {
                kernel,
                stride,
                channels,
                ..
            } => kernel > 0 && stride > 0 && channels > 0,
            LayerSpec::Deconv {
                kernel,
                stride,
                channels,
                output_padding,
                ..
            } => kernel > 0 && stride > 0 && channels > 0 && output_padding.is_none_or(|op| op < stride),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid layer {self:?}")))
        }
    }
}

/// How the condition `C` enters the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSpec {
    /// One-hot vector over `K` classes.
    OneHot(usize),
    /// Image `[channels, height, width]`.
    Image(Vec<usize>),
}

impl ConditionSpec {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            ConditionSpec::OneHot(k) => vec![*k],
            ConditionSpec::Image(s) => s.clone(),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self {
            ConditionSpec::OneHot(k) => Some(*k),
            ConditionSpec::Image(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu(f64),
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Tanh,
    Identity,
}

fn default_init_std() -> f64 {
    0.02
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Serializable description of a network; `variant` selects the builder in
/// the architecture registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub variant: String,
    /// Per-sample shape of `Y`: `[D]` for vectors, `[c, h, w]` for images.
    pub target_shape: Vec<usize>,
    pub condition: ConditionSpec,
    #[serde(default, skip_serializing_if = "is_default")]
    pub latent_dim: usize,
    pub layers: Vec<LayerSpec>,
    /// Late concatenation: layers before the condition is fused.
    /// Naive image-to-image: layers of the condition encoder.
    #[serde(default, skip_serializing_if = "is_default")]
    pub concat_after: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "is_default")]
    pub batchnorm: bool,
    /// U-Net decoder dropout rate.
    #[serde(default, skip_serializing_if = "is_default")]
    pub dropout: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputActivation,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl ArchDescriptor {
    pub fn new(variant: &str, target_shape: Vec<usize>, condition: ConditionSpec, layers: Vec<LayerSpec>) -> Self {
        ArchDescriptor {
            variant: variant.to_string(),
            target_shape,
            condition,
            latent_dim: 0,
            layers,
            concat_after: 0,
            activation: Activation::Relu,
            batchnorm: false,
            dropout: 0.0,
            output: OutputActivation::Tanh,
            init_std: default_init_std(),
        }
    }

    pub fn target_len(&self) -> usize {
        self.target_shape.iter().product()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.target_shape.is_empty() || self.target_shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("bad target shape {:?}", self.target_shape)));
        }
        if !matches!(self.target_shape.len(), 1 | 3) {
            return Err(Error::config("target shape must be [D] or [c, h, w]"));
        }
        let cshape = self.condition.shape();
        if cshape.is_empty() || cshape.iter().any(|&d| d == 0) || !matches!(cshape.len(), 1 | 3) {
            return Err(Error::config(format!("bad condition {:?}", self.condition)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::config("init_std must be a nonnegative number"));
        }
        if self.concat_after > self.layers.len() {
            return Err(Error::config(format!(
                "concat_after {} exceeds {} layers",
                self.concat_after,
                self.layers.len()
            )));
        }
        if let Activation::LeakyRelu(s) = self.activation {
            if !s.is_finite() {
                return Err(Error::config("leaky_relu slope must be finite"));
            }
        }
        for l in &self.layers {
            l.validate()?;
        }
        Ok(())
    }
}
