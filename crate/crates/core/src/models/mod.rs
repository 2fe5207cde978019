//! Solver energy `f(Y, C; θ)` and initializer `g(X, C; α)`.
//!
//! Network topologies are built by [`Architecture`] implementations looked
//! up by name in a [`Registry`]. The built-in registries cover the early and
//! late concatenation designs for category conditions, and the naive,
//! U-Net, and channel-concatenation designs for image conditions.

mod arch;
mod builder;
mod energy;
mod generator;
mod variants;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor};

pub use arch::{Activation, ArchDescriptor, ConditionSpec, LayerSpec, OutputActivation};
pub use builder::{Feature, NetBuilder};
pub use energy::EnergyModel;
pub use generator::{GenGrads, GeneratorModel, Latent};

/// Graph output holding the per-sample energy `f`, shape `[n, 1]`.
pub const ENERGY_OUTPUT: &str = "f";
/// Graph output holding the initializer mean `g`, shape `[n, target..]`.
pub const GENERATOR_OUTPUT: &str = "g";
pub const INPUT_Y: &str = "y";
pub const INPUT_C: &str = "c";
pub const INPUT_X: &str = "x";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentSpec {
    Vector { dim: usize },
    /// Per-sample mask shape; entries are 0 or `1 / (1 - rate)`.
    DropoutMask { name: String, shape: Vec<usize>, rate: f64 },
}

/// A built network: its graph, parameter declarations, latent inputs, and the
/// per-sample shapes of notable intermediate features (`"concat"` and the
/// output name, at least).
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub params: Vec<ParamSpec>,
    pub latents: Vec<LatentSpec>,
    pub shapes: BTreeMap<String, Vec<usize>>,
}

impl Network {
    pub fn init_params<S: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet<S> {
        let mut ps = ParamSet::new();
        for p in &self.params {
            let t = match p.init {
                Init::Normal(std) => Tensor::randn(p.shape.clone(), std, rng),
                Init::Zeros => Tensor::zeros(p.shape.clone()),
                Init::Ones => Tensor::full(p.shape.clone(), S::one()),
            };
            ps.insert(&p.name, t);
        }
        ps
    }

    /// Checks that `params` has exactly the declared names and shapes.
    pub fn check_params<S: Real>(&self, params: &ParamSet<S>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                params.len()
            )));
        }
        for p in &self.params {
            let t = params
                .get(&p.name)
                .ok_or_else(|| Error::shape(format!("missing parameter `{}`", p.name)))?;
            if t.shape() != p.shape.as_slice() {
                return Err(Error::shape(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.shape
                )));
            }
        }
        Ok(())
    }
}

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<S>(BTreeMap<String, Tensor<S>>);

impl<S: Real> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet(BTreeMap::new())
    }

    pub fn insert(&mut self, name: &str, t: Tensor<S>) {
        self.0.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.0.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape().to_vec())))
                .collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|t| t.norm_sq().as_f64()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(Tensor::is_finite)
    }

    pub fn scale(&self, k: S) -> Self {
        ParamSet(self.0.iter().map(|(n, t)| (n.clone(), t.scale(k))).collect())
    }

    /// `self += k * other` over matching names.
    pub fn axpy(&mut self, k: S, other: &ParamSet<S>) -> Result<()> {
        for (name, t) in self.0.iter_mut() {
            let o = other
                .get(name)
                .ok_or_else(|| Error::shape(format!("missing parameter `{name}`")))?;
            t.axpy(k, o)?;
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> ParamSet<T> {
        ParamSet(self.0.iter().map(|(k, v)| (k.clone(), v.cast())).collect())
    }
}

impl<S> FromIterator<(String, Tensor<S>)> for ParamSet<S> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<S>)>>(iter: I) -> Self {
        ParamSet(iter.into_iter().collect())
    }
}

/// A network topology selectable by name.
pub trait Architecture: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, desc: &ArchDescriptor) -> Result<Network>;
}

/// Architectures keyed by name.
#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Arc<dyn Architecture>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces an entry under its own name.
    pub fn register(&mut self, arch: Arc<dyn Architecture>) {
        self.entries.insert(arch.name().to_string(), arch);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Architecture> {
        self.entries.get(name).map(|a| a.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn build(&self, desc: &ArchDescriptor) -> Result<Network> {
        desc.validate()?;
        let arch = self.get(&desc.variant).ok_or_else(|| {
            Error::config(format!(
                "unknown variant `{}` (available: {})",
                desc.variant,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        arch.build(desc)
    }

    /// Validates a descriptor by building it.
    pub fn check(&self, desc: &ArchDescriptor) -> Result<()> {
        self.build(desc).map(|_| ())
    }

    /// Solver topologies: `cat2img_early`, `cat2img_late`,
    /// `solver_channel_concat`.
    pub fn energy_builtin() -> &'static Registry {
        static R: OnceLock<Registry> = OnceLock::new();
        R.get_or_init(|| {
            let mut r = Registry::new();
            r.register(Arc::new(variants::EnergyEarly));
            r.register(Arc::new(variants::EnergyLate));
            r.register(Arc::new(variants::EnergyChannelConcat));
            r
        })
    }

    /// Initializer topologies: `cat2img_early`, `cat2img_late`,
    /// `img2img_naive`, `img2img_unet`.
    pub fn generator_builtin() -> &'static Registry {
        static R: OnceLock<Registry> = OnceLock::new();
        R.get_or_init(|| {
            let mut r = Registry::new();
            r.register(Arc::new(variants::GeneratorEarly));
            r.register(Arc::new(variants::GeneratorLate));
            r.register(Arc::new(variants::GeneratorNaive));
            r.register(Arc::new(variants::GeneratorUnet));
            r
        })
    }
}

pub(crate) fn check_batch_shape<S: Real>(what: &str, t: &Tensor<S>, expected: &[usize]) -> Result<()> {
    if t.shape().is_empty() || t.sample_shape() != expected {
        return Err(Error::shape(format!(
            "{what}: expected [n, {}], got {:?}",
            expected.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "),
            t.shape()
        )));
    }
    Ok(())
}
