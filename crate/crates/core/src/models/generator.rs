use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::{
    check_batch_shape, ArchDescriptor, LatentSpec, Network, ParamSet, Registry, GENERATOR_OUTPUT, INPUT_C, INPUT_X,
};
use crate::error::{Error, Result};
use crate::tensor::{Bindings, Real, Tape, Tensor};

/// Latent factors for one batch: the Gaussian vector `X` and/or the
/// recorded dropout masks of the U-Net decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<S> {
    pub x: Option<Tensor<S>>,
    pub masks: BTreeMap<String, Tensor<S>>,
}

impl<S: Real> Latent<S> {
    pub fn vector(x: Tensor<S>) -> Self {
        Latent {
            x: Some(x),
            masks: BTreeMap::new(),
        }
    }

    pub fn batch(&self) -> Option<usize> {
        self.x
            .as_ref()
            .map(Tensor::batch)
            .or_else(|| self.masks.values().next().map(Tensor::batch))
    }

    pub fn gather(&self, idx: &[usize]) -> Self {
        Latent {
            x: self.x.as_ref().map(|t| t.gather(idx)),
            masks: self.masks.iter().map(|(k, v)| (k.clone(), v.gather(idx))).collect(),
        }
    }
}

/// Gradients returned by [`GeneratorModel::vjp`]; only requested parts are set.
#[derive(Debug, Clone)]
pub struct GenGrads<S> {
    pub params: Option<ParamSet<S>>,
    pub x: Option<Tensor<S>>,
    pub c: Option<Tensor<S>>,
}

/// Initializer: `Y = g(X, C; α) + ε`, `ε ~ N(0, σ² I)`.
#[derive(Debug, Clone)]
pub struct GeneratorModel<S> {
    arch: ArchDescriptor,
    residual_std: f64,
    net: Arc<Network>,
    pub params: ParamSet<S>,
}

impl<S: Real> GeneratorModel<S> {
    pub fn new<R: Rng + ?Sized>(arch: ArchDescriptor, residual_std: f64, rng: &mut R) -> Result<Self> {
        Self::with_registry(arch, residual_std, Registry::generator_builtin(), rng)
    }

    pub fn with_registry<R: Rng + ?Sized>(
        arch: ArchDescriptor,
        residual_std: f64,
        registry: &Registry,
        rng: &mut R,
    ) -> Result<Self> {
        check_sigma(residual_std)?;
        let net = registry.build(&arch)?;
        let params = net.init_params(rng);
        Ok(GeneratorModel {
            arch,
            residual_std,
            net: Arc::new(net),
            params,
        })
    }

    pub fn from_params(arch: ArchDescriptor, residual_std: f64, params: ParamSet<S>, registry: &Registry) -> Result<Self> {
        check_sigma(residual_std)?;
        let net = registry.build(&arch)?;
        net.check_params(&params)?;
        Ok(GeneratorModel {
            arch,
            residual_std,
            net: Arc::new(net),
            params,
        })
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn residual_std(&self) -> f64 {
        self.residual_std
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn has_vector_latent(&self) -> bool {
        self.net.latents.iter().any(|l| matches!(l, LatentSpec::Vector { .. }))
    }

    pub fn has_dropout_latent(&self) -> bool {
        self.net.latents.iter().any(|l| matches!(l, LatentSpec::DropoutMask { .. }))
    }

    /// Fresh latents: standard normal `X`, and Bernoulli keep masks scaled
    /// by `1 / (1 - rate)` for each dropout stage.
    pub fn sample_latent<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Latent<S> {
        let mut latent = Latent {
            x: None,
            masks: BTreeMap::new(),
        };
        for spec in &self.net.latents {
            match spec {
                LatentSpec::Vector { dim } => latent.x = Some(Tensor::randn([batch, *dim], 1.0, rng)),
                LatentSpec::DropoutMask { name, shape, rate } => {
                    let keep = S::of(1.0 / (1.0 - rate));
                    let mut full = vec![batch];
                    full.extend_from_slice(shape);
                    let n: usize = full.iter().product();
                    let data = (0..n)
                        .map(|_| if rng.random::<f64>() < *rate { S::zero() } else { keep })
                        .collect();
                    latent
                        .masks
                        .insert(name.clone(), Tensor::from_vec(full, data).expect("sized above"));
                }
            }
        }
        latent
    }

    pub fn check_latent(&self, latent: &Latent<S>, batch: usize) -> Result<()> {
        for spec in &self.net.latents {
            match spec {
                LatentSpec::Vector { dim } => {
                    let x = latent
                        .x
                        .as_ref()
                        .ok_or_else(|| Error::shape("latent vector X missing"))?;
                    check_batch_shape("X", x, &[*dim])?;
                    if x.batch() != batch {
                        return Err(Error::shape(format!("X batch {} differs from C batch {batch}", x.batch())));
                    }
                }
                LatentSpec::DropoutMask { name, shape, .. } => {
                    let m = latent
                        .masks
                        .get(name)
                        .ok_or_else(|| Error::shape(format!("dropout mask `{name}` missing")))?;
                    check_batch_shape(name, m, shape)?;
                    if m.batch() != batch {
                        return Err(Error::shape(format!(
                            "mask `{name}` batch {} differs from C batch {batch}",
                            m.batch()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn run<'a>(&'a self, latent: &'a Latent<S>, c: &'a Tensor<S>) -> Result<Tape<'a, S>> {
        check_batch_shape("C", c, &self.arch.condition.shape())?;
        self.check_latent(latent, c.batch())?;
        let mut b = Bindings::new();
        b.bind(INPUT_C, c);
        if let Some(x) = &latent.x {
            b.bind(INPUT_X, x);
        }
        for (name, m) in &latent.masks {
            b.bind(name, m);
        }
        for (name, t) in self.params.iter() {
            b.bind(name, t);
        }
        self.net.graph.evaluate(&b)
    }

    /// The deterministic map `g(X, C; α)`.
    pub fn mean(&self, latent: &Latent<S>, c: &Tensor<S>) -> Result<Tensor<S>> {
        let tape = self.run(latent, c)?;
        Ok(self.net.graph.fetch(&tape, GENERATOR_OUTPUT)?.clone())
    }

    /// `g(X, C; α) + ε`. No noise is drawn when `σ = 0`.
    pub fn generate<R: Rng + ?Sized>(&self, latent: &Latent<S>, c: &Tensor<S>, rng: &mut R) -> Result<Tensor<S>> {
        let mut y = self.mean(latent, c)?;
        if self.residual_std > 0.0 {
            let eps = Tensor::randn(y.shape().to_vec(), self.residual_std, rng);
            y.axpy(S::one(), &eps)?;
        }
        Ok(y)
    }

    /// Vector-Jacobian product `seed · ∂g/∂(α, X, C)`, plus the forward value.
    pub fn vjp(
        &self,
        latent: &Latent<S>,
        c: &Tensor<S>,
        seed: &Tensor<S>,
        want_params: bool,
        want_x: bool,
        want_c: bool,
    ) -> Result<(Tensor<S>, GenGrads<S>)> {
        if want_x && latent.x.is_none() {
            return Err(Error::Unsupported("this initializer has no latent vector X".into()));
        }
        let tape = self.run(latent, c)?;
        let g = self.net.graph.fetch(&tape, GENERATOR_OUTPUT)?;
        if seed.shape() != g.shape() {
            return Err(Error::shape(format!(
                "seed shape {:?} differs from output {:?}",
                seed.shape(),
                g.shape()
            )));
        }
        let mut wrt: Vec<&str> = Vec::new();
        if want_params {
            wrt.extend(self.params.names());
        }
        if want_x {
            wrt.push(INPUT_X);
        }
        if want_c {
            wrt.push(INPUT_C);
        }
        let mut grads = self.net.graph.backprop(&tape, GENERATOR_OUTPUT, seed, &wrt)?;
        let x = if want_x { grads.remove(INPUT_X) } else { None };
        let cg = if want_c { grads.remove(INPUT_C) } else { None };
        let params = want_params.then(|| grads.into_iter().collect());
        Ok((g.clone(), GenGrads { params, x, c: cg }))
    }
}

fn check_sigma(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("residual_std must be nonnegative, got {s}")))
    }
}
