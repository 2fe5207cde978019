use std::sync::Arc;

use rand::Rng;

use super::{check_batch_shape, ArchDescriptor, Network, ParamSet, Registry, ENERGY_OUTPUT, INPUT_C, INPUT_Y};
use crate::error::{Error, Result};
use crate::tensor::{Bindings, Real, Tape, Tensor};

/// Solver: `p(Y | C; θ) ∝ exp(f(Y, C; θ) - |Y|² / (2 s²))`.
///
/// `reference_std = None` drops the Gaussian reference factor.
#[derive(Debug, Clone)]
pub struct EnergyModel<S> {
    arch: ArchDescriptor,
    reference_std: Option<f64>,
    net: Arc<Network>,
    pub params: ParamSet<S>,
}

impl<S: Real> EnergyModel<S> {
    pub fn new<R: Rng + ?Sized>(arch: ArchDescriptor, reference_std: Option<f64>, rng: &mut R) -> Result<Self> {
        Self::with_registry(arch, reference_std, Registry::energy_builtin(), rng)
    }

    pub fn with_registry<R: Rng + ?Sized>(
        arch: ArchDescriptor,
        reference_std: Option<f64>,
        registry: &Registry,
        rng: &mut R,
    ) -> Result<Self> {
        check_reference(reference_std)?;
        let net = registry.build(&arch)?;
        let params = net.init_params(rng);
        Ok(EnergyModel {
            arch,
            reference_std,
            net: Arc::new(net),
            params,
        })
    }

    pub fn from_params(
        arch: ArchDescriptor,
        reference_std: Option<f64>,
        params: ParamSet<S>,
        registry: &Registry,
    ) -> Result<Self> {
        check_reference(reference_std)?;
        let net = registry.build(&arch)?;
        net.check_params(&params)?;
        Ok(EnergyModel {
            arch,
            reference_std,
            net: Arc::new(net),
            params,
        })
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn reference_std(&self) -> Option<f64> {
        self.reference_std
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn check(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<()> {
        check_batch_shape("Y", y, &self.arch.target_shape)?;
        check_batch_shape("C", c, &self.arch.condition.shape())?;
        if y.batch() != c.batch() {
            return Err(Error::shape(format!(
                "Y batch {} differs from C batch {}",
                y.batch(),
                c.batch()
            )));
        }
        Ok(())
    }

    fn run<'a>(&'a self, y: &'a Tensor<S>, c: &'a Tensor<S>) -> Result<Tape<'a, S>> {
        self.check(y, c)?;
        let mut b = Bindings::new();
        b.bind(INPUT_Y, y).bind(INPUT_C, c);
        for (name, t) in self.params.iter() {
            b.bind(name, t);
        }
        self.net.graph.evaluate(&b)
    }

    fn reference(&self, y: &Tensor<S>) -> Vec<S> {
        match self.reference_std {
            None => vec![S::zero(); y.batch()],
            Some(s) => {
                let k = S::of(0.5 / (s * s));
                (0..y.batch())
                    .map(|i| -k * y.sample(i).iter().map(|&v| v * v).sum::<S>())
                    .collect()
            }
        }
    }

    /// `f(Y, C; θ)` per sample, optionally with the reference term added.
    pub fn energy(&self, y: &Tensor<S>, c: &Tensor<S>, include_reference: bool) -> Result<Vec<S>> {
        let tape = self.run(y, c)?;
        let mut f = self.net.graph.fetch(&tape, ENERGY_OUTPUT)?.data().to_vec();
        if include_reference {
            for (v, r) in f.iter_mut().zip(self.reference(y)) {
                *v += r;
            }
        }
        Ok(f)
    }

    /// Total energy per sample and its gradient with respect to `Y`.
    pub fn energy_and_grad_y(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<(Vec<S>, Tensor<S>)> {
        let tape = self.run(y, c)?;
        let f = self.net.graph.fetch(&tape, ENERGY_OUTPUT)?;
        let seed = Tensor::full(f.shape().to_vec(), S::one());
        let mut grads = self.net.graph.backprop(&tape, ENERGY_OUTPUT, &seed, &[INPUT_Y])?;
        let mut g = grads.remove(INPUT_Y).expect("requested gradient");
        let mut total = f.data().to_vec();
        if let Some(s) = self.reference_std {
            let inv = S::of(1.0 / (s * s));
            g.axpy(-inv, y)?;
            for (v, r) in total.iter_mut().zip(self.reference(y)) {
                *v += r;
            }
        }
        Ok((total, g))
    }

    /// `∂/∂Y` of the total energy.
    pub fn energy_grad_y(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.energy_and_grad_y(y, c)?.1)
    }

    /// `∂/∂θ Σ_i w_i f(Y_i, C_i; θ)` together with the values `f(Y_i, C_i; θ)`.
    pub fn param_grad(&self, y: &Tensor<S>, c: &Tensor<S>, weights: &[S]) -> Result<(ParamSet<S>, Vec<S>)> {
        if weights.len() != y.batch() {
            return Err(Error::shape(format!(
                "{} weights for a batch of {}",
                weights.len(),
                y.batch()
            )));
        }
        let tape = self.run(y, c)?;
        let f = self.net.graph.fetch(&tape, ENERGY_OUTPUT)?;
        let seed = Tensor::from_vec(f.shape().to_vec(), weights.to_vec())?;
        let names: Vec<&str> = self.params.names().collect();
        let grads = self.net.graph.backprop(&tape, ENERGY_OUTPUT, &seed, &names)?;
        Ok((grads.into_iter().collect(), f.data().to_vec()))
    }
}

fn check_reference(s: Option<f64>) -> Result<()> {
    match s {
        Some(s) if !(s.is_finite() && s > 0.0) => Err(Error::config(format!("reference_std must be positive, got {s}"))),
        _ => Ok(()),
    }
}
