//! Langevin dynamics over the solution `Y`, the latent `X`, and the
//! category logits `A`.
//!
//! One step moves a state `z` along the gradient of its log-density plus
//! Gaussian noise: `z ← z + (δ²/2) ∇ log p(z) + δ U`. With the
//! Metropolis–Hastings correction each chain accepts or rejects its proposal
//! using the Langevin proposal density in both directions.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EnergyModel, GeneratorModel, Latent};
use crate::tensor::{Real, Tensor};

fn default_true() -> bool {
    true
}

fn default_bound() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub steps: usize,
    pub step_size: f64,
    #[serde(default = "default_true")]
    pub noise: bool,
    #[serde(default)]
    pub mh_correction: bool,
    /// Abort when any coordinate of the state exceeds this magnitude.
    #[serde(default = "default_bound")]
    pub divergence_bound: f64,
}

impl LangevinConfig {
    pub fn new(steps: usize, step_size: f64) -> Self {
        LangevinConfig {
            steps,
            step_size,
            noise: true,
            mh_correction: false,
            divergence_bound: default_bound(),
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn with_mh(mut self) -> Self {
        self.mh_correction = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.mh_correction && !self.noise {
            return Err(Error::Config("mh_correction requires noise".into()));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::Config("divergence_bound must be positive".into()));
        }
        Ok(())
    }
}

/// A target over `Y` given `C`: the per-chain log-density (up to a constant)
/// and its gradient with respect to `Y`.
pub trait Energy<S: Real> {
    fn log_density_and_grad(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<(Vec<S>, Tensor<S>)>;

    fn log_density(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<Vec<S>> {
        Ok(self.log_density_and_grad(y, c)?.0)
    }
}

impl<S: Real> Energy<S> for EnergyModel<S> {
    fn log_density_and_grad(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<(Vec<S>, Tensor<S>)> {
        self.energy_and_grad_y(y, c)
    }

    fn log_density(&self, y: &Tensor<S>, c: &Tensor<S>) -> Result<Vec<S>> {
        self.energy(y, c, true)
    }
}

/// `f(Y) = -(precision / 2) |Y - μ|²`, ignoring `C`; `μ` is per sample.
#[derive(Debug, Clone)]
pub struct QuadraticEnergy {
    pub mu: Vec<f64>,
    pub precision: f64,
}

impl<S: Real> Energy<S> for QuadraticEnergy {
    fn log_density_and_grad(&self, y: &Tensor<S>, _c: &Tensor<S>) -> Result<(Vec<S>, Tensor<S>)> {
        if y.per_sample() != self.mu.len() {
            return Err(Error::Shape(format!(
                "quadratic energy of dimension {} applied to {:?}",
                self.mu.len(),
                y.shape()
            )));
        }
        let p = S::of(self.precision);
        let half = S::of(0.5);
        let mu: Vec<S> = self.mu.iter().map(|&m| S::of(m)).collect();
        let mut grad = y.clone();
        let mut vals = Vec::with_capacity(y.batch());
        for i in 0..y.batch() {
            let row = grad.sample_mut(i);
            let mut acc = S::zero();
            for (g, &m) in row.iter_mut().zip(&mu) {
                let d = *g - m;
                acc += d * d;
                *g = -p * d;
            }
            vals.push(-half * p * acc);
        }
        Ok((vals, grad))
    }
}

/// Outcome counts of a chain run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainStats {
    pub proposals: usize,
    pub accepted: usize,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

fn expand_mask<S: Real>(mask: Option<&Tensor<S>>, state: &Tensor<S>) -> Result<Option<Vec<bool>>> {
    let Some(m) = mask else { return Ok(None) };
    let per = state.per_sample();
    let bits: Vec<bool> = m.data().iter().map(|&v| v != S::zero()).collect();
    if m.data().iter().any(|&v| v != S::zero() && v != S::one()) {
        return Err(Error::Shape("update mask entries must be 0 or 1".into()));
    }
    if m.shape() == state.shape() {
        Ok(Some(bits))
    } else if m.shape() == state.sample_shape() || (m.shape().len() == state.shape().len() && m.batch() == 1 && m.per_sample() == per) {
        Ok(Some((0..state.len()).map(|k| bits[k % per]).collect()))
    } else {
        Err(Error::Shape(format!(
            "update mask {:?} does not match state {:?}",
            m.shape(),
            state.shape()
        )))
    }
}

/// Runs `cfg.steps` Langevin steps on `state` for the per-chain target
/// `target(z) -> (log p(z), ∇ log p(z))`. Entries where `mask` is 0 are
/// never written.
pub fn run_chains<S, F, R>(
    state: &Tensor<S>,
    cfg: &LangevinConfig,
    mask: Option<&Tensor<S>>,
    mut target: F,
    rng: &mut R,
) -> Result<(Tensor<S>, ChainStats)>
where
    S: Real,
    F: FnMut(&Tensor<S>) -> Result<(Vec<S>, Tensor<S>)>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let free = expand_mask(mask, state)?;
    let is_free = |k: usize| free.as_ref().is_none_or(|f| f[k]);
    let n = state.batch();
    let per = state.per_sample();
    let delta = cfg.step_size;
    let h = S::of(0.5 * delta * delta);
    let d = S::of(delta);
    let mut y = state.clone();
    let mut stats = ChainStats::default();
    let mut current: Option<(Vec<S>, Tensor<S>)> = None;

    for t in 0..cfg.steps {
        let (lp, g) = match current.take() {
            Some(v) => v,
            None => target(&y)?,
        };
        if !g.is_finite() {
            return Err(Error::Divergence(format!("non-finite gradient at step {t}")));
        }
        let mut noise = vec![S::zero(); y.len()];
        if cfg.noise {
            for v in noise.iter_mut() {
                let u: f64 = StandardNormal.sample(rng);
                *v = S::of(u);
            }
        }
        let mut prop = y.clone();
        {
            let p = prop.data_mut();
            for k in 0..p.len() {
                if is_free(k) {
                    p[k] = p[k] + h * g.data()[k] + d * noise[k];
                }
            }
        }

        if cfg.mh_correction {
            let (lp2, g2) = target(&prop)?;
            let inv = S::of(1.0 / (2.0 * delta * delta));
            let mut next = y.clone();
            let mut next_lp = lp.clone();
            let mut next_g = g.clone();
            for i in 0..n {
                let u: f64 = rng.random();
                stats.proposals += 1;
                let (mut fwd, mut bwd) = (S::zero(), S::zero());
                for j in 0..per {
                    let k = i * per + j;
                    if !is_free(k) {
                        continue;
                    }
                    let a = prop.data()[k] - y.data()[k] - h * g.data()[k];
                    let b = y.data()[k] - prop.data()[k] - h * g2.data()[k];
                    fwd += a * a;
                    bwd += b * b;
                }
                let log_alpha = (lp2[i] - lp[i] + (fwd - bwd) * inv).as_f64();
                if log_alpha.is_finite() && (log_alpha >= 0.0 || u.ln() < log_alpha) {
                    stats.accepted += 1;
                    next.sample_mut(i).copy_from_slice(prop.sample(i));
                    next_g.sample_mut(i).copy_from_slice(g2.sample(i));
                    next_lp[i] = lp2[i];
                }
            }
            y = next;
            current = Some((next_lp, next_g));
        } else {
            stats.proposals += n;
            stats.accepted += n;
            y = prop;
        }

        if !y.is_finite() {
            return Err(Error::Divergence(format!("non-finite state at step {t}")));
        }
        let m = y.max_abs().as_f64();
        if m > cfg.divergence_bound {
            return Err(Error::Divergence(format!(
                "state magnitude {m:.3e} exceeds bound {:.3e} at step {t}; reduce step_size",
                cfg.divergence_bound
            )));
        }
    }
    Ok((y, stats))
}

/// Refines `y0` by Langevin dynamics on the total energy for condition `c`.
pub fn refine<S, E, R>(
    y0: &Tensor<S>,
    c: &Tensor<S>,
    energy: &E,
    cfg: &LangevinConfig,
    mask: Option<&Tensor<S>>,
    rng: &mut R,
) -> Result<Tensor<S>>
where
    S: Real,
    E: Energy<S> + ?Sized,
    R: Rng + ?Sized,
{
    Ok(refine_with_stats(y0, c, energy, cfg, mask, rng)?.0)
}

pub fn refine_with_stats<S, E, R>(
    y0: &Tensor<S>,
    c: &Tensor<S>,
    energy: &E,
    cfg: &LangevinConfig,
    mask: Option<&Tensor<S>>,
    rng: &mut R,
) -> Result<(Tensor<S>, ChainStats)>
where
    S: Real,
    E: Energy<S> + ?Sized,
    R: Rng + ?Sized,
{
    if y0.batch() != c.batch() {
        return Err(Error::Shape(format!(
            "Y batch {} differs from C batch {}",
            y0.batch(),
            c.batch()
        )));
    }
    run_chains(y0, cfg, mask, |y| energy.log_density_and_grad(y, c), rng)
}

fn require_sigma<S: Real>(gen: &GeneratorModel<S>) -> Result<S> {
    let s = gen.residual_std();
    if s <= 0.0 {
        return Err(Error::Unsupported("posterior inference needs residual_std > 0".into()));
    }
    Ok(S::of(1.0 / (s * s)))
}

/// `log p(X | Y, C) + const` per sample and its gradient
/// `(1/σ²)(Y - g) ∂g/∂X - X`.
pub fn latent_log_posterior<S: Real>(
    y: &Tensor<S>,
    x: &Tensor<S>,
    c: &Tensor<S>,
    gen: &GeneratorModel<S>,
) -> Result<(Vec<S>, Tensor<S>)> {
    let inv_var = require_sigma(gen)?;
    let latent = Latent::vector(x.clone());
    let g = gen.mean(&latent, c)?;
    let resid = y.sub(&g)?;
    let seed = resid.scale(inv_var);
    let (_, grads) = gen.vjp(&latent, c, &seed, false, true, false)?;
    let mut drift = grads.x.expect("requested");
    drift.axpy(-S::one(), x)?;
    let half = S::of(0.5);
    let lp = (0..x.batch())
        .map(|i| {
            let r: S = resid.sample(i).iter().map(|&v| v * v).sum();
            let p: S = x.sample(i).iter().map(|&v| v * v).sum();
            -half * (inv_var * r + p)
        })
        .collect();
    Ok((lp, drift))
}

/// Samples `X ~ p(X | Y, C; α)` by Langevin dynamics started at `x0`.
pub fn infer_latent_x<S, R>(
    y: &Tensor<S>,
    c: &Tensor<S>,
    gen: &GeneratorModel<S>,
    cfg: &LangevinConfig,
    x0: &Tensor<S>,
    rng: &mut R,
) -> Result<Tensor<S>>
where
    S: Real,
    R: Rng + ?Sized,
{
    if !gen.has_vector_latent() {
        return Err(Error::Unsupported(
            "latent inference needs a vector latent; dropout latents cannot be inferred".into(),
        ));
    }
    require_sigma(gen)?;
    Ok(run_chains(x0, cfg, None, |x| latent_log_posterior(y, x, c, gen), rng)?.0)
}

/// Row-wise softmax.
pub fn softmax<S: Real>(a: &Tensor<S>) -> Tensor<S> {
    let mut out = a.clone();
    for i in 0..a.batch() {
        let row = out.sample_mut(i);
        let m = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut z = S::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    out
}

/// `log p(A | Y, X) + const` with `C = softmax(A)` and prior `A ~ N(0, I)`,
/// and its gradient with respect to `A`.
pub fn category_log_posterior<S: Real>(
    y: &Tensor<S>,
    x: &Tensor<S>,
    a: &Tensor<S>,
    gen: &GeneratorModel<S>,
) -> Result<(Vec<S>, Tensor<S>)> {
    let inv_var = require_sigma(gen)?;
    let c = softmax(a);
    let latent = Latent::vector(x.clone());
    let g = gen.mean(&latent, &c)?;
    let resid = y.sub(&g)?;
    let seed = resid.scale(inv_var);
    let (_, grads) = gen.vjp(&latent, &c, &seed, false, false, true)?;
    let gc = grads.c.expect("requested");
    let mut ga = a.scale(-S::one());
    let half = S::of(0.5);
    let mut lp = Vec::with_capacity(a.batch());
    for i in 0..a.batch() {
        let ci = c.sample(i);
        let gci = gc.sample(i);
        let inner: S = ci.iter().zip(gci).map(|(&p, &q)| p * q).sum();
        for (k, v) in ga.sample_mut(i).iter_mut().enumerate() {
            *v += ci[k] * (gci[k] - inner);
        }
        let r: S = resid.sample(i).iter().map(|&v| v * v).sum();
        let p: S = a.sample(i).iter().map(|&v| v * v).sum();
        lp.push(-half * (inv_var * r + p));
    }
    Ok((lp, ga))
}

fn require_categories<S: Real>(gen: &GeneratorModel<S>) -> Result<usize> {
    match gen.arch().condition.classes() {
        Some(k) if k >= 2 => Ok(k),
        Some(k) => Err(Error::Unsupported(format!("category inference needs K >= 2, got {k}"))),
        None => Err(Error::Unsupported("category inference needs a one-hot condition".into())),
    }
}

/// Samples the category logits `A` given `Y` and `X`; returns `(A, softmax(A))`.
pub fn infer_category<S, R>(
    y: &Tensor<S>,
    x: &Tensor<S>,
    gen: &GeneratorModel<S>,
    cfg: &LangevinConfig,
    a0: &Tensor<S>,
    rng: &mut R,
) -> Result<(Tensor<S>, Tensor<S>)>
where
    S: Real,
    R: Rng + ?Sized,
{
    let k = require_categories(gen)?;
    if a0.sample_shape() != [k] {
        return Err(Error::Shape(format!("A must be [n, {k}], got {:?}", a0.shape())));
    }
    let (a, _) = run_chains(a0, cfg, None, |a| category_log_posterior(y, x, a, gen), rng)?;
    let c = softmax(&a);
    Ok((a, c))
}

/// Result of [`gibbs_infer_xc`].
#[derive(Debug, Clone)]
pub struct GibbsResult<S> {
    pub x: Tensor<S>,
    pub a: Tensor<S>,
    pub c: Tensor<S>,
}

/// Alternates `X ~ p(X | Y, C)` and `A ~ p(A | Y, X)` from a standard normal
/// start for `sweeps` rounds.
pub fn gibbs_infer_xc<S, R>(
    y: &Tensor<S>,
    gen: &GeneratorModel<S>,
    cfg_x: &LangevinConfig,
    cfg_a: &LangevinConfig,
    sweeps: usize,
    rng: &mut R,
) -> Result<GibbsResult<S>>
where
    S: Real,
    R: Rng + ?Sized,
{
    let k = require_categories(gen)?;
    if !gen.has_vector_latent() {
        return Err(Error::Unsupported("latent inference needs a vector latent".into()));
    }
    let n = y.batch();
    let mut x = Tensor::randn([n, gen.latent_dim()], 1.0, rng);
    let mut a = Tensor::randn([n, k], 1.0, rng);
    let mut c = softmax(&a);
    for _ in 0..sweeps {
        x = infer_latent_x(y, &c, gen, cfg_x, &x, rng)?;
        let (a2, c2) = infer_category(y, &x, gen, cfg_a, &a, rng)?;
        a = a2;
        c = c2;
    }
    Ok(GibbsResult { x, a, c })
}
