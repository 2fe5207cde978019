use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamSet;
use crate::tensor::Real;

fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings for {what}: {self:?}")))
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: ParamSet<S>,
    pub v: ParamSet<S>,
    pub t: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(params: &ParamSet<S>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam descent step on `params` along `grads`.
/// For ascent, pass the negated gradient.
pub fn adam_step<S: Real>(
    params: &mut ParamSet<S>,
    grads: &ParamSet<S>,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::of(cfg.beta1);
    let b2 = S::of(cfg.beta2);
    let one = S::one();
    let c1 = S::of(1.0 - cfg.beta1.powi(t));
    let c2 = S::of(1.0 - cfg.beta2.powi(t));
    let lr = S::of(cfg.lr);
    let eps = S::of(cfg.eps);
    for (name, p) in params.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Shape(format!("no gradient for `{name}`")))?;
        let m = state
            .m
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("no first moment for `{name}`")))?;
        if g.shape() != p.shape() || m.shape() != p.shape() {
            return Err(Error::Shape(format!("Adam shapes disagree for `{name}`")));
        }
        for (mi, &gi) in m.data_mut().iter_mut().zip(g.data()) {
            *mi = b1 * *mi + (one - b1) * gi;
        }
        let v = state
            .v
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("no second moment for `{name}`")))?;
        if v.shape() != p.shape() {
            return Err(Error::Shape(format!("Adam shapes disagree for `{name}`")));
        }
        for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = b2 * *vi + (one - b2) * gi * gi;
        }
        let m = state.m.get(name).expect("checked above");
        let v = state.v.get(name).expect("checked above");
        for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let mhat = mi / c1;
            let vhat = vi / c2;
            *pi -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
