use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Equal-weight isotropic Gaussian mixture centred at reference samples.
#[derive(Debug, Clone)]
pub struct ParzenEstimator {
    reference: Vec<f64>,
    dim: usize,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParzenReport {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
    pub bandwidth: f64,
}

impl ParzenEstimator {
    pub fn new<S: Real>(reference: &Tensor<S>, bandwidth: f64) -> Result<Self> {
        if reference.batch() == 0 || reference.is_empty() {
            return Err(Error::Shape("Parzen estimator needs reference samples".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(ParzenEstimator {
            reference: reference.to_f64_vec(),
            dim: reference.per_sample(),
            bandwidth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log (1/m) Σ_j N(y; y_j, σ² I)` via log-sum-exp.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let m = self.reference.len() / self.dim;
        let mut best = f64::NEG_INFINITY;
        let exps: Vec<f64> = self
            .reference
            .chunks_exact(self.dim)
            .map(|r| {
                let d2: f64 = r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                let e = -d2 * inv;
                best = best.max(e);
                e
            })
            .collect();
        let s: f64 = exps.iter().map(|e| (e - best).exp()).sum();
        let log_norm = 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * self.bandwidth * self.bandwidth).ln();
        best + s.ln() - (m as f64).ln() - log_norm
    }
}

/// Mean log-likelihood of `test` under the estimator, with its standard error.
pub fn parzen_loglik<S: Real>(est: &ParzenEstimator, test: &Tensor<S>) -> Result<ParzenReport> {
    if test.batch() == 0 || test.is_empty() {
        return Err(Error::Shape("Parzen evaluation needs test samples".into()));
    }
    if test.per_sample() != est.dim {
        return Err(Error::Shape(format!(
            "test dimension {} differs from reference dimension {}",
            test.per_sample(),
            est.dim
        )));
    }
    let t = test.to_f64_vec();
    let lls: Vec<f64> = t.par_chunks(est.dim).map(|y| est.log_density(y)).collect();
    let n = lls.len();
    let mean = lls.iter().sum::<f64>() / n as f64;
    let std_err = if n > 1 {
        let var = lls.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(ParzenReport {
        mean,
        std_err,
        n,
        bandwidth: est.bandwidth,
    })
}

/// 20 log-spaced values in `[0.01, 1]`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (0..20).map(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / 19.0)).collect()
}

/// The grid value with the highest validation mean log-likelihood; ties go
/// to the smaller bandwidth.
pub fn select_bandwidth<S: Real>(reference: &Tensor<S>, validation: &Tensor<S>, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("bandwidth grid is empty".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for &h in &sorted {
        let r = parzen_loglik(&ParzenEstimator::new(reference, h)?, validation)?;
        if r.mean > best.0 {
            best = (r.mean, h);
        }
    }
    Ok(best.1)
}
