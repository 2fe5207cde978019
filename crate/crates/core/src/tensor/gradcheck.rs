//! Central finite-difference verification of [`Graph::backprop`].

use std::collections::HashMap;

use super::{Bindings, Graph, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub input: String,
    pub elements: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub abs_floor: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

fn bind(map: &HashMap<String, Tensor<f64>>) -> Bindings<'_, f64> {
    let mut b = Bindings::new();
    for (k, v) in map {
        b.bind(k.as_str(), v);
    }
    b
}

/// Compares reverse-mode gradients of `<seed, output>` against central
/// differences, for every element of every input in `wrt`.
///
/// An element passes when its absolute error is within `abs_floor` or its
/// relative error is below `tolerance`.
pub fn finite_diff_check(
    graph: &Graph,
    inputs: &HashMap<String, Tensor<f64>>,
    output: &str,
    seed: &Tensor<f64>,
    wrt: &[&str],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let GradCheckOptions {
        step,
        tolerance,
        abs_floor,
    } = *opts;
    let objective = |map: &HashMap<String, Tensor<f64>>| -> Result<f64> {
        let tape = graph.evaluate(&bind(map))?;
        graph.fetch(&tape, output)?.dot(seed)
    };

    let analytic = {
        let tape = graph.evaluate(&bind(inputs))?;
        graph.backprop(&tape, output, seed, wrt)?
    };

    let mut entries = Vec::with_capacity(wrt.len());
    let mut work = inputs.clone();
    for &name in wrt {
        let grad = &analytic[name];
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        let mut passed = true;
        for k in 0..grad.len() {
            let orig = work[name].data()[k];
            work.get_mut(name).unwrap().data_mut()[k] = orig + step;
            let up = objective(&work)?;
            work.get_mut(name).unwrap().data_mut()[k] = orig - step;
            let down = objective(&work)?;
            work.get_mut(name).unwrap().data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = grad.data()[k];
            let abs_err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel_err = if scale > 0.0 { abs_err / scale } else { 0.0 };
            max_abs = max_abs.max(abs_err);
            if abs_err > abs_floor {
                max_rel = max_rel.max(rel_err);
                if rel_err >= tolerance {
                    passed = false;
                }
            }
        }
        entries.push(GradCheckEntry {
            input: name.to_string(),
            elements: grad.len(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
            passed,
        });
    }
    Ok(GradCheckReport {
        tolerance,
        abs_floor,
        entries,
    })
}
