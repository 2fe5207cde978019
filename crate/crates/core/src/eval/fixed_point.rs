use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transition kernel `M_θ` of the simulated solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    /// `sweeps` applications of a Metropolis step on a ring of states:
    /// propose a neighbour (each with probability 1/2), accept with
    /// `min(1, p_θ(s') / p_θ(s))`.
    Metropolis { sweeps: usize },
    /// Jumps straight to `p_θ` regardless of the current state.
    Exact,
}

/// Exact-probability model of cooperative learning on a finite state space.
///
/// Tables are indexed `[condition][state]`. The solver is `p_θ(s|c) ∝
/// exp θ[c][s]`; the initializer is `q(s|c) ∝ exp logits[c][s]`; conditions
/// are weighted uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteCoopSystem {
    pub theta: Vec<Vec<f64>>,
    pub q_logits: Vec<Vec<f64>>,
    pub f_data: Vec<Vec<f64>>,
    pub kernel: KernelKind,
    pub solver_lr: f64,
    pub initializer_lr: f64,
}

/// Diagnostics before the update of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub kl_data_p: f64,
    pub kl_mq_p: f64,
    pub kl_mq_q: f64,
    pub tv_q_p: f64,
    /// `KL(q ‖ p_θ)`, for checking that `M_θ` contracts toward `p_θ`.
    pub kl_q_p: f64,
}

pub fn softmax_row(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `KL(p ‖ q)`; terms with `p = 0` contribute nothing.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn mat_vec_left(q: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let n = q.len();
    let mut out = vec![0.0; n];
    for (i, &qi) in q.iter().enumerate() {
        for j in 0..n {
            out[j] += qi * m[i][j];
        }
    }
    out
}

impl DiscreteCoopSystem {
    pub fn states(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn conditions(&self) -> usize {
        self.theta.len()
    }

    /// Random data distribution, flat solver and initializer.
    pub fn random(states: usize, conditions: usize, seed: u64, kernel: KernelKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_data = (0..conditions)
            .map(|_| {
                let logits: Vec<f64> = (0..states)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        1.5 * z
                    })
                    .collect();
                softmax_row(&logits)
            })
            .collect();
        DiscreteCoopSystem {
            theta: vec![vec![0.0; states]; conditions],
            q_logits: vec![vec![0.0; states]; conditions],
            f_data,
            kernel,
            solver_lr: 1.0,
            initializer_lr: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (s, c) = (self.states(), self.conditions());
        let bad = |m: String| Err(Error::Config(format!("discrete system: {m}")));
        if s < 2 || c == 0 {
            return bad(format!("needs at least 2 states and 1 condition, got {s} and {c}"));
        }
        for (name, t) in [("theta", &self.theta), ("q_logits", &self.q_logits), ("f_data", &self.f_data)] {
            if t.len() != c || t.iter().any(|r| r.len() != s) {
                return bad(format!("{name} must be {c} rows of {s}"));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        for (k, row) in self.f_data.iter().enumerate() {
            let z: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (z - 1.0).abs() > 1e-12 {
                return bad(format!("f_data row {k} is not a distribution"));
            }
        }
        if !(self.solver_lr >= 0.0 && self.initializer_lr >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        Ok(())
    }

    /// Row-stochastic `M_θ(s' | s, c)`.
    pub fn kernel_matrix(&self, c: usize) -> Vec<Vec<f64>> {
        let n = self.states();
        let p = softmax_row(&self.theta[c]);
        match self.kernel {
            KernelKind::Exact => vec![p; n],
            KernelKind::Metropolis { sweeps } => {
                let th = &self.theta[c];
                let mut step = vec![vec![0.0; n]; n];
                for (s, row) in step.iter_mut().enumerate() {
                    for t in [(s + 1) % n, (s + n - 1) % n] {
                        let a = (th[t] - th[s]).exp().min(1.0);
                        row[t] += 0.5 * a;
                    }
                    let moved: f64 = row.iter().sum();
                    row[s] += 1.0 - moved;
                }
                let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
                for _ in 0..sweeps {
                    m = m.iter().map(|row| mat_vec_left(row, &step)).collect();
                }
                m
            }
        }
    }

    /// Diagnostics for the current tables, and `M_θ q` per condition.
    pub fn diagnostics(&self, iteration: usize) -> (TraceRow, Vec<Vec<f64>>) {
        let nc = self.conditions() as f64;
        let mut row = TraceRow {
            iteration,
            kl_data_p: 0.0,
            kl_mq_p: 0.0,
            kl_mq_q: 0.0,
            tv_q_p: 0.0,
            kl_q_p: 0.0,
        };
        let mut mqs = Vec::with_capacity(self.conditions());
        for c in 0..self.conditions() {
            let p = softmax_row(&self.theta[c]);
            let q = softmax_row(&self.q_logits[c]);
            let mq = mat_vec_left(&q, &self.kernel_matrix(c));
            row.kl_data_p += kl(&self.f_data[c], &p) / nc;
            row.kl_mq_p += kl(&mq, &p) / nc;
            row.kl_mq_q += kl(&mq, &q) / nc;
            row.tv_q_p += total_variation(&q, &p) / nc;
            row.kl_q_p += kl(&q, &p) / nc;
            mqs.push(mq);
        }
        (row, mqs)
    }

    /// One exact iteration: `θ += γ p(c) (f_data - M_θ q)` and
    /// `logits += η (M_θ q - q)`, both from the same `M_θ q`.
    pub fn step(&mut self, mq: &[Vec<f64>]) {
        let pc = 1.0 / self.conditions() as f64;
        for c in 0..self.conditions() {
            let q = softmax_row(&self.q_logits[c]);
            for s in 0..self.states() {
                self.theta[c][s] += self.solver_lr * pc * (self.f_data[c][s] - mq[c][s]);
                self.q_logits[c][s] += self.initializer_lr * (mq[c][s] - q[s]);
            }
        }
    }
}

/// Runs `iterations` exact iterations and returns `iterations + 1` rows:
/// the diagnostics before each update and after the last one.
pub fn fixed_point_sim(sys: &DiscreteCoopSystem, iterations: usize) -> Result<Vec<TraceRow>> {
    sys.validate()?;
    let mut s = sys.clone();
    for c in 0..s.conditions() {
        let m = s.kernel_matrix(c);
        if m.iter().any(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 || r.iter().any(|&v| v < 0.0)) {
            return Err(Error::Config(format!("kernel for condition {c} is not stochastic")));
        }
    }
    let mut trace = Vec::with_capacity(iterations + 1);
    for it in 0..=iterations {
        let (row, mq) = s.diagnostics(it);
        trace.push(row);
        if it < iterations {
            s.step(&mq);
        }
    }
    Ok(trace)
}

/// CSV with columns `iteration,kl_data_p,kl_mq_p,kl_mq_q,tv_q_stationary`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iteration,kl_data_p,kl_mq_p,kl_mq_q,tv_q_stationary\n");
    for r in trace {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.iteration, r.kl_data_p, r.kl_mq_p, r.kl_mq_q, r.tv_q_p
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
