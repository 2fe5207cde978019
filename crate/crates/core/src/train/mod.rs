//! Cooperative training: initialize by mapping, refine by Langevin, shift the
//! solver's objective, and shift the initializer's mapping.

mod adam;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::{self, CondDataset, ConditionKind};
use crate::error::{Error, Result};
use crate::langevin::{self, LangevinConfig};
use crate::models::{EnergyModel, GeneratorModel, Latent, ParamSet};
use crate::tensor::{Real, Tensor};

pub use adam::{adam_step, AdamConfig, AdamState};

/// Residual scale `σ` of the initializer used by both presets.
pub const PRESET_RESIDUAL_STD: f64 = 0.3;
/// Reference scale `s` of the solver used by both presets.
pub const PRESET_REFERENCE_STD: f64 = 0.016;

fn default_checkpoint_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Examples per step; one Langevin chain runs per example.
    pub batch_size: usize,
    pub solver_adam: AdamConfig,
    pub initializer_adam: AdamConfig,
    pub langevin: LangevinConfig,
    /// Weight of the ℓ1 term toward observed targets in the initializer loss.
    #[serde(default)]
    pub l1_weight: f64,
    /// From this epoch on, Langevin refinement runs without noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_anneal_epoch: Option<usize>,
    /// Save a checkpoint every this many epochs (0 disables).
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Apply jitter and mirroring to image pairs.
    #[serde(default)]
    pub augment: bool,
    /// Include per-step wall time in the stats log (makes logs differ run to run).
    #[serde(default)]
    pub log_wall_time: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.l1_weight >= 0.0 && self.l1_weight.is_finite()) {
            return Err(Error::Config("l1_weight must be nonnegative".into()));
        }
        self.solver_adam.validate("solver")?;
        self.initializer_adam.validate("initializer")?;
        self.langevin.validate()
    }

    /// Category-to-image settings at full scale: Adam rates 0.002 (solver)
    /// and 0.0064 (initializer), batch 300, 8 Langevin steps of size 0.0008,
    /// 2000 epochs with noise disabled for the last 1500.
    pub fn cat2img_preset() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 300,
            solver_adam: AdamConfig::new(0.002),
            initializer_adam: AdamConfig::new(0.0064),
            langevin: LangevinConfig::new(8, 0.0008),
            l1_weight: 0.0,
            noise_anneal_epoch: Some(500),
            checkpoint_every: default_checkpoint_every(),
            augment: false,
            log_wall_time: false,
        }
    }

    /// Image-to-image settings at full scale: Adam rates 0.007 and 0.0001,
    /// batch 1, 15 Langevin steps of size 0.002, 3000 epochs, ℓ1 weight 100.
    pub fn img2img_preset() -> Self {
        TrainConfig {
            epochs: 3000,
            batch_size: 1,
            solver_adam: AdamConfig::new(0.007),
            initializer_adam: AdamConfig::new(0.0001),
            langevin: LangevinConfig::new(15, 0.002),
            l1_weight: 100.0,
            noise_anneal_epoch: None,
            checkpoint_every: default_checkpoint_every(),
            augment: true,
            log_wall_time: false,
        }
    }

    /// Langevin settings in effect during `epoch`.
    pub fn langevin_at(&self, epoch: usize) -> LangevinConfig {
        let mut cfg = self.langevin.clone();
        if self.noise_anneal_epoch.is_some_and(|e| epoch >= e) {
            cfg.noise = false;
            cfg.mh_correction = false;
        }
        cfg
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState<S> {
    pub solver: EnergyModel<S>,
    pub initializer: GeneratorModel<S>,
    pub solver_adam: AdamState<S>,
    pub initializer_adam: AdamState<S>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl<S: Real> TrainState<S> {
    pub fn new(solver: EnergyModel<S>, initializer: GeneratorModel<S>, seed: u64) -> Self {
        let solver_adam = AdamState::new(&solver.params);
        let initializer_adam = AdamState::new(&initializer.params);
        TrainState {
            solver,
            initializer,
            solver_adam,
            initializer_adam,
            epoch: 0,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub epoch: usize,
    pub step: u64,
    pub f_observed: f64,
    pub f_refined: f64,
    pub solver_grad_norm: f64,
    pub initializer_grad_norm: f64,
    /// `(1/n) Σ |Ỹ - g|²`
    pub regression_loss: f64,
    /// `(1/n) Σ |Y - g|₁`, when the ℓ1 term is active.
    pub l1_loss: Option<f64>,
    pub acceptance_rate: f64,
    pub wall_time_s: f64,
}

impl StepStats {
    pub fn is_finite(&self) -> bool {
        [
            self.f_observed,
            self.f_refined,
            self.solver_grad_norm,
            self.initializer_grad_norm,
            self.regression_loss,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// One log record. Wall time is left out unless asked for, so that logs
    /// of identical runs compare equal.
    pub fn to_record(&self, wall_time: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "epoch": self.epoch,
            "step": self.step,
            "f_observed": self.f_observed,
            "f_refined": self.f_refined,
            "solver_grad_norm": self.solver_grad_norm,
            "initializer_grad_norm": self.initializer_grad_norm,
            "regression_loss": self.regression_loss,
            "acceptance_rate": self.acceptance_rate,
        });
        if let Some(l1) = self.l1_loss {
            v["l1_loss"] = l1.into();
        }
        if wall_time {
            v["wall_time_s"] = self.wall_time_s.into();
        }
        v
    }
}

fn mean<S: Real>(v: &[S]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.as_f64()).sum::<f64>() / v.len() as f64
    }
}

/// Gradient of `mean f(observed) - mean f(refined)` with respect to θ, and
/// the two means.
pub fn solver_grad<S: Real>(
    observed: &Tensor<S>,
    refined: &Tensor<S>,
    c: &Tensor<S>,
    model: &EnergyModel<S>,
) -> Result<(ParamSet<S>, f64, f64)> {
    let n = observed.batch();
    if refined.batch() != n || c.batch() != n {
        return Err(Error::Shape(format!(
            "batch sizes differ: observed {n}, refined {}, conditions {}",
            refined.batch(),
            c.batch()
        )));
    }
    let w = vec![S::of(1.0 / n as f64); n];
    let (mut g, f_obs) = model.param_grad(observed, c, &w)?;
    let (g_ref, f_ref) = model.param_grad(refined, c, &w)?;
    g.axpy(-S::one(), &g_ref)?;
    Ok((g, mean(&f_obs), mean(&f_ref)))
}

/// Initializer loss terms and gradient.
#[derive(Debug, Clone)]
pub struct InitializerGrad<S> {
    pub grad: ParamSet<S>,
    pub regression_loss: f64,
    pub l1_loss: Option<f64>,
}

/// Gradient with respect to α of `(1/n) Σ |Ỹ_i - g(X_i, C_i)|²`, plus
/// `λ (1/n) Σ |Y_i - g(X_i, C_i)|₁` when ground truth is given.
pub fn initializer_grad<S: Real>(
    latent: &Latent<S>,
    c: &Tensor<S>,
    refined: &Tensor<S>,
    model: &GeneratorModel<S>,
    ground_truth: Option<&Tensor<S>>,
    l1_weight: f64,
) -> Result<InitializerGrad<S>> {
    let n = c.batch();
    if refined.batch() != n || latent.batch().is_some_and(|b| b != n) {
        return Err(Error::Shape(format!(
            "batch sizes differ: conditions {n}, refined {}, latents {:?}",
            refined.batch(),
            latent.batch()
        )));
    }
    let g = model.mean(latent, c)?;
    let inv_n = S::of(1.0 / n as f64);
    let two = S::of(2.0);
    let resid = g.sub(refined)?;
    let regression_loss = resid.norm_sq().as_f64() / n as f64;
    let mut seed = resid.scale(two * inv_n);
    let mut l1_loss = None;
    if let Some(y) = ground_truth {
        let diff = g.sub(y)?;
        l1_loss = Some(diff.data().iter().map(|v| v.abs().as_f64()).sum::<f64>() / n as f64);
        let k = S::of(l1_weight) * inv_n;
        for (s, &d) in seed.data_mut().iter_mut().zip(diff.data()) {
            let sign = if d > S::zero() {
                S::one()
            } else if d < S::zero() {
                -S::one()
            } else {
                S::zero()
            };
            *s += k * sign;
        }
    }
    let (_, grads) = model.vjp(latent, c, &seed, true, false, false)?;
    Ok(InitializerGrad {
        grad: grads.params.expect("requested"),
        regression_loss,
        l1_loss,
    })
}

/// Intermediate values of one training step, exposed for inspection.
#[derive(Debug, Clone)]
pub struct StepTrace<S> {
    pub latent: Latent<S>,
    pub initial: Tensor<S>,
    pub refined: Tensor<S>,
}

/// `m ⊙ a + (1 - m) ⊙ b`, with `m` per sample or per batch.
pub fn compose_masked<S: Real>(a: &Tensor<S>, b: &Tensor<S>, mask: &Tensor<S>) -> Result<Tensor<S>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "masked composition needs C shaped like Y: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let per = a.per_sample();
    let full = mask.shape() == a.shape();
    if !full && mask.len() != per {
        return Err(Error::Shape(format!("mask {:?} does not match {:?}", mask.shape(), a.shape())));
    }
    let mut out = b.clone();
    for (k, o) in out.data_mut().iter_mut().enumerate() {
        let m = if full { mask.data()[k] } else { mask.data()[k % per] };
        if m != S::zero() {
            *o = a.data()[k];
        }
    }
    Ok(out)
}

/// One iteration of cooperative learning on a batch.
///
/// With `mask`, only masked entries of the initial solution come from the
/// initializer (the rest are copied from `C`) and only those entries are
/// refined.
pub fn train_step<S: Real>(
    y: &Tensor<S>,
    c: &Tensor<S>,
    state: &mut TrainState<S>,
    cfg: &TrainConfig,
    mask: Option<&Tensor<S>>,
) -> Result<(StepStats, StepTrace<S>)> {
    let start = Instant::now();
    let n = y.batch();
    if n == 0 || c.batch() != n {
        return Err(Error::Shape(format!("bad batch: {} targets, {} conditions", n, c.batch())));
    }
    // (i) initialize by mapping
    let latent = state.initializer.sample_latent(n, &mut state.rng);
    let mut initial = state.initializer.generate(&latent, c, &mut state.rng)?;
    if let Some(m) = mask {
        initial = compose_masked(&initial, c, m)?;
    }
    // (ii) solve by Langevin
    let lcfg = cfg.langevin_at(state.epoch);
    let (refined, chain) = langevin::refine_with_stats(&initial, c, &state.solver, &lcfg, mask, &mut state.rng)?;
    // (iii) objective shift: ascent on mean f(obs) - mean f(refined)
    let (g_theta, f_obs, f_ref) = solver_grad(y, &refined, c, &state.solver)?;
    let solver_grad_norm = g_theta.norm();
    adam_step(
        &mut state.solver.params,
        &g_theta.scale(-S::one()),
        &mut state.solver_adam,
        &cfg.solver_adam,
    )?;
    // (iv) mapping shift with the latents of step (i)
    let gt = (cfg.l1_weight > 0.0).then_some(y);
    let ig = initializer_grad(&latent, c, &refined, &state.initializer, gt, cfg.l1_weight)?;
    let initializer_grad_norm = ig.grad.norm();
    adam_step(
        &mut state.initializer.params,
        &ig.grad,
        &mut state.initializer_adam,
        &cfg.initializer_adam,
    )?;
    state.step += 1;
    let stats = StepStats {
        epoch: state.epoch,
        step: state.step,
        f_observed: f_obs,
        f_refined: f_ref,
        solver_grad_norm,
        initializer_grad_norm,
        regression_loss: ig.regression_loss,
        l1_loss: ig.l1_loss,
        acceptance_rate: chain.acceptance_rate(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if !stats.is_finite() || !state.solver.params.is_finite() || !state.initializer.params.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite values after step {}; reduce learning rates or step size",
            state.step
        )));
    }
    Ok((
        stats,
        StepTrace {
            latent,
            initial,
            refined,
        },
    ))
}

/// Where [`train`] writes its checkpoints and stats log.
#[derive(Debug, Clone, Copy)]
pub struct TrainOutput<'a> {
    pub dir: &'a Path,
}

pub const STATS_LOG: &str = "stats.jsonl";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:05}.ckpt")
}

/// Keeps only log records with `step <= last_step`, so a resumed run does
/// not repeat lines written after the checkpoint it resumes from.
fn truncate_log(path: &Path, last_step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let step = serde_json::from_str::<serde_json::Value>(&line)
            .ok()
            .and_then(|v| v.get("step").and_then(|s| s.as_u64()));
        if step.is_some_and(|s| s <= last_step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))
}

/// Runs epochs `state.epoch..cfg.epochs` over uniformly shuffled
/// mini-batches. With an output directory, appends one record per step to
/// `stats.jsonl` and writes checkpoints at the configured cadence.
pub fn train<S: Real>(
    dataset: &CondDataset<S>,
    state: &mut TrainState<S>,
    cfg: &TrainConfig,
    mask: Option<&Tensor<S>>,
    out: Option<TrainOutput<'_>>,
    mut on_step: impl FnMut(&StepStats),
) -> Result<()> {
    cfg.validate()?;
    let mut log = match out {
        Some(o) => {
            std::fs::create_dir_all(o.dir).map_err(|e| Error::io(o.dir, e))?;
            let p = o.dir.join(STATS_LOG);
            truncate_log(&p, state.step)?;
            Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)
                    .map_err(|e| Error::io(&p, e))?,
            )
        }
        None => None,
    };
    if dataset.is_empty() && cfg.epochs > state.epoch {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let label_map = matches!(dataset.kind, ConditionKind::Image { label_map: true });
    let augment = cfg.augment && matches!(dataset.kind, ConditionKind::Image { .. });
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    while state.epoch < cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut state.rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (mut y, mut c) = dataset.select(chunk);
            if augment {
                (y, c) = data::augment_batch(&y, &c, label_map, &mut state.rng)?;
            }
            let (stats, _) = train_step(&y, &c, state, cfg, mask)?;
            if let Some(f) = log.as_mut() {
                let line = stats.to_record(cfg.log_wall_time).to_string();
                writeln!(f, "{line}").map_err(|e| Error::io(STATS_LOG, e))?;
            }
            on_step(&stats);
        }
        state.epoch += 1;
        if let Some(o) = out {
            if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 {
                if let Some(f) = log.as_mut() {
                    f.flush().map_err(|e| Error::io(STATS_LOG, e))?;
                }
                checkpoint::save_state(&o.dir.join(epoch_checkpoint_name(state.epoch)), state)?;
                checkpoint::save_state(&o.dir.join(LATEST_CHECKPOINT), state)?;
            }
        }
    }
    if let Some(o) = out {
        checkpoint::save_state(&o.dir.join(LATEST_CHECKPOINT), state)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternatingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Posterior sampling of `X` given each observed pair.
    pub langevin: LangevinConfig,
}

/// Trains the initializer alone by alternating back-propagation: sample
/// `X_i ~ p(X | Y_i, C_i)` by Langevin dynamics (chains persist across
/// epochs), then take a gradient step on `(1/n) Σ |Y_i - g(X_i, C_i)|²`.
/// Returns the mean reconstruction loss of each epoch.
pub fn train_initializer_alone<S: Real>(
    dataset: &CondDataset<S>,
    model: &mut GeneratorModel<S>,
    cfg: &AlternatingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if !model.has_vector_latent() {
        return Err(Error::Unsupported(
            "alternating back-propagation needs a vector latent to infer".into(),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    cfg.adam.validate("initializer")?;
    let n = dataset.len();
    let mut xs: Tensor<S> = Tensor::randn([n, model.latent_dim()], 1.0, rng);
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (y, c) = dataset.select(chunk);
            let x0 = xs.gather(chunk);
            let x = langevin::infer_latent_x(&y, &c, model, &cfg.langevin, &x0, rng)?;
            for (j, &i) in chunk.iter().enumerate() {
                xs.sample_mut(i).copy_from_slice(x.sample(j));
            }
            let latent = Latent::vector(x);
            let ig = initializer_grad(&latent, &c, &y, model, None, 0.0)?;
            total += ig.regression_loss * chunk.len() as f64;
            adam_step(&mut model.params, &ig.grad, &mut adam, &cfg.adam)?;
        }
        losses.push(total / n.max(1) as f64);
    }
    Ok(losses)
}
