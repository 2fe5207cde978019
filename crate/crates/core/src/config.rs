//! JSON run configuration shared by the CLI and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{MaskSpec, ToySpec};
use crate::error::{Error, Result};
use crate::eval::{DiscreteCoopSystem, KernelKind};
use crate::langevin::LangevinConfig;
use crate::models::{ArchDescriptor, ConditionSpec, Registry};
use crate::tensor::Precision;
use crate::train::TrainConfig;

/// ℓ1 weight used for image-conditioned tasks when the config omits it.
pub const IMAGE_TASK_L1_WEIGHT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Cat2img,
    Img2img,
    Inpaint,
    Toy,
    FixedPoint,
}

impl Task {
    fn image_conditioned(self) -> bool {
        matches!(self, Task::Img2img | Task::Inpaint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub arch: ArchDescriptor,
    /// Scale `s` of the Gaussian reference term; omit to drop the term.
    #[serde(default)]
    pub reference_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitializerConfig {
    pub arch: ArchDescriptor,
    pub residual_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Synthetic pairs; the last `test` of `train + test` draws are held out.
    Toy {
        spec: ToySpec,
        train: usize,
        #[serde(default)]
        test: usize,
    },
    /// Paired images listed in a manifest (paths relative to the two directories).
    Images {
        condition_dir: PathBuf,
        target_dir: PathBuf,
        manifest: PathBuf,
        #[serde(default)]
        label_map: bool,
    },
}

/// Langevin settings for `X` and category inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    pub latent: LangevinConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<LangevinConfig>,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
}

fn default_sweeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Explicit(DiscreteCoopSystem),
    Random {
        states: usize,
        conditions: usize,
        seed: u64,
        #[serde(default = "default_kernel")]
        kernel: KernelKind,
        #[serde(default = "default_solver_lr")]
        solver_lr: f64,
        #[serde(default = "default_initializer_lr")]
        initializer_lr: f64,
    },
}

fn default_kernel() -> KernelKind {
    KernelKind::Metropolis { sweeps: 10 }
}
fn default_solver_lr() -> f64 {
    2.0
}
fn default_initializer_lr() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn build(&self) -> Result<DiscreteCoopSystem> {
        let sys = match self {
            SystemConfig::Explicit(s) => s.clone(),
            SystemConfig::Random {
                states,
                conditions,
                seed,
                kernel,
                solver_lr,
                initializer_lr,
            } => {
                let mut s = DiscreteCoopSystem::random(*states, *conditions, *seed, *kernel);
                s.solver_lr = *solver_lr;
                s.initializer_lr = *initializer_lr;
                s
            }
        };
        sys.validate()?;
        Ok(sys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    pub system: SystemConfig,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PrecisionBits(pub Precision);

impl TryFrom<u8> for PrecisionBits {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Precision::from_bits(v)
            .map(PrecisionBits)
            .ok_or_else(|| format!("precision must be 32 or 64, got {v}"))
    }
}

impl From<PrecisionBits> for u8 {
    fn from(p: PrecisionBits) -> u8 {
        p.0.bits()
    }
}

impl Default for PrecisionBits {
    fn default() -> Self {
        PrecisionBits(Precision::F32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: PrecisionBits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initializer: Option<InitializerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    /// Refinement used by sampling and inpainting; defaults to `train.langevin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<LangevinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<InferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    /// Inpainting hole; the condition is the target with the hole zeroed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<FixedPointConfig>,
}

impl RunConfig {
    /// Parses and validates. Image-conditioned tasks get the default ℓ1
    /// weight when `train.l1_weight` is absent.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let image_task = v
            .get("task")
            .and_then(|t| serde_json::from_value::<Task>(t.clone()).ok())
            .is_some_and(Task::image_conditioned);
        if image_task {
            if let Some(train) = v.get_mut("train").and_then(|t| t.as_object_mut()) {
                train
                    .entry("l1_weight")
                    .or_insert_with(|| serde_json::json!(IMAGE_TASK_L1_WEIGHT));
            }
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    fn need<'a, T>(&self, v: &'a Option<T>, name: &str) -> Result<&'a T> {
        v.as_ref()
            .ok_or_else(|| Error::Config(format!("task {:?} requires a `{name}` section", self.task)))
    }

    pub fn solver(&self) -> Result<&SolverConfig> {
        self.need(&self.solver, "solver")
    }

    pub fn initializer(&self) -> Result<&InitializerConfig> {
        self.need(&self.initializer, "initializer")
    }

    pub fn train_config(&self) -> Result<&TrainConfig> {
        self.need(&self.train, "train")
    }

    pub fn data_config(&self) -> Result<&DataConfig> {
        self.need(&self.data, "data")
    }

    pub fn fixed_point_config(&self) -> Result<&FixedPointConfig> {
        self.need(&self.fixed_point, "fixed_point")
    }

    pub fn sampling_langevin(&self) -> Result<LangevinConfig> {
        match (&self.sampling, &self.train) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(t)) => Ok(t.langevin.clone()),
            (None, None) => Err(Error::Config("no `sampling` or `train.langevin` settings".into())),
        }
    }

    /// Checks every section the task uses, before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.task == Task::FixedPoint {
            self.fixed_point_config()?.system.build()?;
            return Ok(());
        }
        let solver = self.solver()?;
        let init = self.initializer()?;
        Registry::energy_builtin().check(&solver.arch)?;
        Registry::generator_builtin().check(&init.arch)?;
        if let Some(s) = solver.reference_std {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("reference_std must be positive, got {s}")));
            }
        }
        if !(init.residual_std >= 0.0 && init.residual_std.is_finite()) {
            return Err(Error::Config(format!(
                "residual_std must be nonnegative, got {}",
                init.residual_std
            )));
        }
        if solver.arch.target_shape != init.arch.target_shape || solver.arch.condition != init.arch.condition {
            return Err(Error::Config(
                "solver and initializer disagree on target shape or condition".into(),
            ));
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(s) = &self.sampling {
            s.validate()?;
        }
        if let Some(i) = &self.inference {
            i.latent.validate()?;
            if let Some(c) = &i.category {
                c.validate()?;
            }
        }
        let image_cond = matches!(solver.arch.condition, ConditionSpec::Image(_));
        if self.task.image_conditioned() != image_cond {
            return Err(Error::Config(format!(
                "task {:?} does not match the {} condition of the architectures",
                self.task,
                if image_cond { "image" } else { "one-hot" }
            )));
        }
        match &self.data {
            Some(DataConfig::Toy { spec, train, .. }) => {
                spec.family.validate()?;
                if *train == 0 {
                    return Err(Error::Config("data.train must be at least 1".into()));
                }
                if spec.family.target_shape() != solver.arch.target_shape {
                    return Err(Error::Config(format!(
                        "toy targets are {:?} but the models expect {:?}",
                        spec.family.target_shape(),
                        solver.arch.target_shape
                    )));
                }
                if self.task != Task::Inpaint && solver.arch.condition.classes() != Some(spec.family.classes()) {
                    return Err(Error::Config(format!(
                        "toy has {} classes but the models expect condition {:?}",
                        spec.family.classes(),
                        solver.arch.condition
                    )));
                }
            }
            Some(DataConfig::Images { .. }) if !image_cond => {
                return Err(Error::Config("image data requires image-conditioned models".into()));
            }
            _ => {}
        }
        if self.task == Task::Inpaint {
            let m = self.need(&self.mask, "mask")?;
            m.mask::<f64>(&solver.arch.target_shape)?;
            if solver.arch.condition.shape() != solver.arch.target_shape {
                return Err(Error::Config("inpainting needs the condition shaped like the target".into()));
            }
        }
        Ok(())
    }
}
