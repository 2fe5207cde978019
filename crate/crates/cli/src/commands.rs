use std::path::{Path, PathBuf};

use coopnet::checkpoint;
use coopnet::config::{DataConfig, InferenceConfig, RunConfig, Task};
use coopnet::data::{self, load_image, one_hot, CondDataset, ConditionKind, MaskSpec};
use coopnet::eval::{
    default_bandwidth_grid, fixed_point_sim, parzen_loglik, psnr, select_bandwidth, ssim, write_trace_csv,
    ParzenEstimator, SsimParams,
};
use coopnet::langevin::{gibbs_infer_xc, infer_latent_x, refine, LangevinConfig};
use coopnet::models::{ConditionSpec, EnergyModel, GeneratorModel, Latent};
use coopnet::tensor::{Precision, Real, Tensor};
use coopnet::train::{compose_masked, train, TrainOutput, TrainState};
use coopnet::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::files::{matrix_tensor, read_matrix, save_grid, write_rows, y_header};
use crate::{Cli, Command, EvalArgs, Metric, Stage};

struct Ctx {
    config: Option<RunConfig>,
    seed: u64,
    out: PathBuf,
    precision: Option<Precision>,
}

impl Ctx {
    fn config(&self) -> Result<&RunConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }

    /// Precision of an existing checkpoint; `--precision` must agree with it.
    fn checkpoint_precision(&self, path: &Path) -> Result<Precision> {
        let (p, _) = checkpoint::peek(path)?;
        match self.precision {
            Some(want) if want != p => Err(Error::Config(format!(
                "--precision {} but {} holds {}-bit values",
                want.bits(),
                path.display(),
                p.bits()
            ))),
            _ => Ok(p),
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let config = g.config.as_deref().map(RunConfig::load).transpose()?;
    let precision = g
        .precision
        .as_deref()
        .map(|p| Precision::from_bits(p.parse().unwrap_or(0)).expect("clap restricts the values"));
    let ctx = Ctx {
        seed: g.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0),
        out: g
            .out
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out")),
        precision,
        config,
    };
    macro_rules! by_precision {
        ($p:expr, $f:ident($($arg:expr),*)) => {
            match $p {
                Precision::F32 => $f::<f32>($($arg),*),
                Precision::F64 => $f::<f64>($($arg),*),
            }
        };
    }
    match &cli.command {
        Command::Train { resume } => {
            let p = match resume {
                Some(r) => ctx.checkpoint_precision(r)?,
                None => ctx.precision.unwrap_or(ctx.config()?.precision.0),
            };
            by_precision!(p, cmd_train(&ctx, resume.as_deref()))
        }
        Command::Sample {
            checkpoint,
            count,
            stage,
            conditions,
        } => by_precision!(
            ctx.checkpoint_precision(checkpoint)?,
            cmd_sample(&ctx, checkpoint, *count, *stage, conditions)
        ),
        Command::Infer {
            checkpoint,
            target,
            known_class,
            infer_class,
        } => {
            let class = if *infer_class { None } else { *known_class };
            by_precision!(ctx.checkpoint_precision(checkpoint)?, cmd_infer(&ctx, checkpoint, target, class))
        }
        Command::Inpaint {
            checkpoint,
            image,
            mask,
            truth,
        } => by_precision!(
            ctx.checkpoint_precision(checkpoint)?,
            cmd_inpaint(&ctx, checkpoint, image, mask.as_deref(), truth.as_deref())
        ),
        Command::Eval(args) => cmd_eval(&ctx, args),
        Command::FixedPoint => cmd_fixed_point(&ctx),
    }
}

/// Training and held-out splits, plus the inpainting mask for one image.
fn load_data<S: Real>(cfg: &RunConfig) -> Result<(CondDataset<S>, CondDataset<S>, Option<Tensor<S>>)> {
    let (mut train_ds, mut test_ds) = match cfg.data_config()? {
        DataConfig::Toy { spec, train, test } => {
            let (ds, _) = data::generate_toy::<S>(spec, train + test)?;
            ds.split_tail(*test)
        }
        DataConfig::Images {
            condition_dir,
            target_dir,
            manifest,
            label_map,
        } => {
            let ds = data::load_paired_images::<S>(condition_dir, target_dir, manifest, *label_map)?;
            let empty = ds.split_tail(0).1;
            (ds, empty)
        }
    };
    let mut mask = None;
    if cfg.task == Task::Inpaint {
        let spec = cfg.mask.as_ref().ok_or_else(|| Error::Config("inpaint needs `mask`".into()))?;
        for ds in [&mut train_ds, &mut test_ds] {
            if !ds.is_empty() {
                let (c, _) = data::occlude(&ds.y, spec)?;
                ds.c = c;
                ds.kind = ConditionKind::Image { label_map: false };
            }
        }
        mask = Some(spec.mask(&cfg.solver()?.arch.target_shape)?);
    }
    Ok((train_ds, test_ds, mask))
}

fn cmd_train<S: Real>(ctx: &Ctx, resume: Option<&Path>) -> Result<()> {
    let cfg = ctx.config()?;
    let tcfg = cfg.train_config()?;
    let (train_ds, _, mask) = load_data::<S>(cfg)?;
    let mut state = match resume {
        Some(p) => checkpoint::load_state::<S>(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            rng.set_stream(1);
            let s = cfg.solver()?;
            let i = cfg.initializer()?;
            let solver = EnergyModel::new(s.arch.clone(), s.reference_std, &mut rng)?;
            let init = GeneratorModel::new(i.arch.clone(), i.residual_std, &mut rng)?;
            TrainState::new(solver, init, ctx.seed)
        }
    };
    let out = ctx.out_dir()?;
    let mut last = None;
    train(
        &train_ds,
        &mut state,
        tcfg,
        mask.as_ref(),
        Some(TrainOutput { dir: out }),
        |s| last = Some(s.clone()),
    )?;
    match last {
        Some(s) => println!(
            "trained to epoch {} ({} steps): f_observed {:.4} f_refined {:.4} regression {:.4}",
            state.epoch, state.step, s.f_observed, s.f_refined, s.regression_loss
        ),
        None => println!("no steps run; wrote the state at epoch {}", state.epoch),
    }
    Ok(())
}

fn sampling_langevin(ctx: &Ctx) -> Result<LangevinConfig> {
    ctx.config()
        .map_err(|_| Error::Config("solver-stage output needs --config for the Langevin settings".into()))?
        .sampling_langevin()
}

fn load_condition_images<S: Real>(paths: &[PathBuf], shape: &[usize]) -> Result<Tensor<S>> {
    let imgs: Vec<Tensor<S>> = paths.iter().map(|p| load_image(p)).collect::<Result<_>>()?;
    for (p, t) in paths.iter().zip(&imgs) {
        if t.shape() != shape {
            return Err(Error::Shape(format!(
                "condition {} is {:?}, the model expects {shape:?}",
                p.display(),
                t.shape()
            )));
        }
    }
    Tensor::stack(&imgs.iter().collect::<Vec<_>>())
}

/// Draws `count` outputs per condition column; item `r * cols + k` is
/// sample `r` of column `k`.
fn draw<S: Real>(
    state: &TrainState<S>,
    columns: &Tensor<S>,
    count: usize,
    stage: Stage,
    langevin: Option<&LangevinConfig>,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let cols = columns.batch();
    let idx: Vec<usize> = (0..count * cols).map(|i| i % cols).collect();
    let c = columns.gather(&idx);
    let lat = state.initializer.sample_latent(c.batch(), rng);
    let init = state.initializer.generate(&lat, &c, rng)?;
    let y = match (stage, langevin) {
        (Stage::Solver, Some(l)) => refine(&init, &c, &state.solver, l, None, rng)?,
        _ => init,
    };
    Ok((y, c))
}

fn cmd_sample<S: Real>(ctx: &Ctx, ckpt: &Path, count: usize, stage: Stage, cond_paths: &[PathBuf]) -> Result<()> {
    let state = checkpoint::load_state::<S>(ckpt)?;
    let arch = state.initializer.arch().clone();
    let langevin = match stage {
        Stage::Solver => Some(sampling_langevin(ctx)?),
        Stage::Initializer => None,
    };
    let columns: Tensor<S> = match &arch.condition {
        ConditionSpec::OneHot(k) => {
            if !cond_paths.is_empty() {
                return Err(Error::Shape("one-hot models take no --condition images".into()));
            }
            one_hot(&(0..*k).collect::<Vec<_>>(), *k)
        }
        ConditionSpec::Image(shape) => {
            if cond_paths.is_empty() {
                return Err(Error::Config("image-conditioned models need --condition".into()));
            }
            load_condition_images(cond_paths, shape)?
        }
    };
    if count == 0 {
        println!("count is 0; nothing written");
        return Ok(());
    }
    let mut rng = ctx.rng();
    let (y, _) = draw(&state, &columns, count, stage, langevin.as_ref(), &mut rng)?;
    let out = ctx.out_dir()?;
    let cols = columns.batch();
    if arch.target_shape.len() == 1 {
        let keys: Vec<Vec<String>> = (0..y.batch()).map(|i| vec![(i / cols).to_string(), (i % cols).to_string()]).collect();
        let path = out.join("samples.csv");
        write_rows(&path, &y_header(&["sample", "class"], arch.target_shape[0], 'y'), &keys, &y)?;
        println!("wrote {}", path.display());
    } else {
        let path = out.join("samples.png");
        save_grid(&path, &y, cols)?;
        println!("wrote {} ({count} x {cols} tiles)", path.display());
    }
    Ok(())
}

fn inference_config(ctx: &Ctx) -> InferenceConfig {
    ctx.config
        .as_ref()
        .and_then(|c| c.inference.clone())
        .unwrap_or(InferenceConfig {
            latent: LangevinConfig::new(100, 0.05),
            category: None,
            sweeps: 10,
        })
}

fn load_targets<S: Real>(path: &Path, shape: &[usize]) -> Result<Tensor<S>> {
    if shape.len() == 1 {
        let t: Tensor<S> = matrix_tensor(&read_matrix(path)?, path)?;
        if t.sample_shape() != shape {
            return Err(Error::Shape(format!("targets have {} columns, the model expects {}", t.per_sample(), shape[0])));
        }
        Ok(t)
    } else {
        load_condition_images(&[path.to_path_buf()], shape)
    }
}

fn cmd_infer<S: Real>(ctx: &Ctx, ckpt: &Path, target: &Path, class: Option<usize>) -> Result<()> {
    let state = checkpoint::load_state::<S>(ckpt)?;
    let gen = &state.initializer;
    if !gen.has_vector_latent() {
        return Err(Error::Unsupported("inference needs a vector-latent initializer".into()));
    }
    let k = gen
        .arch()
        .condition
        .classes()
        .ok_or_else(|| Error::Unsupported("inference needs a one-hot conditioned model".into()))?;
    let icfg = inference_config(ctx);
    let y = load_targets::<S>(target, &gen.arch().target_shape)?;
    let n = y.batch();
    let mut rng = ctx.rng();
    let out = ctx.out_dir()?;
    let x = match class {
        Some(c) => {
            if c >= k {
                return Err(Error::Config(format!("--known-class {c} is out of range for {k} classes")));
            }
            let cond = one_hot(&vec![c; n], k);
            let x0 = Tensor::randn([n, gen.latent_dim()], 1.0, &mut rng);
            infer_latent_x(&y, &cond, gen, &icfg.latent, &x0, &mut rng)?
        }
        None => {
            let cat = icfg.category.clone().unwrap_or_else(|| icfg.latent.clone());
            let r = gibbs_infer_xc(&y, gen, &icfg.latent, &cat, icfg.sweeps, &mut rng)?;
            let keys: Vec<Vec<String>> = (0..n)
                .map(|i| {
                    let p = r.c.sample(i);
                    let best = (0..k).max_by(|&a, &b| p[a].as_f64().total_cmp(&p[b].as_f64())).unwrap_or(0);
                    vec![i.to_string(), best.to_string()]
                })
                .collect();
            write_rows(&out.join("class_posterior.csv"), &y_header(&["target", "class"], k, 'p'), &keys, &r.c)?;
            for (i, key) in keys.iter().enumerate() {
                println!("target {i}: class {}", key[1]);
            }
            r.x
        }
    };
    let keys: Vec<Vec<String>> = (0..n).map(|i| vec![i.to_string()]).collect();
    write_rows(&out.join("latent.csv"), &y_header(&["target"], gen.latent_dim(), 'x'), &keys, &x)?;
    // the same latent under every class
    let idx: Vec<usize> = (0..n * k).map(|i| i / k).collect();
    let xs = Latent::vector(x.gather(&idx));
    let cs = one_hot(&(0..n * k).map(|i| i % k).collect::<Vec<_>>(), k);
    let grid = gen.mean(&xs, &cs)?;
    if gen.arch().target_shape.len() == 1 {
        let keys: Vec<Vec<String>> = (0..n * k).map(|i| vec![(i / k).to_string(), (i % k).to_string()]).collect();
        write_rows(&out.join("transfer.csv"), &y_header(&["target", "class"], gen.arch().target_shape[0], 'y'), &keys, &grid)?;
    } else {
        save_grid(&out.join("transfer.png"), &grid, k)?;
    }
    println!("wrote inference results to {}", out.display());
    Ok(())
}

fn hole_bbox<S: Real>(mask: &Tensor<S>) -> Option<(usize, usize, usize, usize)> {
    let s = mask.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let (mut r0, mut r1, mut c0, mut c1) = (h, 0, w, 0);
    for (k, v) in mask.data().iter().enumerate() {
        if *v != S::zero() {
            let (r, c) = ((k / w) % h, k % w);
            r0 = r0.min(r);
            r1 = r1.max(r + 1);
            c0 = c0.min(c);
            c1 = c1.max(c + 1);
        }
    }
    (r0 < r1).then_some((r0, r1, c0, c1))
}

fn crop<S: Real>(t: &Tensor<S>, (r0, r1, c0, c1): (usize, usize, usize, usize)) -> Result<Tensor<S>> {
    let s = t.shape();
    let (c, w) = (s[0], s[2]);
    let mut out = Vec::with_capacity(c * (r1 - r0) * (c1 - c0));
    for ch in 0..c {
        for r in r0..r1 {
            let base = (ch * s[1] + r) * w;
            out.extend_from_slice(&t.data()[base + c0..base + c1]);
        }
    }
    Tensor::from_vec([c, r1 - r0, c1 - c0], out)
}

/// PSNR over the hole, and SSIM over the hole's bounding box when it is at
/// least one window wide.
fn hole_metrics<S: Real>(out: &Tensor<S>, truth: &Tensor<S>, mask: &Tensor<S>) -> Result<serde_json::Value> {
    let p = psnr(out, truth, 2.0, Some(mask))?;
    let params = SsimParams::for_range(2.0);
    let s = match hole_bbox(mask) {
        Some(b) if b.1 - b.0 >= params.window && b.3 - b.2 >= params.window => {
            Some(ssim(&crop(out, b)?, &crop(truth, b)?, &params)?)
        }
        _ => None,
    };
    Ok(serde_json::json!({ "psnr": p, "ssim": s }))
}

fn cmd_inpaint<S: Real>(ctx: &Ctx, ckpt: &Path, image: &Path, mask_path: Option<&Path>, truth: Option<&Path>) -> Result<()> {
    let state = checkpoint::load_state::<S>(ckpt)?;
    let shape = state.initializer.arch().target_shape.clone();
    if state.initializer.arch().condition.shape() != shape {
        return Err(Error::Unsupported("inpainting needs a model conditioned on an image shaped like its output".into()));
    }
    let observed: Tensor<S> = load_image(image)?;
    if observed.shape() != shape {
        return Err(Error::Shape(format!("image is {:?}, the model expects {shape:?}", observed.shape())));
    }
    let mask: Tensor<S> = match mask_path {
        Some(p) => {
            let m: Tensor<S> = load_image(p)?;
            let (h, w) = (shape[1], shape[2]);
            if m.shape()[1..] != shape[1..] {
                return Err(Error::Shape(format!("mask is {:?}, the image is {shape:?}", m.shape())));
            }
            // a pixel is in the hole when any mask channel is above mid-grey
            let mut out = Tensor::zeros(shape.clone());
            for px in 0..h * w {
                let hole = (0..m.shape()[0]).any(|ch| m.data()[ch * h * w + px] > S::zero());
                if hole {
                    for ch in 0..shape[0] {
                        out.data_mut()[ch * h * w + px] = S::one();
                    }
                }
            }
            out
        }
        None => {
            let spec: MaskSpec = ctx
                .config()?
                .mask
                .ok_or_else(|| Error::Config("give --mask or a config `mask`".into()))?;
            spec.mask(&shape)?
        }
    };
    let langevin = sampling_langevin(ctx)?;
    let mut rng = ctx.rng();
    let c = observed.clone().reshape(prepend(1, &shape))?;
    let m = mask.clone().reshape(prepend(1, &shape))?;
    let lat = state.initializer.sample_latent(1, &mut rng);
    let g = state.initializer.generate(&lat, &c, &mut rng)?;
    let init = compose_masked(&g, &c, &m)?;
    let refined = refine(&init, &c, &state.solver, &langevin, Some(&mask), &mut rng)?;
    let out = ctx.out_dir()?;
    let init = init.reshape(shape.clone())?;
    let refined = refined.reshape(shape.clone())?;
    data::save_image(&out.join("inpaint_initializer.png"), &init)?;
    data::save_image(&out.join("inpaint_solver.png"), &refined)?;
    if let Some(tp) = truth {
        let t: Tensor<S> = load_image(tp)?;
        if t.shape() != shape {
            return Err(Error::Shape(format!("truth is {:?}, expected {shape:?}", t.shape())));
        }
        if hole_bbox(&mask).is_none() {
            return Err(Error::Config("the mask is empty; there is no hole to score".into()));
        }
        let report = serde_json::json!({
            "initializer": hole_metrics(&init, &t, &mask)?,
            "solver": hole_metrics(&refined, &t, &mask)?,
        });
        let p = out.join("inpaint_metrics.json");
        std::fs::write(&p, format!("{report:#}\n")).map_err(|e| Error::io(&p, e))?;
        println!("{report}");
    }
    println!("wrote inpainting results to {}", out.display());
    Ok(())
}

fn prepend(n: usize, shape: &[usize]) -> Vec<usize> {
    std::iter::once(n).chain(shape.iter().copied()).collect()
}

fn write_report(ctx: &Ctx, report: serde_json::Value) -> Result<()> {
    let out = ctx.out_dir()?;
    let p = out.join("eval.json");
    std::fs::write(&p, format!("{report:#}\n")).map_err(|e| Error::io(&p, e))?;
    println!("{report}");
    Ok(())
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    match args.metric {
        Metric::Parzen => {
            let p = match &args.checkpoint {
                Some(c) if args.reference.is_none() => ctx.checkpoint_precision(c)?,
                _ => Precision::F64,
            };
            match p {
                Precision::F32 => eval_parzen::<f32>(ctx, args),
                Precision::F64 => eval_parzen::<f64>(ctx, args),
            }
        }
        Metric::Psnr | Metric::Ssim => {
            if args.checkpoint.is_some() || args.reference.is_some() {
                return Err(Error::Config("psnr and ssim compare two images given by --a and --b".into()));
            }
            let (a, b) = match (&args.a, &args.b) {
                (Some(a), Some(b)) => (load_image::<f64>(a)?, load_image::<f64>(b)?),
                _ => return Err(Error::Config("psnr and ssim need --a and --b".into())),
            };
            let value = if args.metric == Metric::Psnr {
                let mask = args.mask.as_deref().map(load_image::<f64>).transpose()?;
                let mask = mask.map(|m| m.map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
                psnr(&a, &b, args.peak, mask.as_ref())?
            } else {
                ssim(&a, &b, &SsimParams::for_range(2.0))?
            };
            let name = if args.metric == Metric::Psnr { "psnr" } else { "ssim" };
            write_report(ctx, serde_json::json!({ "metric": name, "mean": value, "std_err": 0.0, "n": 1 }))
        }
    }
}

fn eval_parzen<S: Real>(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let csv = |p: &Path| -> Result<Tensor<S>> { matrix_tensor(&read_matrix(p)?, p) };
    let mut rng = ctx.rng();
    let reference: Tensor<S> = match (&args.reference, &args.checkpoint) {
        (Some(r), _) => csv(r)?,
        (None, Some(c)) => {
            let state = checkpoint::load_state::<S>(c)?;
            let arch = state.initializer.arch();
            let k = match (&arch.condition, arch.target_shape.len()) {
                (ConditionSpec::OneHot(k), 1) => *k,
                _ => {
                    return Err(Error::Unsupported(
                        "parzen evaluation needs a vector-target, one-hot conditioned model".into(),
                    ))
                }
            };
            if args.samples == 0 {
                return Err(Error::Config("--samples must be at least 1".into()));
            }
            let langevin = match args.stage {
                Stage::Solver => Some(sampling_langevin(ctx)?),
                Stage::Initializer => None,
            };
            // classes in equal proportion
            let columns = one_hot(&(0..k).collect::<Vec<_>>(), k);
            let per = args.samples.div_ceil(k);
            let (y, _) = draw(&state, &columns, per, args.stage, langevin.as_ref(), &mut rng)?;
            y.gather(&(0..args.samples).collect::<Vec<_>>())
        }
        (None, None) => return Err(Error::Config("parzen needs --checkpoint or --reference".into())),
    };
    let toy = ctx.config.as_ref().and_then(|c| match c.data.as_ref()? {
        DataConfig::Toy { spec, train, test } => Some((spec.clone(), *train, *test)),
        DataConfig::Images { .. } => None,
    });
    let test: Tensor<S> = match (&args.test, &toy) {
        (Some(t), _) => csv(t)?,
        (None, Some((spec, train, test))) if *test > 0 => {
            let (ds, _) = data::generate_toy::<S>(spec, train + test)?;
            ds.split_tail(*test).1.y
        }
        _ => return Err(Error::Config("parzen needs --test or a config with held-out toy data".into())),
    };
    let bandwidth = match (args.bandwidth, &args.validation, &toy) {
        (Some(h), _, _) => h,
        (None, Some(v), _) => select_bandwidth(&reference, &csv(v)?, &default_bandwidth_grid())?,
        (None, None, Some((spec, _, _))) => {
            // a fresh validation draw from the true distribution
            let (ds, _) = data::generate_toy::<S>(&coopnet::data::ToySpec { seed: spec.seed.wrapping_add(1), ..spec.clone() }, test.batch())?;
            select_bandwidth(&reference, &ds.y, &default_bandwidth_grid())?
        }
        (None, None, None) => return Err(Error::Config("parzen needs --bandwidth, --validation, or toy data in the config".into())),
    };
    let report = parzen_loglik(&ParzenEstimator::new(&reference, bandwidth)?, &test)?;
    write_report(
        ctx,
        serde_json::json!({
            "metric": "parzen",
            "mean": report.mean,
            "std_err": report.std_err,
            "n": report.n,
            "bandwidth": report.bandwidth,
            "reference_size": reference.batch(),
        }),
    )
}

fn cmd_fixed_point(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.config()?;
    let fp = cfg.fixed_point_config()?;
    let trace = fixed_point_sim(&fp.system.build()?, fp.iterations)?;
    let out = ctx.out_dir()?;
    let p = out.join("fixed_point.csv");
    write_trace_csv(&p, &trace)?;
    let (first, last) = (trace[0], trace[trace.len() - 1]);
    println!(
        "KL(data||p) {:.4e} -> {:.4e}; TV(q, p) {:.4e}; wrote {}",
        first.kl_data_p,
        last.kl_data_p,
        last.tv_q_p,
        p.display()
    );
    Ok(())
}
