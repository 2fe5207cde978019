use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coopnet::checkpoint::save_state;
use coopnet::data::{denormalize, save_image};
use coopnet::models::*;
use coopnet::tensor::Tensor;
use coopnet::train::TrainState;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coopnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopnet")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy_config(epochs: usize, steps: usize) -> serde_json::Value {
    let dense = |u: usize| serde_json::json!({"dense": {"units": u}});
    serde_json::json!({
        "task": "toy",
        "seed": 3,
        "precision": 64,
        "solver": {
            "arch": {"variant": "cat2img_early", "target_shape": [2], "condition": {"one_hot": 2},
                     "layers": [dense(16)], "activation": {"leaky_relu": 0.2}},
            "reference_std": 1.0
        },
        "initializer": {
            "arch": {"variant": "cat2img_early", "target_shape": [2], "condition": {"one_hot": 2}, "latent_dim": 2,
                     "layers": [dense(16), dense(2)], "activation": {"leaky_relu": 0.2}, "output": "identity"},
            "residual_std": 0.05
        },
        "train": {"epochs": epochs, "batch_size": 50, "solver_adam": {"lr": 0.002}, "initializer_adam": {"lr": 0.002},
                  "langevin": {"steps": steps, "step_size": 0.03}},
        "data": {"toy": {"spec": {"family": {"gaussian_mixture": {"means": [[-1.0, 0.0], [1.0, 0.0]], "std": 0.1}}, "seed": 2},
                         "train": 200, "test": 50}}
    })
}

fn write_config(dir: &Path, name: &str, v: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

fn train_toy(dir: &Path, epochs: usize, steps: usize) -> (PathBuf, PathBuf) {
    let cfg = write_config(dir, "toy.json", &toy_config(epochs, steps));
    let out = dir.join("run");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "train"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (cfg, out)
}

#[test]
fn zero_epoch_training_writes_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = train_toy(dir.path(), 0, 5);
    assert!(out.join("latest.ckpt").exists());
    assert_eq!(std::fs::read_to_string(out.join("stats.jsonl")).unwrap(), "");
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, oa) = train_toy(a.path(), 2, 5);
    let (_, ob) = train_toy(b.path(), 2, 5);
    for f in ["stats.jsonl", "latest.ckpt", "epoch-00002.ckpt"] {
        assert_eq!(std::fs::read(oa.join(f)).unwrap(), std::fs::read(ob.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(oa.join("stats.jsonl")).unwrap().lines().count(), 8);

    let c = tempfile::tempdir().unwrap();
    let (_, oc) = train_toy(c.path(), 1, 5);
    let cfg = write_config(c.path(), "toy2.json", &toy_config(2, 5));
    let ck = oc.join("latest.ckpt");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&oc), "train", "--resume", s(&ck)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["stats.jsonl", "latest.ckpt"] {
        assert_eq!(std::fs::read(oa.join(f)).unwrap(), std::fs::read(oc.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_configs_exit_with_code_two_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut v = toy_config(1, 1);
    v["train"]["unknown"] = 1.into();
    let cfg = write_config(dir.path(), "bad.json", &v);
    assert_eq!(code(&coopnet(&["--config", s(&cfg), "--out", s(&out), "train"])), 2);
    let mut v = toy_config(1, 1);
    v["train"]["langevin"]["step_size"] = 0.0.into();
    let cfg = write_config(dir.path(), "bad2.json", &v);
    assert_eq!(code(&coopnet(&["--config", s(&cfg), "--out", s(&out), "train"])), 2);
    assert!(!out.exists());
    assert_eq!(code(&coopnet(&["--out", s(&out), "train"])), 2);
    assert_eq!(code(&coopnet(&["--threads", "0", "--config", s(&cfg), "train"])), 2);
    assert_eq!(code(&coopnet(&["train", "--bogus"])), 2);
}

#[test]
fn missing_files_exit_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent.json");
    assert_eq!(code(&coopnet(&["--config", s(&absent), "train"])), 4);
    let ck = dir.path().join("absent.ckpt");
    assert_eq!(code(&coopnet(&["sample", "--checkpoint", s(&ck), "--stage", "initializer"])), 4);
}

#[test]
fn divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = toy_config(1, 20);
    v["train"]["langevin"]["step_size"] = 1e3.into();
    v["train"]["langevin"]["divergence_bound"] = 1e3.into();
    let cfg = write_config(dir.path(), "wild.json", &v);
    let o = coopnet(&["--config", s(&cfg), "--out", s(&dir.path().join("o")), "train"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sampling_stages_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = train_toy(dir.path(), 1, 5);
    let ck = out.join("latest.ckpt");
    let empty = dir.path().join("empty");
    let o = coopnet(&["--out", s(&empty), "sample", "--checkpoint", s(&ck), "--count", "0", "--stage", "initializer"]);
    assert_eq!(code(&o), 0);
    assert!(!empty.join("samples.csv").exists());

    // a zero-step chain leaves the initializer draw untouched
    let cfg0 = write_config(dir.path(), "zero.json", &toy_config(1, 0));
    let (i_out, s_out) = (dir.path().join("i"), dir.path().join("s"));
    let run = |stage: &str, o: &Path| {
        let r = coopnet(&["--config", s(&cfg0), "--seed", "9", "--out", s(o), "sample", "--checkpoint", s(&ck), "--count", "4", "--stage", stage]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read_to_string(o.join("samples.csv")).unwrap()
    };
    let a = run("initializer", &i_out);
    let b = run("solver", &s_out);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "sample,class,y0,y1");
    assert_eq!(lines.len(), 1 + 4 * 2);

    // the solver stage needs Langevin settings
    let r = coopnet(&["--out", s(&s_out), "sample", "--checkpoint", s(&ck), "--stage", "solver"]);
    assert_eq!(code(&r), 2);
}

fn image_category_checkpoint(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let conv = LayerSpec::Conv { kernel: 4, stride: 2, channels: 4, padding: None };
    let mut s = ArchDescriptor::new("cat2img_late", vec![1, 8, 8], ConditionSpec::OneHot(10), vec![conv.clone(), conv]);
    s.concat_after = 1;
    let mut g = ArchDescriptor::new(
        "cat2img_early",
        vec![1, 8, 8],
        ConditionSpec::OneHot(10),
        vec![
            LayerSpec::Deconv { kernel: 4, stride: 1, channels: 4, padding: Some(0), output_padding: None },
            LayerSpec::Deconv { kernel: 4, stride: 2, channels: 1, padding: None, output_padding: None },
        ],
    );
    g.latent_dim = 4;
    let solver = EnergyModel::<f32>::new(s, Some(1.0), &mut rng).unwrap();
    let init = GeneratorModel::<f32>::new(g, 0.1, &mut rng).unwrap();
    let p = dir.join("cat.ckpt");
    save_state(&p, &TrainState::new(solver, init, 0)).unwrap();
    p
}

#[test]
fn image_grid_has_count_rows_and_class_columns() {
    let dir = tempfile::tempdir().unwrap();
    let ck = image_category_checkpoint(dir.path());
    let out = dir.path().join("o");
    let o = coopnet(&["--out", s(&out), "sample", "--checkpoint", s(&ck), "--count", "3", "--stage", "initializer"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let img: Tensor<f32> = coopnet::data::load_image(&out.join("samples.png")).unwrap();
    assert_eq!(img.shape(), &[1, 3 * 8, 10 * 8]);
    // parzen needs vector targets
    let e = coopnet(&["--out", s(&out), "eval", "--metric", "parzen", "--checkpoint", s(&ck), "--bandwidth", "0.1"]);
    assert_eq!(code(&e), 2);
    // and the checkpoint is 32-bit
    let p = coopnet(&["--precision", "64", "--out", s(&out), "sample", "--checkpoint", s(&ck), "--stage", "initializer"]);
    assert_eq!(code(&p), 2);
}

/// Linear generator `g = 0.5 x + means[c]` in 2-d with a 1-d latent.
fn linear_checkpoint(dir: &Path, sigma: f64, means: [[f64; 2]; 2]) -> (PathBuf, GeneratorModel<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = ArchDescriptor::new("cat2img_early", vec![2], ConditionSpec::OneHot(2), vec![LayerSpec::Dense { units: 4 }]);
    let mut g = ArchDescriptor::new("cat2img_early", vec![2], ConditionSpec::OneHot(2), vec![LayerSpec::Dense { units: 2 }]);
    g.latent_dim = 1;
    g.output = OutputActivation::Identity;
    let solver = EnergyModel::<f64>::new(s, Some(1.0), &mut rng).unwrap();
    let mut init = GeneratorModel::<f64>::new(g, sigma, &mut rng).unwrap();
    let w = [0.5, 0.5, means[0][0], means[0][1], means[1][0], means[1][1]];
    init.params.get_mut("l0.w").unwrap().data_mut().copy_from_slice(&w);
    init.params.get_mut("l0.b").unwrap().data_mut().fill(0.0);
    let p = dir.join("lin.ckpt");
    save_state(&p, &TrainState::new(solver, init.clone(), 0)).unwrap();
    (p, init)
}

fn read_csv(p: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

#[test]
fn known_class_inference_recovers_a_zero_latent() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, gen) = linear_checkpoint(dir.path(), 0.01, [[-2.0, 0.0], [2.0, 0.0]]);
    let c = coopnet::data::one_hot::<f64>(&[1], 2);
    let y = gen.mean(&Latent::vector(Tensor::zeros([1, 1])), &c).unwrap();
    let target = dir.path().join("t.csv");
    std::fs::write(&target, format!("y0,y1\n{},{}\n", y.data()[0], y.data()[1])).unwrap();
    let cfg = serde_json::json!({
        "task": "fixed_point",
        "fixed_point": {"system": {"random": {"states": 2, "conditions": 1, "seed": 0}}, "iterations": 1},
        "inference": {"latent": {"steps": 300, "step_size": 0.005, "mh_correction": true}}
    });
    let cfg = write_config(dir.path(), "inf.json", &cfg);
    let out = dir.path().join("o");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "infer", "--checkpoint", s(&ck), "--target", s(&target), "--known-class", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let x = read_csv(&out.join("latent.csv"));
    assert!(x[0][1].abs() < 0.1, "{x:?}");
    let grid = read_csv(&out.join("transfer.csv"));
    assert_eq!(grid.len(), 2);
    assert_eq!((grid[0][1], grid[1][1]), (0.0, 1.0));
    assert!((grid[0][2] + 2.0).abs() < 0.1 && (grid[1][2] - 2.0).abs() < 0.1);
    assert!(!out.join("class_posterior.csv").exists());
}

#[test]
fn class_inference_on_a_separable_toy() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, gen) = linear_checkpoint(dir.path(), 0.3, [[-2.0, 0.0], [2.0, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let c = coopnet::data::one_hot::<f64>(&labels, 2);
    let lat = gen.sample_latent(20, &mut rng);
    let y = gen.generate(&lat, &c, &mut rng).unwrap();
    let target = dir.path().join("t.csv");
    let rows: String = (0..20).map(|i| format!("{},{}\n", y.sample(i)[0], y.sample(i)[1])).collect();
    std::fs::write(&target, rows).unwrap();
    let cfg = serde_json::json!({
        "task": "fixed_point",
        "fixed_point": {"system": {"random": {"states": 2, "conditions": 1, "seed": 0}}, "iterations": 1},
        "inference": {"latent": {"steps": 30, "step_size": 0.1}, "category": {"steps": 30, "step_size": 0.3}, "sweeps": 5}
    });
    let cfg = write_config(dir.path(), "inf.json", &cfg);
    let out = dir.path().join("o");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "infer", "--checkpoint", s(&ck), "--target", s(&target), "--infer-class"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let post = read_csv(&out.join("class_posterior.csv"));
    let hits = post.iter().zip(&labels).filter(|(r, &l)| r[1] as usize == l).count();
    assert!(hits >= 18, "{hits}/20");
    for r in &post {
        assert!((r[2] + r[3] - 1.0).abs() < 1e-9);
    }
    assert_eq!(read_csv(&out.join("transfer.csv")).len(), 40);
    // exactly one of the two modes is required
    assert_eq!(code(&coopnet(&["infer", "--checkpoint", s(&ck), "--target", s(&target)])), 2);
}

fn unet_checkpoint(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let conv = |c| LayerSpec::Conv { kernel: 4, stride: 2, channels: c, padding: None };
    let s = ArchDescriptor::new("solver_channel_concat", vec![1, 16, 16], ConditionSpec::Image(vec![1, 16, 16]), vec![conv(4), conv(8)]);
    let mut g = ArchDescriptor::new("img2img_unet", vec![1, 16, 16], ConditionSpec::Image(vec![1, 16, 16]), vec![conv(4), conv(8)]);
    g.dropout = 0.5;
    let solver = EnergyModel::<f32>::new(s, Some(0.5), &mut rng).unwrap();
    let init = GeneratorModel::<f32>::new(g, 0.3, &mut rng).unwrap();
    let p = dir.join("unet.ckpt");
    save_state(&p, &TrainState::new(solver, init, 0)).unwrap();
    p
}

fn png_bytes(p: &Path) -> Vec<u8> {
    let t: Tensor<f64> = coopnet::data::load_image(p).unwrap();
    t.data().iter().map(|&v| denormalize(v)).collect()
}

fn sampling_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "task": "fixed_point",
        "fixed_point": {"system": {"random": {"states": 2, "conditions": 1, "seed": 0}}, "iterations": 1},
        "sampling": {"steps": 10, "step_size": 0.05}
    });
    write_config(dir, "sampling.json", &cfg)
}

#[test]
fn inpainting_touches_only_the_hole() {
    let dir = tempfile::tempdir().unwrap();
    let ck = unet_checkpoint(dir.path());
    let cfg = sampling_config(dir.path());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = Tensor::<f64>::randn([1, 16, 16], 0.5, &mut rng).map(|v| v.clamp(-1.0, 1.0));
    let hole = coopnet::data::MaskSpec::Central { size: 8 };
    let m: Tensor<f64> = hole.mask(&[1, 16, 16]).unwrap();
    let observed = truth.zip_map(&m, |t, k| if k > 0.0 { 0.0 } else { t }).unwrap();
    let paths: Vec<PathBuf> = ["truth.png", "obs.png", "mask.png", "blank.png"].iter().map(|n| dir.path().join(n)).collect();
    save_image(&paths[0], &truth).unwrap();
    save_image(&paths[1], &observed).unwrap();
    save_image(&paths[2], &m.map(|v| 2.0 * v - 1.0)).unwrap();
    save_image(&paths[3], &Tensor::<f64>::full([1, 16, 16], -1.0)).unwrap();

    // empty mask: nothing changes
    let out = dir.path().join("e");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "inpaint", "--checkpoint", s(&ck), "--image", s(&paths[1]), "--mask", s(&paths[3])]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(png_bytes(&out.join("inpaint_solver.png")), png_bytes(&paths[1]));

    let run = |truth_path: &Path, out: &Path| -> serde_json::Value {
        let o = coopnet(&[
            "--config", s(&cfg), "--out", s(out), "inpaint", "--checkpoint", s(&ck),
            "--image", s(&paths[1]), "--mask", s(&paths[2]), "--truth", s(truth_path),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_str(&std::fs::read_to_string(out.join("inpaint_metrics.json")).unwrap()).unwrap()
    };
    let out = dir.path().join("h");
    let metrics = run(&paths[0], &out);
    let obs = png_bytes(&paths[1]);
    for name in ["inpaint_initializer.png", "inpaint_solver.png"] {
        let got = png_bytes(&out.join(name));
        for k in 0..256 {
            if m.data()[k] == 0.0 {
                assert_eq!(got[k], obs[k], "{name} pixel {k}");
            }
        }
    }
    assert!(metrics["solver"]["psnr"].as_f64().unwrap().is_finite());
    assert!(metrics["solver"]["ssim"].as_f64().is_some());

    // metrics ignore ground-truth pixels outside the hole
    let altered = truth.zip_map(&m, |t, k| if k > 0.0 { t } else { -t }).unwrap();
    let alt_path = dir.path().join("alt.png");
    save_image(&alt_path, &altered).unwrap();
    assert_eq!(run(&alt_path, &dir.path().join("h2")), metrics);

    // latent inference is not defined for dropout latents
    let target = dir.path().join("obs.png");
    let r = coopnet(&["--out", s(&out), "infer", "--checkpoint", s(&ck), "--target", s(&target), "--known-class", "0"]);
    assert_eq!(code(&r), 2);
    // mask of the wrong size
    let small = dir.path().join("small.png");
    save_image(&small, &Tensor::<f64>::full([1, 8, 8], 1.0)).unwrap();
    let r = coopnet(&["--config", s(&cfg), "--out", s(&out), "inpaint", "--checkpoint", s(&ck), "--image", s(&paths[1]), "--mask", s(&small)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn parzen_of_samples_against_themselves() {
    let dir = tempfile::tempdir().unwrap();
    let pts: [[f64; 2]; 3] = [[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]];
    let csv = dir.path().join("pts.csv");
    let body: String = pts.iter().map(|p| format!("{},{}\n", p[0], p[1])).collect();
    std::fs::write(&csv, format!("y0,y1\n{body}")).unwrap();
    let out = dir.path().join("o");
    let o = coopnet(&["--out", s(&out), "eval", "--metric", "parzen", "--reference", s(&csv), "--test", s(&csv), "--bandwidth", "0.2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    let h: f64 = 0.2;
    let oracle: f64 = pts
        .iter()
        .map(|t| {
            let d: f64 = pts
                .iter()
                .map(|r| {
                    let d2 = (t[0] - r[0]).powi(2) + (t[1] - r[1]).powi(2);
                    (-d2 / (2.0 * h * h)).exp() / (2.0 * std::f64::consts::PI * h * h)
                })
                .sum();
            (d / 3.0).ln()
        })
        .sum::<f64>()
        / 3.0;
    assert!((rep["mean"].as_f64().unwrap() - oracle).abs() < 1e-9);
    assert!(rep["std_err"].as_f64().is_some());
    assert_eq!(rep["n"], 3);
}

#[test]
fn parzen_from_a_trained_toy_model() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = train_toy(dir.path(), 1, 5);
    let ck = out.join("latest.ckpt");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "eval", "--metric", "parzen", "--checkpoint", s(&ck), "--samples", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(rep["reference_size"], 500);
    assert_eq!(rep["n"], 50);
    assert!(rep["mean"].as_f64().unwrap().is_finite());
}

#[test]
fn psnr_and_ssim_of_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let img = Tensor::<f64>::randn([1, 12, 12], 0.5, &mut ChaCha8Rng::seed_from_u64(4)).map(|v| v.clamp(-1.0, 1.0));
    let p = dir.path().join("a.png");
    save_image(&p, &img).unwrap();
    let out = dir.path().join("o");
    for (metric, want) in [("psnr", 99.0), ("ssim", 1.0)] {
        let o = coopnet(&["--out", s(&out), "eval", "--metric", metric, "--a", s(&p), "--b", s(&p)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
        assert_eq!(rep["mean"].as_f64().unwrap(), want);
        assert_eq!(rep["std_err"].as_f64().unwrap(), 0.0);
    }
    assert_eq!(code(&coopnet(&["--out", s(&out), "eval", "--metric", "psnr", "--a", s(&p)])), 2);
}

#[test]
fn fixed_point_writes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/fixed_point.json");
    let out = dir.path().join("o");
    let o = coopnet(&["--config", s(&cfg), "--out", s(&out), "fixed-point"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("fixed_point.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,kl_data_p,kl_mq_p,kl_mq_q,tv_q_stationary");
    assert_eq!(lines.len(), 502);
    let first: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    let last: Vec<f64> = lines[501].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(&first[2..], &[0.0, 0.0, 0.0]);
    assert!(last[1] < 0.2 * first[1]);

    let bad = serde_json::json!({"task": "fixed_point", "fixed_point": {"system": {"random": {"states": 0, "conditions": 1, "seed": 0}}, "iterations": 3}});
    let bad = write_config(dir.path(), "bad.json", &bad);
    assert_eq!(code(&coopnet(&["--config", s(&bad), "--out", s(&out), "fixed-point"])), 2);
}
