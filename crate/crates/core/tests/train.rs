use coopnet::data::{generate_toy, one_hot, CondDataset, ConditionKind, ToyFamily, ToySpec};
use coopnet::langevin::LangevinConfig;
use coopnet::models::*;
use coopnet::tensor::Tensor;
use coopnet::train::*;
use coopnet::{checkpoint, Error};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `f = w · [Y; C] + b`.
fn linear_solver(dim: usize, classes: usize) -> EnergyModel<f64> {
    let arch = ArchDescriptor::new("cat2img_early", vec![dim], ConditionSpec::OneHot(classes), vec![]);
    EnergyModel::new(arch, Some(1.0), &mut rng(0)).unwrap()
}

fn mlp_solver(seed: u64) -> EnergyModel<f64> {
    let mut arch = ArchDescriptor::new("cat2img_early", vec![2], ConditionSpec::OneHot(2), vec![LayerSpec::Dense { units: 6 }]);
    arch.activation = Activation::Tanh;
    arch.init_std = 0.5;
    EnergyModel::new(arch, Some(1.0), &mut rng(seed)).unwrap()
}

/// `g = W [X; C] + b` with an identity head.
fn linear_generator(latent: usize, dim: usize, classes: usize, sigma: f64, seed: u64) -> GeneratorModel<f64> {
    let mut arch = ArchDescriptor::new("cat2img_early", vec![dim], ConditionSpec::OneHot(classes), vec![LayerSpec::Dense { units: dim }]);
    arch.latent_dim = latent;
    arch.output = OutputActivation::Identity;
    arch.init_std = 0.5;
    GeneratorModel::new(arch, sigma, &mut rng(seed)).unwrap()
}

fn mlp_generator(sigma: f64, seed: u64) -> GeneratorModel<f64> {
    let mut arch = ArchDescriptor::new(
        "cat2img_early",
        vec![2],
        ConditionSpec::OneHot(2),
        vec![LayerSpec::Dense { units: 6 }, LayerSpec::Dense { units: 2 }],
    );
    arch.latent_dim = 2;
    arch.activation = Activation::Tanh;
    arch.init_std = 0.5;
    GeneratorModel::new(arch, sigma, &mut rng(seed)).unwrap()
}

fn labels_c(n: usize) -> Tensor<f64> {
    one_hot(&(0..n).map(|i| i % 2).collect::<Vec<_>>(), 2)
}

fn max_abs(p: &ParamSet<f64>) -> f64 {
    p.iter().map(|(_, t)| t.max_abs()).fold(0.0, f64::max)
}

#[test]
fn solver_gradient_vanishes_when_refined_equals_observed() {
    let m = mlp_solver(1);
    let y = Tensor::randn([5, 2], 1.0, &mut rng(2));
    let (g, fo, fr) = solver_grad(&y, &y, &labels_c(5), &m).unwrap();
    assert_eq!(max_abs(&g), 0.0);
    assert_eq!(fo, fr);
}

#[test]
fn solver_gradient_of_linear_energy_is_feature_mean_difference() {
    let m = linear_solver(2, 2);
    let mut r = rng(3);
    let obs = Tensor::randn([6, 2], 1.0, &mut r);
    let refd = Tensor::randn([6, 2], 1.0, &mut r);
    let c = labels_c(6);
    let (g, _, _) = solver_grad(&obs, &refd, &c, &m).unwrap();
    let w = g.get("head.w").unwrap();
    for j in 0..2 {
        let expect = (0..6).map(|i| obs.sample(i)[j] - refd.sample(i)[j]).sum::<f64>() / 6.0;
        assert!((w.data()[j] - expect).abs() < 1e-15);
    }
    // condition features and bias appear in both terms and cancel
    assert!(w.data()[2].abs() < 1e-15 && w.data()[3].abs() < 1e-15);
    assert!(g.get("head.b").unwrap().data()[0].abs() < 1e-15);
}

#[test]
fn solver_gradient_matches_finite_differences() {
    let m = mlp_solver(4);
    let mut r = rng(5);
    let obs = Tensor::randn([4, 2], 1.0, &mut r);
    let refd = Tensor::randn([4, 2], 1.0, &mut r);
    let c = labels_c(4);
    let (g, _, _) = solver_grad(&obs, &refd, &c, &m).unwrap();
    let value = |m: &EnergyModel<f64>| {
        let a: f64 = m.energy(&obs, &c, false).unwrap().iter().sum();
        let b: f64 = m.energy(&refd, &c, false).unwrap().iter().sum();
        (a - b) / 4.0
    };
    let h = 1e-5;
    for name in m.params.names().map(str::to_string).collect::<Vec<_>>() {
        for k in 0..m.params.get(&name).unwrap().len() {
            let mut up = m.clone();
            up.params.get_mut(&name).unwrap().data_mut()[k] += h;
            let mut dn = m.clone();
            dn.params.get_mut(&name).unwrap().data_mut()[k] -= h;
            let fd = (value(&up) - value(&dn)) / (2.0 * h);
            let a = g.get(&name).unwrap().data()[k];
            let err = (a - fd).abs();
            assert!(err <= 1e-8 || err / a.abs().max(fd.abs()) < 1e-4, "{name}[{k}]: {a} vs {fd}");
        }
    }
}

#[test]
fn solver_gradient_rejects_mismatched_batches() {
    let m = mlp_solver(1);
    let r = solver_grad(&Tensor::zeros([3, 2]), &Tensor::zeros([2, 2]), &labels_c(3), &m);
    assert!(matches!(r, Err(Error::Shape(_))));
}

#[test]
fn initializer_gradient_vanishes_on_its_own_output() {
    let g = mlp_generator(0.3, 6);
    let lat = g.sample_latent(4, &mut rng(7));
    let c = labels_c(4);
    let refined = g.mean(&lat, &c).unwrap();
    let ig = initializer_grad(&lat, &c, &refined, &g, None, 0.0).unwrap();
    assert_eq!(max_abs(&ig.grad), 0.0);
    assert_eq!(ig.regression_loss, 0.0);
}

#[test]
fn initializer_gradient_of_linear_map_is_least_squares_gradient() {
    let g = linear_generator(1, 1, 2, 0.3, 8);
    let mut r = rng(9);
    let x = Tensor::randn([5, 1], 1.0, &mut r);
    let target = Tensor::randn([5, 1], 1.0, &mut r);
    let c = labels_c(5);
    let lat = Latent::vector(x.clone());
    let ig = initializer_grad(&lat, &c, &target, &g, None, 0.0).unwrap();
    let w = g.params.get("l0.w").unwrap().data().to_vec();
    let b = g.params.get("l0.b").unwrap().data()[0];
    let (mut gw, mut gb) = ([0.0; 3], 0.0);
    for i in 0..5 {
        let z = [x.data()[i], c.sample(i)[0], c.sample(i)[1]];
        let pred: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
        let r = pred - target.data()[i];
        for k in 0..3 {
            gw[k] += 2.0 * r * z[k] / 5.0;
        }
        gb += 2.0 * r / 5.0;
    }
    let got = ig.grad.get("l0.w").unwrap();
    for k in 0..3 {
        assert!((got.data()[k] - gw[k]).abs() < 1e-14);
    }
    assert!((ig.grad.get("l0.b").unwrap().data()[0] - gb).abs() < 1e-14);
}

#[test]
fn l1_term_adds_its_subgradient() {
    let g = linear_generator(1, 1, 2, 0.3, 10);
    let lat = Latent::vector(Tensor::from_f64([2, 1], &[0.5, -0.5]).unwrap());
    let c = labels_c(2);
    let mean = g.mean(&lat, &c).unwrap();
    let truth = mean.map(|v| v - 1.0);
    let base = initializer_grad(&lat, &c, &mean, &g, None, 0.0).unwrap();
    let with = initializer_grad(&lat, &c, &mean, &g, Some(&truth), 3.0).unwrap();
    assert_eq!(max_abs(&base.grad), 0.0);
    assert_eq!(with.l1_loss, Some(1.0));
    // d/db of 3 * mean |g - y| with g - y = 1 everywhere
    assert!((with.grad.get("l0.b").unwrap().data()[0] - 3.0).abs() < 1e-14);
}

#[test]
fn adam_with_zero_gradient_changes_nothing() {
    let mut p = mlp_solver(0).params;
    let before = p.clone();
    let mut st = AdamState::new(&p);
    adam_step(&mut p, &before.zeros_like(), &mut st, &AdamConfig::new(0.1)).unwrap();
    assert_eq!(p, before);
    assert_eq!(st.t, 1);
}

#[test]
fn adam_single_step_matches_hand_arithmetic() {
    let mut p = ParamSet::<f64>::new();
    p.insert("w", Tensor::from_f64([1], &[1.0]).unwrap());
    let mut g = ParamSet::<f64>::new();
    g.insert("w", Tensor::from_f64([1], &[0.5]).unwrap());
    let mut st = AdamState::new(&p);
    let cfg = AdamConfig::new(0.1);
    adam_step(&mut p, &g, &mut st, &cfg).unwrap();
    // m = 0.25, v = 0.00025; bias-corrected 0.5 and 0.25
    let step = 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
    assert!((p.get("w").unwrap().data()[0] - (1.0 - step)).abs() < 1e-15);
    assert!((st.m.get("w").unwrap().data()[0] - 0.25).abs() < 1e-15);
    assert!((st.v.get("w").unwrap().data()[0] - 0.00025).abs() < 1e-15);
}

#[test]
fn adam_rejects_missing_gradients() {
    let mut p = mlp_solver(0).params;
    let mut st = AdamState::new(&p);
    let empty = ParamSet::new();
    assert!(matches!(adam_step(&mut p, &empty, &mut st, &AdamConfig::new(0.1)), Err(Error::Shape(_))));
}

#[test]
fn presets_follow_the_published_settings() {
    let a = TrainConfig::cat2img_preset();
    assert_eq!((a.solver_adam.lr, a.initializer_adam.lr), (0.002, 0.0064));
    assert_eq!((a.solver_adam.beta1, a.solver_adam.beta2), (0.5, 0.999));
    assert_eq!((a.batch_size, a.langevin.steps, a.langevin.step_size), (300, 8, 0.0008));
    assert_eq!((a.epochs, a.noise_anneal_epoch), (2000, Some(500)));
    let b = TrainConfig::img2img_preset();
    assert_eq!((b.solver_adam.lr, b.initializer_adam.lr, b.batch_size), (0.007, 0.0001, 1));
    assert_eq!((b.langevin.steps, b.langevin.step_size, b.epochs), (15, 0.002, 3000));
    assert_eq!((PRESET_RESIDUAL_STD, PRESET_REFERENCE_STD), (0.3, 0.016));
    assert!(a.validate().is_ok() && b.validate().is_ok());
}

#[test]
fn noise_is_disabled_from_the_anneal_epoch() {
    let mut cfg = small_cfg(1, 3);
    cfg.langevin = cfg.langevin.with_mh();
    cfg.noise_anneal_epoch = Some(2);
    assert!(cfg.langevin_at(1).noise);
    let late = cfg.langevin_at(2);
    assert!(!late.noise && !late.mh_correction);
}

fn small_cfg(epochs: usize, steps: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        solver_adam: AdamConfig::new(0.01),
        initializer_adam: AdamConfig::new(0.01),
        langevin: LangevinConfig::new(steps, 0.1),
        l1_weight: 0.0,
        noise_anneal_epoch: None,
        checkpoint_every: 1,
        augment: false,
        log_wall_time: false,
    }
}

fn mixture() -> CondDataset<f64> {
    let spec = ToySpec {
        family: ToyFamily::GaussianMixture {
            means: vec![vec![-0.5, 0.0], vec![0.5, 0.0]],
            std: 0.1,
        },
        seed: 3,
    };
    generate_toy(&spec, 16).unwrap().0
}

#[test]
fn degenerate_step_leaves_the_initializer_untouched() {
    let mut state = TrainState::new(mlp_solver(1), mlp_generator(0.0, 2), 11);
    let before = state.initializer.params.clone();
    let ds = mixture();
    let (y, c) = ds.select(&[0, 1, 2, 3]);
    let (stats, trace) = train_step(&y, &c, &mut state, &small_cfg(1, 0), None).unwrap();
    assert_eq!(trace.initial, trace.refined);
    assert_eq!(stats.initializer_grad_norm, 0.0);
    assert_eq!(state.initializer.params, before);
    assert_eq!(state.step, 1);
}

#[test]
fn step_reuses_its_latents() {
    let mut state = TrainState::new(mlp_solver(1), mlp_generator(0.0, 2), 12);
    let init_before = state.initializer.clone();
    let ds = mixture();
    let (y, c) = ds.select(&[0, 1, 2, 3]);
    let (_, trace) = train_step(&y, &c, &mut state, &small_cfg(1, 5), None).unwrap();
    let replay = init_before.generate(&trace.latent, &c, &mut rng(0)).unwrap();
    assert_eq!(replay, trace.initial);
}

#[test]
fn step_matches_the_expected_objective_shift() {
    // Linear solver, no refinement: the θ gradient is mean(Y) - mean(Ŷ) on
    // the target coordinates, with Ŷ ~ N(b, σ²) from a generator whose
    // weights are zero.
    let n = 4000;
    let mu = [0.7, -0.3];
    let sigma = 0.5;
    let mut g = linear_generator(1, 2, 1, sigma, 13);
    g.params = g.params.zeros_like();
    g.params.get_mut("l0.b").unwrap().data_mut().copy_from_slice(&[0.2, 0.1]);
    let mut state = TrainState::new(linear_solver(2, 1), g, 14);
    let mut r = rng(15);
    let y = Tensor::randn([n, 2], 0.2, &mut r).map(|v| v);
    let y = {
        let mut y = y;
        for i in 0..n {
            for (v, m) in y.sample_mut(i).iter_mut().zip(mu) {
                *v += m;
            }
        }
        y
    };
    let c = Tensor::full([n, 1], 1.0);
    let mut cfg = small_cfg(1, 0);
    cfg.batch_size = n;
    let before = state.solver.params.get("head.w").unwrap().clone();
    let (stats, trace) = train_step(&y, &c, &mut state, &cfg, None).unwrap();
    let w = state.solver.params.get("head.w").unwrap();
    for j in 0..2 {
        let expect = mu[j] - [0.2, 0.1][j];
        let got = (0..n).map(|i| y.sample(i)[j] - trace.refined.sample(i)[j]).sum::<f64>() / n as f64;
        let se = ((0.04 + sigma * sigma) / n as f64).sqrt();
        assert!((got - expect).abs() < 4.0 * se, "coordinate {j}: {got} vs {expect}");
        // first Adam step moves each weight by lr in the gradient's direction
        let moved = w.data()[j] - before.data()[j];
        assert!((moved - 0.01 * expect.signum()).abs() < 1e-6, "{moved}");
    }
    let fdiff = stats.f_observed - stats.f_refined;
    let expect: f64 = (0..2).map(|j| before.data()[j] * (mu[j] - [0.2, 0.1][j])).sum();
    assert!((fdiff - expect).abs() < 0.05, "{fdiff} vs {expect}");
}

#[test]
fn train_with_zero_epochs_writes_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut state = TrainState::new(mlp_solver(1), mlp_generator(0.3, 2), 16);
    let before = checkpoint::to_bytes(&state);
    train(&mixture(), &mut state, &small_cfg(0, 3), None, Some(TrainOutput { dir: dir.path() }), |_| {}).unwrap();
    assert_eq!(checkpoint::to_bytes(&state), before);
    assert_eq!(std::fs::read(dir.path().join(LATEST_CHECKPOINT)).unwrap(), before);
    assert_eq!(std::fs::read_to_string(dir.path().join(STATS_LOG)).unwrap(), "");
}

fn run_to_dir(dir: &std::path::Path, epochs: usize) -> TrainState<f64> {
    let mut state = TrainState::new(mlp_solver(1), mlp_generator(0.3, 2), 17);
    train(&mixture(), &mut state, &small_cfg(epochs, 3), None, Some(TrainOutput { dir }), |_| {}).unwrap();
    state
}

#[test]
fn training_is_reproducible_and_resumable() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_to_dir(a.path(), 3);
    run_to_dir(b.path(), 3);
    for f in [LATEST_CHECKPOINT, STATS_LOG, &epoch_checkpoint_name(2)] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    // stop after one epoch, then continue from the saved checkpoint
    run_to_dir(c.path(), 1);
    let mut resumed: TrainState<f64> = checkpoint::load_state(&c.path().join(LATEST_CHECKPOINT)).unwrap();
    train(&mixture(), &mut resumed, &small_cfg(3, 3), None, Some(TrainOutput { dir: c.path() }), |_| {}).unwrap();
    for f in [LATEST_CHECKPOINT, STATS_LOG] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(c.path().join(f)).unwrap(), "{f}");
    }
    let log = std::fs::read_to_string(a.path().join(STATS_LOG)).unwrap();
    assert_eq!(log.lines().count(), 12);
    let rec: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(rec.get("wall_time_s").is_none());
    for key in ["epoch", "step", "f_observed", "f_refined", "solver_grad_norm", "regression_loss"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
}

#[test]
fn empty_dataset_is_a_config_error() {
    let ds = mixture();
    let empty = ds.select(&[]);
    let empty = CondDataset::new(empty.0, empty.1, ConditionKind::OneHot(2)).unwrap();
    let mut state = TrainState::new(mlp_solver(1), mlp_generator(0.3, 2), 18);
    let r = train(&empty, &mut state, &small_cfg(1, 1), None, None, |_| {});
    assert!(matches!(r, Err(Error::Config(_))));
}

fn linear_gaussian_data(n: usize) -> CondDataset<f64> {
    let mut r = rng(19);
    let w = [1.0, 0.5];
    let mut y = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let x: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
        for (j, wj) in w.iter().enumerate() {
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
            y.push(wj * x + [0.2, -0.1][j] + 0.3 * e);
        }
    }
    CondDataset::new(Tensor::from_vec([n, 2], y).unwrap(), Tensor::full([n, 1], 1.0), ConditionKind::OneHot(1)).unwrap()
}

/// Loading of the one-factor model `Y = W x + b + σε` with σ known: the
/// leading principal axis of the sample covariance scaled by
/// `sqrt(λ₁ - σ²)`.
fn closed_form_mle(ds: &CondDataset<f64>, sigma: f64) -> [f64; 2] {
    let n = ds.len() as f64;
    let mean: Vec<f64> = (0..2).map(|j| (0..ds.len()).map(|i| ds.y.sample(i)[j]).sum::<f64>() / n).collect();
    let mut s = [[0.0; 2]; 2];
    for i in 0..ds.len() {
        let y = ds.y.sample(i);
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] += (y[a] - mean[a]) * (y[b] - mean[b]) / n;
            }
        }
    }
    let tr = s[0][0] + s[1][1];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let l1 = tr / 2.0 + (tr * tr / 4.0 - det).sqrt();
    let u = [s[0][1], l1 - s[0][0]];
    let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let scale = (l1 - sigma * sigma).sqrt();
    [scale * u[0] / norm, scale * u[1] / norm]
}

fn alternating_cfg(epochs: usize, steps: usize) -> AlternatingConfig {
    AlternatingConfig {
        epochs,
        batch_size: 50,
        adam: AdamConfig::new(0.02),
        langevin: LangevinConfig::new(steps, 0.1).with_mh(),
    }
}

#[test]
fn alternating_training_recovers_the_linear_gaussian_mle() {
    let ds = linear_gaussian_data(500);
    let mut g = linear_generator(1, 2, 1, 0.3, 20);
    let losses = train_initializer_alone(&ds, &mut g, &alternating_cfg(150, 20), &mut rng(21)).unwrap();
    let mle = closed_form_mle(&ds, 0.3);
    let w = g.params.get("l0.w").unwrap();
    let learned = [w.data()[0], w.data()[1]];
    let sign = if learned[0] * mle[0] + learned[1] * mle[1] < 0.0 { -1.0 } else { 1.0 };
    let err = ((learned[0] - sign * mle[0]).powi(2) + (learned[1] - sign * mle[1]).powi(2)).sqrt();
    let rel = err / (mle[0].powi(2) + mle[1].powi(2)).sqrt();
    assert!(rel < 0.1, "learned {learned:?} vs {mle:?} ({rel})");

    // reconstruction loss trends down: each window of 10 epochs is no worse
    // than the one before, up to sampling noise
    let windows: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    assert!(windows.last().unwrap() < &windows[0]);
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05, "{windows:?}");
    }
}

#[test]
fn alternating_training_without_inference_regresses_on_prior_draws() {
    let ds = linear_gaussian_data(40);
    let mut g = linear_generator(1, 2, 1, 0.3, 22);
    let losses = train_initializer_alone(&ds, &mut g, &alternating_cfg(3, 0), &mut rng(23)).unwrap();
    assert_eq!(losses.len(), 3);
    assert!(losses.iter().all(|l| l.is_finite()));
}

#[test]
fn alternating_training_rejects_dropout_latents() {
    let mut arch = ArchDescriptor::new(
        "img2img_unet",
        vec![1, 4, 4],
        ConditionSpec::Image(vec![1, 4, 4]),
        vec![LayerSpec::Conv { kernel: 4, stride: 2, channels: 2, padding: None }],
    );
    arch.dropout = 0.5;
    let mut g = GeneratorModel::<f64>::new(arch, 0.3, &mut rng(0)).unwrap();
    let ds = CondDataset::new(Tensor::zeros([1, 1, 4, 4]), Tensor::zeros([1, 1, 4, 4]), ConditionKind::Image { label_map: false }).unwrap();
    let r = train_initializer_alone(&ds, &mut g, &alternating_cfg(1, 1), &mut rng(0));
    assert!(matches!(r, Err(Error::Unsupported(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_shift_raises_the_value_gap(seed in 0u64..1000) {
        let m = mlp_solver(seed);
        let mut r = rng(seed + 1);
        let obs = Tensor::<f64>::randn([6, 2], 1.0, &mut r);
        let refd = Tensor::<f64>::randn([6, 2], 1.0, &mut r);
        let c = labels_c(6);
        let (g, fo, fr) = solver_grad(&obs, &refd, &c, &m).unwrap();
        let mut up = m.clone();
        up.params.axpy(1e-4, &g).unwrap();
        let (_, fo2, fr2) = solver_grad(&obs, &refd, &c, &up).unwrap();
        prop_assert!(fo2 - fr2 >= fo - fr);
    }

    #[test]
    fn mapping_shift_lowers_the_regression_loss(seed in 0u64..1000) {
        let gm = mlp_generator(0.3, seed);
        let mut r = rng(seed + 1);
        let lat = gm.sample_latent(6, &mut r);
        let c = labels_c(6);
        let target = Tensor::<f64>::randn([6, 2], 0.5, &mut r);
        let ig = initializer_grad(&lat, &c, &target, &gm, None, 0.0).unwrap();
        prop_assume!(ig.grad.norm() > 1e-9);
        let mut next = gm.clone();
        next.params.axpy(-1e-4, &ig.grad).unwrap();
        let ig2 = initializer_grad(&lat, &c, &target, &next, None, 0.0).unwrap();
        prop_assert!(ig2.regression_loss < ig.regression_loss);
    }
}
