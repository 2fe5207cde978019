use coopnet::config::SystemConfig;
use coopnet::eval::*;
use coopnet::tensor::Tensor;
use coopnet::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct sum of Gaussian densities, no log-sum-exp.
fn brute_parzen(reference: &[[f64; 2]], test: &[[f64; 2]], h: f64) -> Vec<f64> {
    test.iter()
        .map(|t| {
            let mut dens = 0.0;
            for r in reference {
                let mut p = 1.0;
                for d in 0..2 {
                    let z = (t[d] - r[d]) / h;
                    p *= (-0.5 * z * z).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
                }
                dens += p;
            }
            (dens / reference.len() as f64).ln()
        })
        .collect()
}

fn tensor2(rows: &[[f64; 2]]) -> Tensor<f64> {
    Tensor::from_vec([rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn parzen_at_a_single_reference_point() {
    for (d, h) in [(1usize, 0.3), (4, 0.05), (10, 1.0)] {
        let y = Tensor::<f64>::from_vec([1, d], (0..d).map(|i| i as f64 * 0.1).collect()).unwrap();
        let est = ParzenEstimator::new(&y, h).unwrap();
        let r = parzen_loglik(&est, &y).unwrap();
        let expect = -(d as f64 / 2.0) * (2.0 * std::f64::consts::PI * h * h).ln();
        assert!((r.mean - expect).abs() < 1e-12);
        assert_eq!((r.n, r.std_err, r.bandwidth), (1, 0.0, h));
    }
}

#[test]
fn parzen_matches_the_double_loop() {
    let reference = [[0.1, 0.2], [-0.4, 0.9], [1.3, -0.2], [0.0, 0.0], [0.7, 0.7]];
    let test = [[0.2, 0.1], [-1.0, 0.5], [0.9, 0.9]];
    for h in [0.1, 0.5, 2.0] {
        let oracle = brute_parzen(&reference, &test, h);
        let mean = oracle.iter().sum::<f64>() / 3.0;
        let var = oracle.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        let est = ParzenEstimator::new(&tensor2(&reference), h).unwrap();
        let r = parzen_loglik(&est, &tensor2(&test)).unwrap();
        assert!((r.mean - mean).abs() < 1e-9, "{h}: {} vs {mean}", r.mean);
        assert!((r.std_err - (var / 3.0).sqrt()).abs() < 1e-9);
        for (t, o) in test.iter().zip(&oracle) {
            assert!((est.log_density(t) - o).abs() < 1e-9);
        }
    }
}

#[test]
fn parzen_survives_far_test_points() {
    let est = ParzenEstimator::new(&tensor2(&[[0.0, 0.0]]), 0.01).unwrap();
    let v = est.log_density(&[50.0, 0.0]);
    let expect = -(50.0f64 * 50.0) / (2.0 * 1e-4) - (2.0 * std::f64::consts::PI * 1e-4).ln();
    assert!(v.is_finite() && (v - expect).abs() < 1e-6 * expect.abs());
}

#[test]
fn parzen_rejects_bad_inputs() {
    let r = tensor2(&[[0.0, 0.0]]);
    assert!(matches!(ParzenEstimator::new(&r, 0.0), Err(Error::Config(_))));
    assert!(matches!(ParzenEstimator::new(&Tensor::<f64>::zeros([0, 2]), 0.1), Err(Error::Shape(_))));
    let est = ParzenEstimator::new(&r, 0.1).unwrap();
    assert!(matches!(parzen_loglik(&est, &Tensor::<f64>::zeros([2, 3])), Err(Error::Shape(_))));
    assert!(matches!(select_bandwidth(&r, &r, &[]), Err(Error::Config(_))));
}

#[test]
fn default_grid_spans_the_protocol_range() {
    let g = default_bandwidth_grid();
    assert_eq!(g.len(), 20);
    assert!((g[0] - 0.01).abs() < 1e-15 && (g[19] - 1.0).abs() < 1e-12);
    let ratio = g[1] / g[0];
    assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
}

#[test]
fn singleton_grid_is_returned() {
    let r = tensor2(&[[0.0, 0.0], [1.0, 1.0]]);
    let v = tensor2(&[[5.0, 5.0]]);
    assert_eq!(select_bandwidth(&r, &v, &[0.37]).unwrap(), 0.37);
}

#[test]
fn validating_on_the_reference_picks_the_smallest_bandwidth() {
    let r = Tensor::<f64>::randn([50, 2], 1.0, &mut rng(1));
    let grid = default_bandwidth_grid();
    assert_eq!(select_bandwidth(&r, &r, &grid).unwrap(), 0.01);
}

#[test]
fn bandwidth_lands_next_to_the_grid_optimum() {
    let mut g = rng(2);
    let r = Tensor::<f64>::randn([300, 2], 0.5, &mut g);
    let v = Tensor::<f64>::randn([300, 2], 0.5, &mut g);
    let grid = default_bandwidth_grid();
    let rows = |t: &Tensor<f64>| -> Vec<[f64; 2]> { (0..t.batch()).map(|i| [t.sample(i)[0], t.sample(i)[1]]).collect() };
    let (rr, vv) = (rows(&r), rows(&v));
    let scores: Vec<f64> = grid.iter().map(|&h| brute_parzen(&rr, &vv, h).iter().sum::<f64>()).collect();
    let best = (0..grid.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    let chosen = select_bandwidth(&r, &v, &grid).unwrap();
    let idx = grid.iter().position(|&h| h == chosen).unwrap();
    assert!(idx.abs_diff(best) <= 1, "chose {chosen}, oracle {}", grid[best]);
    // a rule-of-thumb bandwidth for 300 points of std 0.5 in 2-d is about 0.2
    assert!((0.1..0.4).contains(&chosen));
}

#[test]
fn psnr_caps_identical_images() {
    let a = Tensor::<f64>::randn([3, 4, 4], 1.0, &mut rng(3));
    assert_eq!(psnr(&a, &a, 2.0, None).unwrap(), PSNR_CAP_DB);
}

#[test]
fn psnr_of_a_constant_difference() {
    let a = Tensor::<f64>::full([1, 8, 8], 100.0);
    let b = Tensor::<f64>::full([1, 8, 8], 116.0);
    let v = psnr(&a, &b, 255.0, None).unwrap();
    assert!((v - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-12);
    assert!((v - 24.048).abs() < 1e-3);
}

#[test]
fn psnr_region_hides_outside_pixels() {
    let a = Tensor::<f64>::randn([1, 6, 6], 1.0, &mut rng(4));
    let mut b = a.map(|v| v + 0.1);
    let mut mask = Tensor::<f64>::zeros([1, 6, 6]);
    for k in [7, 8, 13, 14] {
        mask.data_mut()[k] = 1.0;
    }
    let before = psnr(&a, &b, 2.0, Some(&mask)).unwrap();
    for k in 0..36 {
        if mask.data()[k] == 0.0 {
            b.data_mut()[k] += 10.0 * k as f64;
        }
    }
    assert_eq!(psnr(&a, &b, 2.0, Some(&mask)).unwrap(), before);
    assert!((before - 20.0 * (2.0f64 / 0.1).log10()).abs() < 1e-9);
    assert!(matches!(psnr(&a, &b, 2.0, Some(&Tensor::zeros([1, 6, 6]))), Err(Error::Shape(_))));
    assert!(matches!(psnr(&a, &Tensor::zeros([1, 6, 5]), 2.0, None), Err(Error::Shape(_))));
}

#[test]
fn ssim_of_an_image_with_itself_is_one() {
    let a = Tensor::<f64>::randn([3, 12, 9], 1.0, &mut rng(5));
    assert_eq!(ssim(&a, &a, &SsimParams::for_range(2.0)).unwrap(), 1.0);
}

#[test]
fn ssim_drops_under_contrast_inversion() {
    let a = Tensor::<f64>::from_vec([1, 8, 8], (0..64).map(|k| ((k / 8) as f64 / 7.0) - 0.5).collect()).unwrap();
    let b = a.map(|v| 0.2 - v);
    let s = ssim(&a, &b, &SsimParams::for_range(2.0)).unwrap();
    assert!(s < 1.0 && s >= -1.0, "{s}");
    assert!(s < 0.0);
}

/// Global-statistics SSIM for a single window covering the whole image,
/// using `E[ab] - E[a]E[b]` forms.
fn ssim_direct(a: &[f64], b: &[f64], range: f64) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let eaa = a.iter().map(|x| x * x).sum::<f64>() / n;
    let ebb = b.iter().map(|x| x * x).sum::<f64>() / n;
    let eab = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    let (va, vb, cov) = (eaa - ma * ma, ebb - mb * mb, eab - ma * mb);
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

#[test]
fn ssim_matches_the_direct_formula_on_one_window() {
    let mut g = rng(6);
    let a = Tensor::<f64>::randn([1, 8, 8], 0.5, &mut g);
    let b = a.map(|v| 0.8 * v + 0.1) ;
    let b = {
        let n = Tensor::<f64>::randn([1, 8, 8], 0.2, &mut g);
        let mut b = b;
        for (x, e) in b.data_mut().iter_mut().zip(n.data()) {
            *x += e;
        }
        b
    };
    let got = ssim(&a, &b, &SsimParams::for_range(2.0)).unwrap();
    let want = ssim_direct(a.data(), b.data(), 2.0);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn ssim_rejects_windows_larger_than_the_image() {
    let a = Tensor::<f64>::zeros([1, 7, 9]);
    assert!(matches!(ssim(&a, &a, &SsimParams::for_range(2.0)), Err(Error::Shape(_))));
}

fn two_state(theta1: f64, kernel: KernelKind) -> DiscreteCoopSystem {
    DiscreteCoopSystem {
        theta: vec![vec![0.0, theta1]],
        q_logits: vec![vec![0.0, 0.0]],
        f_data: vec![vec![0.25, 0.75]],
        kernel,
        solver_lr: 1.0,
        initializer_lr: 1.0,
    }
}

fn kl2(p: [f64; 2], q: [f64; 2]) -> f64 {
    p[0] * (p[0] / q[0]).ln() + p[1] * (p[1] / q[1]).ln()
}

fn soft2(a: f64, b: f64) -> [f64; 2] {
    let e = (b - a).exp();
    [1.0 / (1.0 + e), e / (1.0 + e)]
}

#[test]
fn exact_kernel_at_the_fixed_point_gives_zero_kl() {
    let p = softmax_row(&[0.3, -1.0, 2.0]);
    let sys = DiscreteCoopSystem {
        theta: vec![vec![0.3, -1.0, 2.0]],
        q_logits: vec![vec![0.3, -1.0, 2.0]],
        f_data: vec![p],
        kernel: KernelKind::Exact,
        solver_lr: 1.0,
        initializer_lr: 1.0,
    };
    let t = fixed_point_sim(&sys, 3).unwrap();
    assert_eq!(t.len(), 4);
    for r in &t {
        assert!(r.kl_data_p.abs() < 1e-15 && r.kl_mq_p.abs() < 1e-15 && r.kl_mq_q.abs() < 1e-15);
        assert!(r.tv_q_p.abs() < 1e-15);
    }
}

#[test]
fn two_state_exact_kernel_by_hand() {
    let sys = two_state(2f64.ln(), KernelKind::Exact);
    let t = fixed_point_sim(&sys, 1).unwrap();
    let p0 = [1.0 / 3.0, 2.0 / 3.0];
    let q0 = [0.5, 0.5];
    assert!((t[0].kl_data_p - kl2([0.25, 0.75], p0)).abs() < 1e-15);
    assert!(t[0].kl_mq_p.abs() < 1e-15);
    assert!((t[0].kl_mq_q - kl2(p0, q0)).abs() < 1e-15);
    assert!((t[0].tv_q_p - 1.0 / 6.0).abs() < 1e-15);
    // θ += f - p, logits += p - q
    let p1 = soft2(-1.0 / 12.0, 2f64.ln() + 1.0 / 12.0);
    let q1 = soft2(-1.0 / 6.0, 1.0 / 6.0);
    assert!((t[1].kl_data_p - kl2([0.25, 0.75], p1)).abs() < 1e-14);
    assert!(t[1].kl_mq_p.abs() < 1e-15);
    assert!((t[1].kl_mq_q - kl2(p1, q1)).abs() < 1e-14);
    assert!((t[1].tv_q_p - (q1[0] - p1[0]).abs()).abs() < 1e-14);
}

#[test]
fn two_state_metropolis_kernel_by_hand() {
    // On a 2-ring both proposals hit the other state, so one sweep moves
    // 0 → 1 with min(1, p1/p0) and 1 → 0 with min(1, p0/p1).
    let sys = two_state(2f64.ln(), KernelKind::Metropolis { sweeps: 1 });
    let m = sys.kernel_matrix(0);
    assert!((m[0][1] - 1.0).abs() < 1e-15 && m[0][0].abs() < 1e-15);
    assert!((m[1][0] - 0.5).abs() < 1e-15 && (m[1][1] - 0.5).abs() < 1e-15);
    let t = fixed_point_sim(&sys, 1).unwrap();
    let mq = [0.25, 0.75];
    let p0 = [1.0 / 3.0, 2.0 / 3.0];
    assert!((t[0].kl_mq_p - kl2(mq, p0)).abs() < 1e-15);
    assert!((t[0].kl_mq_q - kl2(mq, [0.5, 0.5])).abs() < 1e-15);
    // Mq equals f_data here, so θ does not move and q moves to logits ±1/4
    let q1 = soft2(-0.25, 0.25);
    let mq1 = [q1[0] * 0.0 + q1[1] * 0.5, q1[0] + q1[1] * 0.5];
    assert!((t[1].kl_data_p - kl2([0.25, 0.75], p0)).abs() < 1e-15);
    assert!((t[1].kl_mq_p - kl2(mq1, p0)).abs() < 1e-14);
    assert!((t[1].kl_q_p - kl2(q1, p0)).abs() < 1e-14);
}

#[test]
fn sixteen_state_run_reproduces_its_baseline() {
    let sys: SystemConfig = serde_json::from_str(r#"{"random":{"states":16,"conditions":2,"seed":7}}"#).unwrap();
    let t = fixed_point_sim(&sys.build().unwrap(), 500).unwrap();
    let baseline: [(usize, [f64; 5]); 4] = [
        (1, [6.737428895169365e-1, 3.034202807349871e-4, 5.870784185274693e-3, 3.6614102466545714e-2, 6.48164254632359e-3]),
        (10, [1.1858880945927722e-1, 1.403093404226698e-1, 9.435326661854668e-2, 3.7455782757270784e-1, 3.4509222909462045e-1]),
        (100, [7.5680193679654156e-3, 2.051154179970271e-3, 3.988101742646844e-3, 3.923561759271689e-2, 7.317999511578854e-3]),
        (500, [7.714731971343492e-5, 5.488466045733082e-5, 1.0282924340071094e-4, 4.816913334468128e-3, 1.7808599232666425e-4]),
    ];
    assert!((t[0].kl_data_p - 8.525586246582294e-1).abs() < 1e-10);
    for (i, want) in baseline {
        let r = t[i];
        let got = [r.kl_data_p, r.kl_mq_p, r.kl_mq_q, r.tv_q_p, r.kl_q_p];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10, "row {i}: {got:?}");
        }
    }
}

#[test]
fn invalid_systems_are_rejected() {
    let mut sys = two_state(0.0, KernelKind::Exact);
    sys.f_data = vec![vec![0.5, 0.6]];
    assert!(matches!(fixed_point_sim(&sys, 1), Err(Error::Config(_))));
    let mut sys = two_state(0.0, KernelKind::Exact);
    sys.theta = vec![vec![0.0, 0.0, 0.0]];
    assert!(matches!(fixed_point_sim(&sys, 1), Err(Error::Config(_))));
    let mut sys = two_state(0.0, KernelKind::Exact);
    sys.q_logits[0][0] = f64::NAN;
    assert!(matches!(fixed_point_sim(&sys, 1), Err(Error::Config(_))));
}

#[test]
fn trace_csv_has_the_four_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let t = fixed_point_sim(&two_state(0.0, KernelKind::Exact), 2).unwrap();
    write_trace_csv(&path, &t).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,kl_data_p,kl_mq_p,kl_mq_q,tv_q_stationary");
    assert_eq!(lines.len(), 4);
    let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], 0.0);
    assert_eq!(fields[1], t[0].kl_data_p);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernels_are_stochastic_and_preserve_p(theta in prop::collection::vec(-3.0f64..3.0, 2..9), sweeps in 1usize..6) {
        let n = theta.len();
        let sys = DiscreteCoopSystem {
            theta: vec![theta.clone()],
            q_logits: vec![vec![0.0; n]],
            f_data: vec![vec![1.0 / n as f64; n]],
            kernel: KernelKind::Metropolis { sweeps },
            solver_lr: 1.0,
            initializer_lr: 1.0,
        };
        let m = sys.kernel_matrix(0);
        let p = softmax_row(&theta);
        for row in &m {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        for j in 0..n {
            let pm: f64 = (0..n).map(|i| p[i] * m[i][j]).sum();
            prop_assert!((pm - p[j]).abs() < 1e-12);
        }
        // detailed balance makes the kernel contract toward p in KL
        let row = fixed_point_sim(&sys, 0).unwrap()[0];
        prop_assert!(row.kl_mq_p <= row.kl_q_p + 1e-12);
    }

    #[test]
    fn psnr_is_symmetric(seed in 0u64..1000) {
        let mut g = rng(seed);
        let a = Tensor::<f64>::randn([1, 5, 5], 1.0, &mut g);
        let b = Tensor::<f64>::randn([1, 5, 5], 1.0, &mut g);
        prop_assert_eq!(psnr(&a, &b, 2.0, None).unwrap(), psnr(&b, &a, 2.0, None).unwrap());
    }

    #[test]
    fn ssim_is_bounded_and_symmetric(seed in 0u64..1000) {
        let mut g = rng(seed);
        let a = Tensor::<f64>::randn([2, 9, 10], 1.0, &mut g);
        let b = Tensor::<f64>::randn([2, 9, 10], 1.0, &mut g);
        let p = SsimParams::for_range(2.0);
        let s = ssim(&a, &b, &p).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a, &p).unwrap()).abs() < 1e-15);
    }
}
