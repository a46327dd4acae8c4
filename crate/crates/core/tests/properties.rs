use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swlidar::clustering::cluster_pixels;
use swlidar::depth::depth_error_cdf;
use swlidar::forward::{joint_log_likelihood, photon_pdf, simulate, weights_from_reflectivity};
use swlidar::priors::log_prior_w;
use swlidar::reflectivity::{estimate_reflectivity, reflectivity_mse};
use swlidar::xcorr::xcorr_depth;
use swlidar::{
    phantom, DepthField, HyperParams, ImageDims, IrfBank64, Photon, PriorModel64, ReflectivityCube64, SceneCube,
    SimConfig, WeightField64,
};

fn arb_bank() -> impl Strategy<Value = IrfBank64> {
    (1usize..4, 1usize..6, 8usize..30).prop_flat_map(|(bands, support, t_len)| {
        let t_min = 2usize;
        let t_max = t_len - support;
        proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, support), bands).prop_filter_map(
            "needs a valid bank",
            move |mut g| {
                for band in g.iter_mut() {
                    band[0] += 0.1;
                }
                if t_max <= t_min {
                    return None;
                }
                IrfBank64::new(g, t_len, t_min, t_max).ok()
            },
        )
    })
}

/// Point of the sub-simplex `{w >= 0, sum w <= 1}` from unconstrained draws.
fn to_simplex(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum::<f64>() + 0.3;
    raw.iter().map(|v| v / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn photon_density_sums_to_one(bank in arb_bank(), raw in proptest::collection::vec(0.0f64..1.0, 3), tsel in 0usize..1000) {
        let w = to_simplex(&raw[..bank.bands()]);
        let t = bank.t_min() + tsel % bank.n_depths();
        let total: f64 = (1..=bank.t_len()).map(|s| photon_pdf(s, &w, t, &bank).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {total}");
    }

    #[test]
    fn density_is_affine_in_the_weights(
        bank in arb_bank(),
        a in proptest::collection::vec(0.0f64..1.0, 3),
        b in proptest::collection::vec(0.0f64..1.0, 3),
        mix in 0.0f64..1.0,
        s in 1usize..200,
    ) {
        let l = bank.bands();
        let (wa, wb) = (to_simplex(&a[..l]), to_simplex(&b[..l]));
        let wm: Vec<f64> = wa.iter().zip(&wb).map(|(x, y)| mix * x + (1.0 - mix) * y).collect();
        let s = 1 + s % bank.t_len();
        let t = bank.t_min();
        let lhs = photon_pdf(s, &wm, t, &bank).unwrap();
        let rhs = mix * photon_pdf(s, &wa, t, &bank).unwrap() + (1.0 - mix) * photon_pdf(s, &wb, t, &bank).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn reflectivity_weights_lie_in_the_simplex(
        bank in arb_bank(),
        r in proptest::collection::vec(0.0f64..10.0, 3),
        b in 0.001f64..2.0,
    ) {
        let r = &r[..bank.bands()];
        let w = weights_from_reflectivity(r, b, &bank).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        let sum: f64 = w.iter().sum();
        prop_assert!(sum <= 1.0);
        let signal: f64 = r.iter().zip(bank.integrals()).map(|(x, g)| x * g).sum();
        let t = bank.t_len() as f64;
        prop_assert!(((1.0 - sum) - t * b / (signal + t * b)).abs() < 1e-12);
    }

    #[test]
    fn reflectivity_is_linear_in_counts_and_nonnegative(
        raw in proptest::collection::vec(0.0f64..1.0, 8),
        y in proptest::collection::vec(0.0f64..500.0, 4),
        scale in 0.0f64..10.0,
    ) {
        let bank = phantom::irf_bank_l1::<f64>().unwrap();
        let w: Vec<f64> = raw.chunks(2).map(|c| to_simplex(&c[..1])[0]).collect();
        let field = WeightField64::from_vec(ImageDims::new(2, 2), 1, w).unwrap();
        let base = estimate_reflectivity(&field, &y, &bank).unwrap();
        let scaled_y: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let scaled = estimate_reflectivity(&field, &scaled_y, &bank).unwrap();
        for (a, b) in base.r_slice().iter().zip(scaled.r_slice()) {
            prop_assert!(*a >= 0.0);
            prop_assert!((a * scale - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for (a, b) in base.b_slice().iter().zip(scaled.b_slice()) {
            prop_assert!(*a >= 0.0);
            prop_assert!((a * scale - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn mse_and_cdf_match_direct_formulas(
        r1 in proptest::collection::vec(0.0f64..5.0, 12),
        r2 in proptest::collection::vec(0.0f64..5.0, 12),
        t1 in proptest::collection::vec(2usize..40, 6),
        t2 in proptest::collection::vec(2usize..40, 6),
    ) {
        let dims = ImageDims::new(2, 3);
        let a = ReflectivityCube64::new(dims, 2, r1.clone(), vec![0.0; 6]).unwrap();
        let b = ReflectivityCube64::new(dims, 2, r2.clone(), vec![1.0; 6]).unwrap();
        let direct: f64 = r1.iter().zip(&r2).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 6.0;
        prop_assert!((reflectivity_mse(&a, &b).unwrap() - direct).abs() < 1e-12);

        let cdf = depth_error_cdf(&DepthField::new(dims, t1.clone()).unwrap(), &DepthField::new(dims, t2.clone()).unwrap()).unwrap();
        let errors: Vec<usize> = t1.iter().zip(&t2).map(|(x, y)| x.abs_diff(*y)).collect();
        prop_assert_eq!(cdf.len(), errors.iter().max().unwrap() + 1);
        for (h, frac) in cdf {
            let count = errors.iter().filter(|e| **e <= h).count();
            prop_assert_eq!(frac, count as f64 / 6.0);
        }
    }

    #[test]
    fn matched_filter_is_permutation_equivariant(
        lists in proptest::collection::vec(proptest::collection::vec((1u32..=60, 1u32..4), 0..8), 6),
        seed in any::<u64>(),
    ) {
        let bank = IrfBank64::new(vec![vec![0.2, 1.0, 0.5, 0.1]], 60, 3, 50).unwrap();
        let to_photons = |l: &Vec<(u32, u32)>| l.iter().map(|&(bin, count)| Photon { bin, count }).collect::<Vec<_>>();
        let dims = ImageDims::new(2, 3);
        let scene = SceneCube::from_photons(dims, 60, lists.iter().map(to_photons).collect()).unwrap();
        let mut perm: Vec<usize> = (0..6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..6).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = SceneCube::from_photons(dims, 60, perm.iter().map(|&p| to_photons(&lists[p])).collect()).unwrap();
        let d = xcorr_depth(&scene, &bank);
        let ds = xcorr_depth(&shuffled, &bank);
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(ds.get(i), d.get(p));
        }
    }
}

/// Random interior weight field on a `3 x 3` image with two bands.
fn interior_field(rng: &mut ChaCha8Rng) -> WeightField64 {
    let data: Vec<f64> = (0..9)
        .flat_map(|_| {
            let a: f64 = rng.random_range(0.05..0.45);
            let b: f64 = rng.random_range(0.05..0.45);
            [a, b]
        })
        .collect();
    WeightField64::from_vec(ImageDims::new(3, 3), 2, data).unwrap()
}

fn all_priors() -> Vec<PriorModel64> {
    let beta0 = vec![1.5, 2.0, 3.0];
    vec![
        PriorModel64::tv(2.0),
        PriorModel64::lap(2.0),
        PriorModel64::w_dirichlet(1.3, 2),
        PriorModel64::g_dirichlet(0.25, beta0.clone()),
        PriorModel64::c_dirichlet(0.25, vec![0, 0, 1, 0, 1, 1, 2, 2, 1], beta0).unwrap(),
    ]
}

#[test]
fn every_prior_is_concave_along_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for prior in all_priors() {
        for _ in 0..20 {
            let (a, b) = (interior_field(&mut rng), interior_field(&mut rng));
            let (fa, fb) = (log_prior_w(&a, &prior).unwrap(), log_prior_w(&b, &prior).unwrap());
            for mix in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let m: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| mix * x + (1.0 - mix) * y).collect();
                let fm = log_prior_w(&WeightField64::from_vec(a.dims(), 2, m).unwrap(), &prior).unwrap();
                assert!(fm >= mix * fa + (1.0 - mix) * fb - 1e-9, "{:?} not concave", prior.kind());
            }
        }
    }
}

#[test]
fn mrf_priors_ignore_constant_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for prior in &all_priors()[..2] {
        for _ in 0..20 {
            let w = interior_field(&mut rng);
            let shift = [rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04)];
            let moved: Vec<f64> = w.as_slice().iter().enumerate().map(|(i, v)| v + shift[i % 2]).collect();
            let moved = WeightField64::from_vec(w.dims(), 2, moved).unwrap();
            let (a, b) = (log_prior_w(&w, prior).unwrap(), log_prior_w(&moved, prior).unwrap());
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{:?}: {a} vs {b}", prior.kind());
        }
    }
}

#[test]
fn log_likelihood_is_concave_in_one_pixel() {
    let bank = phantom::irf_bank_l4::<f64>().unwrap();
    let t_len = bank.t_len();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let dims = ImageDims::new(1, 1);
    let depth = DepthField::new(dims, vec![bank.t_min() + 100]).unwrap();
    for _ in 0..20 {
        let bins: Vec<u32> = (0..30).map(|_| rng.random_range(1..=t_len as u32)).collect();
        let scene = SceneCube::from_toa_lists(dims, t_len, &[bins]).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            WeightField64::from_vec(dims, 4, to_simplex(&raw)).unwrap()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let fa = joint_log_likelihood(&scene, &a, &depth, &bank).unwrap();
        let fb = joint_log_likelihood(&scene, &b, &depth, &bank).unwrap();
        for mix in [0.25, 0.5, 0.75] {
            let m: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| mix * x + (1.0 - mix) * y).collect();
            let fm = joint_log_likelihood(&scene, &WeightField64::from_vec(dims, 4, m).unwrap(), &depth, &bank).unwrap();
            assert!(fm >= mix * fa + (1.0 - mix) * fb - 1e-9);
        }
    }
}

#[test]
fn simulated_counts_have_the_poisson_mean() {
    let bank = IrfBank64::new(vec![vec![0.5, 1.0, 0.25], vec![0.0, 0.3, 0.9]], 10, 2, 7).unwrap();
    let dims = ImageDims::new(2, 2);
    let depth = DepthField::new(dims, vec![2, 4, 5, 7]).unwrap();
    let truth = ReflectivityCube64::new(dims, 2, vec![1.0, 0.0, 0.5, 2.0, 3.0, 1.0, 0.0, 0.2], vec![0.0; 4]).unwrap();
    let trials = 10_000u64;
    let cfg = |seed| SimConfig { alpha: 2.0, gamma_t: 1.5, seed };
    let mut sums = vec![0.0f64; 4 * 10];
    for seed in 0..trials {
        let scene = simulate(&cfg(seed), &depth, &truth, &bank).unwrap();
        for n in 0..4 {
            for (s, c) in scene.histogram(n).into_iter().enumerate() {
                sums[n * 10 + s] += c as f64;
            }
        }
    }
    let bg = cfg(0).background_rate(10);
    for n in 0..4 {
        for s in 1..=10usize {
            let delay = s as isize - depth.get(n) as isize;
            let rate = bg + (0..2).map(|l| 2.0 * truth.r(n)[l] * bank.g(l, delay)).sum::<f64>();
            let mean = sums[n * 10 + s - 1] / trials as f64;
            let bound = 3.0 * rate.sqrt() / (trials as f64).sqrt();
            assert!((mean - rate).abs() <= bound, "pixel {n} bin {s}: {mean} vs {rate}");
        }
    }
}

#[test]
fn matched_filter_is_exact_without_background() {
    for bands in [1, 4] {
        let p = phantom::phantom::<f64>(bands).unwrap();
        let cfg = SimConfig { alpha: 1e5, gamma_t: 0.0, seed: 5 };
        let scene = simulate(&cfg, &p.depth, &p.truth, &p.bank).unwrap();
        let d = xcorr_depth(&scene, &p.bank);
        let exact = d.as_slice().iter().zip(p.depth.as_slice()).filter(|(a, b)| a == b).count();
        assert!(exact as f64 >= 0.99 * scene.n_pixels() as f64, "L={bands}: {exact} exact");
    }
}

#[test]
fn clusters_partition_the_image_and_repeat() {
    let p = phantom::phantom_sized::<f64>(ImageDims::new(12, 12), 1).unwrap();
    let scene = simulate(&SimConfig { alpha: 25.0, gamma_t: 1.0, seed: 3 }, &p.depth, &p.truth, &p.bank).unwrap();
    let hyper = HyperParams::default();
    let a = cluster_pixels(&scene, &p.bank, &hyper, 9).unwrap();
    let b = cluster_pixels(&scene, &p.bank, &hyper, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.labels.len(), scene.n_pixels());
    assert!(a.labels.iter().all(|&c| c < a.n_clusters));
    for c in 0..a.n_clusters {
        assert!(a.labels.contains(&c), "cluster {c} empty");
    }
    assert!(a.wcss.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}
