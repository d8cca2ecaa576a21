use mfon_core::limits::{w_critical, w_subcritical, w_supercritical, CriticalDensity};
use mfon_core::model::{ModelParams, SpinConfiguration};
use mfon_core::sampler::{uniform_sphere, vmf_sample};
use mfon_core::specfun::{bessel_i, bessel_ratio, bessel_ratio_order, gamma_p, ln_gamma, normal_cdf, BesselOrder};
use mfon_core::stats::{ks_distance, wasserstein1};
use mfon_core::thermo::{free_energy, phi, phi_derivative, rate_function, solve_fixed_point};
use mfon_core::Real;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_config(dim: usize, n: usize, seed: u64) -> SpinConfiguration<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| uniform_sphere(dim, &mut rng)).collect();
    SpinConfiguration::from_rows(&rows).unwrap()
}

/// Haar-ish orthogonal matrix from Gram–Schmidt on Gaussian columns.
fn random_rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| f64::standard_normal(&mut rng)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

fn rotate(config: &SpinConfiguration<f64>, r: &[Vec<f64>]) -> SpinConfiguration<f64> {
    let rows: Vec<Vec<f64>> = (0..config.n_sites())
        .map(|i| {
            let s = config.spin(i);
            r.iter().map(|row| row.iter().zip(s).map(|(a, b)| a * b).sum()).collect()
        })
        .collect();
    SpinConfiguration::from_rows(&rows).unwrap()
}

fn order() -> impl Strategy<Value = BesselOrder> {
    (0u32..=20).prop_map(BesselOrder::from_twice)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hamiltonian_in_range(dim in 2usize..=5, n in 1usize..60, seed: u64) {
        let c = random_config(dim, n, seed);
        let h = c.hamiltonian();
        prop_assert!(h <= 1e-12 && h >= -(n as f64) / 2.0 - 1e-9, "h = {h}");
    }

    #[test]
    fn statistics_are_rotation_invariant(dim in 2usize..=4, n in 2usize..40, seed: u64, rot: u64) {
        let c = random_config(dim, n, seed);
        let r = rotate(&c, &random_rotation(dim, rot));
        prop_assert!((c.hamiltonian() - r.hamiltonian()).abs() < 1e-9);

        let sub = ModelParams::new(dim, 0.5 * dim as f64, n).unwrap();
        let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (a, b) = (norm(w_subcritical(&c, &sub).unwrap()), norm(w_subcritical(&r, &sub).unwrap()));
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));

        let sup = ModelParams::new(dim, 2.0 * dim as f64, n).unwrap();
        let bstar = solve_fixed_point(dim, sup.beta).unwrap();
        let (a, b) = (w_supercritical(&c, &sup, bstar).unwrap(), w_supercritical(&r, &sup, bstar).unwrap());
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));

        let (a, b) = (w_critical(&c, 2.5), w_critical(&r, 2.5));
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn bessel_recurrence(nu in order(), x in 0.01f64..50.0) {
        prop_assume!(nu.twice() >= 2);
        let v: f64 = nu.value();
        let lo: f64 = bessel_i(BesselOrder::from_twice(nu.twice() - 2), x).unwrap();
        let mid: f64 = bessel_i(nu, x).unwrap();
        let hi: f64 = bessel_i(nu.shifted(1), x).unwrap();
        let residual = lo - hi - 2.0 * v / x * mid;
        let scale = lo.abs().max(hi.abs()).max(2.0 * v / x * mid);
        prop_assert!(residual.abs() <= 1e-10 * scale, "nu = {v}, x = {x}, rel = {}", residual / scale);
    }

    #[test]
    fn bessel_ratio_matches_quotient(nu in order(), x in 0.01f64..50.0) {
        let r: f64 = bessel_ratio_order(nu, x).unwrap();
        let q = bessel_i::<f64>(nu.shifted(1), x).unwrap() / bessel_i::<f64>(nu, x).unwrap();
        prop_assert!((r - q).abs() <= 1e-12 * q, "rel = {}", (r - q) / q);
        prop_assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn bessel_ratio_is_increasing(dim in 2usize..=8, x in 0.0f64..80.0, dx in 1e-3f64..5.0) {
        let a: f64 = bessel_ratio(dim, x).unwrap();
        let b: f64 = bessel_ratio(dim, x + dx).unwrap();
        prop_assert!(b > a);
        prop_assert!(a <= x / dim as f64 + 1e-15);
    }

    #[test]
    fn incomplete_gamma_against_statrs(a in 0.1f64..20.0, x in 0.0f64..60.0) {
        let ours: f64 = gamma_p(a, x);
        let theirs = statrs::function::gamma::gamma_lr(a, x);
        prop_assert!((ours - theirs).abs() < 1e-12, "{ours} vs {theirs}");
        let lg: f64 = ln_gamma(a);
        prop_assert!((lg - statrs::function::gamma::ln_gamma(a)).abs() < 1e-12 * lg.abs().max(1.0));
    }

    #[test]
    fn vmf_draws_lie_on_sphere(dim in 2usize..=6, kappa in 0.0f64..200.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = uniform_sphere::<f64, _>(dim, &mut rng);
        let x = vmf_sample(&mu, kappa, &mut rng).unwrap();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_invariant_w1_equivariant_under_affine_maps(seed: u64, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..500).map(|_| 0.3 + 1.7 * f64::standard_normal(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let k0 = ks_distance(&xs, normal_cdf).unwrap();
        let k1 = ks_distance(&ys, |y: f64| normal_cdf((y - shift) / scale)).unwrap();
        prop_assert!((k0 - k1).abs() < 1e-9);
        let q = |p: f64| mfon_core::specfun::normal_quantile(p);
        let w0 = wasserstein1(&xs, q).unwrap();
        let w1 = wasserstein1(&ys, |p: f64| scale * q(p) + shift).unwrap();
        prop_assert!((w1 - scale * w0).abs() < 1e-9 * (1.0 + w1));
    }

    #[test]
    fn phi_decreases_then_increases(dim in 2usize..=5, beta_frac in 0.1f64..3.0, r in 1e-3f64..30.0) {
        let beta = beta_frac * dim as f64;
        let b = solve_fixed_point(dim, beta).unwrap();
        let d: f64 = phi_derivative(dim, beta, r).unwrap();
        prop_assume!((r - b).abs() > 1e-6);
        prop_assert_eq!(d > 0.0, r > b, "beta = {}, b = {}, r = {}, phi' = {}", beta, b, r, d);
        prop_assert!(phi(dim, beta, r).unwrap() >= free_energy(dim, beta).unwrap() - 1e-12);
        prop_assert!(rate_function(dim, beta, r).unwrap() >= 0.0);
    }

    #[test]
    fn critical_cdf_is_monotone(dim in 2usize..=6, t in 0.0f64..60.0, dt in 1e-3f64..10.0) {
        let d = CriticalDensity::<f64>::new(dim).unwrap();
        prop_assert!(d.cdf(t + dt) >= d.cdf(t));
        prop_assert!(d.pdf(t) >= 0.0);
    }
}

#[test]
fn normal_cdf_against_statrs_and_frozen_tails() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    for i in -80..=80 {
        let x = i as f64 / 10.0;
        let ours: f64 = normal_cdf(x);
        assert!((ours - n.cdf(x)).abs() <= 1e-9 * n.cdf(x), "x = {x}: {ours:e} vs {:e}", n.cdf(x));
    }
    // mpmath ncdf, 30 digits
    let frozen = [
        (-8.0, 6.22096057427178412351599517259e-16),
        (-4.7, 1.30080745391728092809370473472e-6),
        (-2.0, 0.0227501319481792072002826371665),
        (3.0, 0.998650101968369905473348185232),
    ];
    for (x, want) in frozen {
        let ours: f64 = normal_cdf(x);
        assert!((ours - want).abs() <= 1e-13 * want, "x = {x}: {ours:e} vs {want:e}");
    }
}
