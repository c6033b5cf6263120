use qpvp::drivers::{simulate, uniformize, DriverSpec, TimeGrid};
use qpvp::numerics::{norm_cdf, norm_ppf, TimeFn};
use qpvp::stats::{batch_means, ks_critical_one_sample, ks_one_sample, moments};
use qpvp::transforms::{
    apply_composite, build_pivot, pivot_gaussian_tukey_g_params, quantile_cdf, quantile_eval, tukey_g_gaussian_moments,
    CompositeMap, DistributionSpec, MapMode, QuantileSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quantile_eval_examples() {
    let gh = QuantileSpec::tukey_gh(0.0, 1.0, 2.0, 0.4);
    assert_eq!(quantile_eval(&gh, 1.0, 0.5), 0.0);
    let plain = QuantileSpec::tukey_gh(0.0, 1.0, 0.0, 0.0);
    assert!((quantile_eval(&plain, 1.0, norm_cdf(1.0)) - 1.0).abs() < 1e-12);
    let g = QuantileSpec::tukey_g(0.0, 1.0, 0.3);
    let want = (0.3f64.exp() - 1.0) / 0.3;
    assert!((quantile_eval(&g, 1.0, norm_cdf(1.0)) - want).abs() < 1e-12);
    assert!((want - 1.1661960).abs() < 1e-7);
    assert_eq!(quantile_eval(&gh, 1.0, 0.0), f64::NEG_INFINITY);
    assert_eq!(quantile_eval(&gh, 1.0, 1.0), f64::INFINITY);
    assert!((quantile_eval(&g, 1.0, 0.0) + 1.0 / 0.3).abs() < 1e-12);
}

#[test]
fn quantile_cdf_examples_and_round_trip() {
    let gh = QuantileSpec::tukey_gh(0.0, 1.0, 2.0, 0.4);
    assert!((quantile_cdf(&gh, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-12);
    let g = QuantileSpec::tukey_g(0.0, 1.0, 0.3);
    assert_eq!(quantile_cdf(&g, 1.0, -1.0 / 0.3).unwrap(), 0.0);
    assert_eq!(quantile_cdf(&g, 1.0, -5.0).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in [gh, g, QuantileSpec::gaussian(0.3, 2.0), QuantileSpec::tukey_gh(-1.0, 0.5, -0.7, 0.15)] {
        for _ in 0..100 {
            let u: f64 = rng.random_range(0.001..0.999);
            let back = quantile_cdf(&spec, 1.0, quantile_eval(&spec, 1.0, u)).unwrap();
            assert!((back - u).abs() < 1e-9, "{} u={u} back={back}", spec.family());
        }
    }
}

#[test]
fn canonical_brownian_composite_closed_form() {
    let (a, b, g, h) = (0.5, 1.5, 0.8, 0.1);
    let map = CompositeMap::canonical_brownian(QuantileSpec::tukey_gh(a, b, g, h));
    let times = [0.25, 1.0, 2.5];
    let ens = simulate(&DriverSpec::standard_brownian(), &TimeGrid::new(times.to_vec()).unwrap(), 2000, 4).unwrap();
    let z = apply_composite(&map, &ens).unwrap();
    assert_eq!(z.n_paths(), ens.n_paths());
    assert_eq!(z.grid, ens.grid);
    for (yp, zp) in ens.paths.iter().zip(&z.paths) {
        for (k, &t) in times.iter().enumerate() {
            let x = yp[k] / t.sqrt();
            let want = a + (b / g) * (g * x).exp_m1() * (0.5 * h * x * x).exp();
            assert!((zp[k] - want).abs() < 1e-10 * (1.0 + want.abs()), "{} vs {want}", zp[k]);
        }
    }
}

#[test]
fn ou_true_law_composite_uses_normal_scores() {
    let d = DriverSpec::ou_constant(0.8, 0.5, 0.6, -0.3);
    let (a, b, g, h) = (0.0, 1.0, 0.6, 0.2);
    let map = CompositeMap::new(
        DistributionSpec::driver(d.clone()),
        QuantileSpec::tukey_gh(a, b, g, h),
        MapMode::TrueLaw,
    );
    let ens = simulate(&d, &TimeGrid::new(vec![0.5, 2.0]).unwrap(), 1000, 7).unwrap();
    let u = uniformize(&d, &ens).unwrap();
    let z = apply_composite(&map, &ens).unwrap();
    for (up, zp) in u.paths.iter().zip(&z.paths) {
        for k in 0..2 {
            let x = norm_ppf(up[k]);
            let want = a + (b / g) * (g * x).exp_m1() * (0.5 * h * x * x).exp();
            assert!((zp[k] - want).abs() < 1e-8 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn true_law_output_uniformizes() {
    let d = DriverSpec::ou_constant(0.4, 0.0, 1.2, 0.5);
    let q = QuantileSpec::tukey_gh(0.2, 0.7, -0.4, 0.1);
    let map = CompositeMap::new(DistributionSpec::driver(d.clone()), q.clone(), MapMode::TrueLaw);
    let ens = simulate(&d, &TimeGrid::new(vec![1.0]).unwrap(), 100_000, 9).unwrap();
    let z = apply_composite(&map, &ens).unwrap().column(0);
    let u: Vec<f64> = z.iter().map(|&v| quantile_cdf(&q, 1.0, v).unwrap()).collect();
    let ks = ks_one_sample(&u, |x| x.clamp(0.0, 1.0));
    assert!(ks < ks_critical_one_sample(u.len()), "{ks}");
}

#[test]
fn pivot_standardizes_ou() {
    let d = DriverSpec::ou_constant(0.5, 0.3, 0.4, 0.1);
    let (pivot, reference) = build_pivot(&d).unwrap();
    assert_eq!(reference.family(), "Gaussian");
    let ens = simulate(&d, &TimeGrid::new(vec![0.5, 2.0]).unwrap(), 100_000, 12).unwrap();
    let std = pivot.apply(&ens).unwrap();
    let crit = ks_critical_one_sample(ens.n_paths());
    for k in 0..2 {
        assert!(ks_one_sample(&std.column(k), norm_cdf) < crit);
    }
    assert!(build_pivot(&DriverSpec::GammaProcess {
        mean_rate: 1.0,
        variance_rate: 1.0
    })
    .is_err());
}

#[test]
fn pivot_tukey_g_reparameterization_matches_pathwise() {
    let d = DriverSpec::ou_constant(0.5, 0.3, 0.4, 0.1);
    let (a, b, g, m, v) = (0.2, 1.3, 0.7, -0.4, 1.6);
    let map = CompositeMap::new(DistributionSpec::gaussian(m, v), QuantileSpec::tukey_g(a, b, g), MapMode::Pivot);
    let times = [0.5, 1.0, 2.0];
    let ens = simulate(&d, &TimeGrid::new(times.to_vec()).unwrap(), 1000, 13).unwrap();
    let z = apply_composite(&map, &ens).unwrap();
    let (d1, d2) = (d.clone(), d.clone());
    let direct = pivot_gaussian_tukey_g_params(
        a.into(),
        b.into(),
        g.into(),
        m.into(),
        v.into(),
        TimeFn::custom(move |t| d1.gaussian_moments(t).unwrap().0),
        TimeFn::custom(move |t| d2.gaussian_moments(t).unwrap().1),
    )
    .unwrap();
    for (yp, zp) in ens.paths.iter().zip(&z.paths) {
        for (k, &t) in times.iter().enumerate() {
            let want = direct.eval(t, yp[k]).unwrap();
            assert!((zp[k] - want).abs() < 1e-10 * (1.0 + want.abs()), "{} vs {want}", zp[k]);
        }
    }
}

#[test]
fn moment_formulas() {
    let f = tukey_g_gaussian_moments(0.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    assert!((f.mean - (0.125f64.exp() - 1.0) / 0.5).abs() < 1e-14);
    assert!((f.mean - 0.2662969).abs() < 1e-7);
    let shifted = tukey_g_gaussian_moments(3.0, 2.5, 0.5, 0.0, 1.0).unwrap();
    assert!((shifted.skewness - f.skewness).abs() < 1e-14);
    assert!((shifted.excess_kurtosis - f.excess_kurtosis).abs() < 1e-14);
    assert!(tukey_g_gaussian_moments(0.0, 1.0, 0.0, 0.0, 1.0).is_err());
}

#[test]
fn brownian_pivot_moments_match_formulas() {
    let map = CompositeMap::new(
        DistributionSpec::gaussian(0.0, 1.0),
        QuantileSpec::tukey_g(0.0, 1.0, 0.5),
        MapMode::Pivot,
    );
    let ens = simulate(&DriverSpec::standard_brownian(), &TimeGrid::new(vec![1.0]).unwrap(), 1_000_000, 14).unwrap();
    let z = apply_composite(&map, &ens).unwrap().column(0);
    let f = tukey_g_gaussian_moments(0.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let (mean, se) = batch_means(&z, 100, |x| moments(x).mean);
    assert!((mean - f.mean).abs() < 3.0 * se);
    let (var, se) = batch_means(&z, 100, |x| moments(x).variance);
    assert!((var - f.variance).abs() < 3.0 * se);
}

#[test]
fn identity_composite_on_drifting_brownian() {
    let d = DriverSpec::Brownian {
        drift: TimeFn::constant(-0.2),
        volatility: TimeFn::linear(0.5, 0.2),
        y0: 2.0,
    };
    let map = CompositeMap::new(
        DistributionSpec::driver(d.clone()),
        QuantileSpec::driver_marginal(&d).unwrap(),
        MapMode::TrueLaw,
    );
    let ens = simulate(&d, &TimeGrid::new(vec![0.3, 1.0, 4.0]).unwrap(), 5000, 15).unwrap();
    let z = apply_composite(&map, &ens).unwrap();
    for (a, b) in ens.paths.iter().flatten().zip(z.paths.iter().flatten()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn continuity_survives_grid_refinement() {
    let d = DriverSpec::standard_brownian();
    let map = CompositeMap::canonical_brownian(QuantileSpec::tukey_gh(0.0, 1.0, 0.5, 0.1));
    let mut ratios = Vec::new();
    let mut jumps = Vec::new();
    for refine in [1usize, 2, 4] {
        let n = 50 * refine;
        let times: Vec<f64> = (0..=n).map(|i| 0.5 + i as f64 / n as f64).collect();
        let ens = simulate(&d, &TimeGrid::new(times).unwrap(), 2000, 16).unwrap();
        let z = apply_composite(&map, &ens).unwrap();
        let max_jump = |paths: &Vec<Vec<f64>>| {
            let per_path: Vec<f64> = paths
                .iter()
                .map(|p| p.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max))
                .collect();
            per_path.iter().sum::<f64>() / per_path.len() as f64
        };
        let (jy, jz) = (max_jump(&ens.paths), max_jump(&z.paths));
        jumps.push(jz);
        ratios.push(jz / jy);
    }
    assert!(jumps[0] > jumps[1] && jumps[1] > jumps[2], "{jumps:?}");
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo < 1.5, "{ratios:?}");
}
