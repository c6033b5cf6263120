use qpvp::drivers::{poisson_pivot, simulate, simulate_poisson_events, simulate_with, uniformize, DriverSpec, TimeGrid, VgScheme};
use qpvp::numerics::TimeFn;
use qpvp::stats::{ks_critical_one_sample, ks_critical_two_sample, ks_one_sample, ks_two_sample, mean_se, moments};

fn grid(times: &[f64]) -> TimeGrid {
    TimeGrid::new(times.to_vec()).unwrap()
}

#[test]
fn brownian_unit_time_moments() {
    let ens = simulate(&DriverSpec::standard_brownian(), &grid(&[1.0]), 1_000_000, 17).unwrap();
    let m = moments(&ens.column(0));
    assert!(m.mean.abs() < 4e-3, "{}", m.mean);
    assert!((m.variance - 1.0).abs() < 0.01, "{}", m.variance);
}

#[test]
fn ou_variance_at_two() {
    let d = DriverSpec::ou_constant(1.0, 0.0, 1.0, 0.0);
    let ens = simulate(&d, &grid(&[0.5, 1.0, 2.0]), 200_000, 3).unwrap();
    let want = (1.0 - (-4.0f64).exp()) / 2.0;
    let got = moments(&ens.column(2)).variance;
    assert!((got - want).abs() < 0.01 * want, "{got} vs {want}");
    assert!((d.marginal_cdf(2.0, 0.0).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn vg_variance_and_schemes_agree() {
    let d = DriverSpec::VarianceGamma {
        mu: 0.0,
        sigma: 1.0,
        nu: 0.5,
    };
    let g = grid(&[1.0]);
    let a = simulate_with(&d, &g, 100_000, 5, VgScheme::GammaDifference).unwrap().column(0);
    let b = simulate_with(&d, &g, 100_000, 6, VgScheme::TimeChanged).unwrap().column(0);
    for xs in [&a, &b] {
        let v = moments(xs).variance;
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }
    assert!(ks_two_sample(&a, &b) < ks_critical_two_sample(a.len(), b.len()));
    assert!((d.marginal_cdf(1.0, 0.0).unwrap() - 0.5).abs() < 1e-8);
}

#[test]
fn vg_with_drift_has_mixture_variance() {
    let d = DriverSpec::VarianceGamma {
        mu: 0.4,
        sigma: 0.8,
        nu: 0.3,
    };
    let xs = simulate(&d, &grid(&[2.0]), 200_000, 8).unwrap().column(0);
    let m = moments(&xs);
    let (mean, var) = (0.4 * 2.0, 0.64 * 2.0 + 0.16 * 0.3 * 2.0);
    assert!((m.mean - mean).abs() < 0.01, "{}", m.mean);
    assert!((m.variance - var).abs() < 0.02 * var, "{}", m.variance);
}

#[test]
fn ou_ensemble_matches_marginal_law() {
    let d = DriverSpec::InhomogeneousOU {
        theta: TimeFn::linear(0.5, 0.3),
        mu: TimeFn::constant(0.2),
        sigma: TimeFn::linear(0.6, -0.1),
        y0: 1.0,
    };
    let times = [0.25, 0.75, 1.5, 3.0];
    let ens = simulate(&d, &grid(&times), 100_000, 11).unwrap();
    let crit = ks_critical_one_sample(ens.n_paths());
    for (k, &t) in times.iter().enumerate() {
        let ks = ks_one_sample(&ens.column(k), |y| d.marginal_cdf(t, y).unwrap());
        assert!(ks < crit, "t={t}: {ks} ≥ {crit}");
    }
}

#[test]
fn uniformized_columns_are_uniform() {
    let crit = ks_critical_one_sample(100_000);
    for (d, t) in [
        (DriverSpec::standard_brownian(), 1.0),
        (DriverSpec::ou_constant(0.7, -0.2, 0.5, 0.4), 0.5),
    ] {
        let ens = simulate(&d, &grid(&[t]), 100_000, 21).unwrap();
        let u = uniformize(&d, &ens).unwrap().column(0);
        assert!(u.iter().all(|&x| x > 0.0 && x < 1.0));
        let ks = ks_one_sample(&u, |x| x.clamp(0.0, 1.0));
        assert!(ks < crit, "{} {ks}", d.name());
    }
}

#[test]
fn grids_must_start_after_zero_for_laws() {
    let d = DriverSpec::standard_brownian();
    assert!(d.marginal_cdf(0.0, 0.0).is_err());
    assert!(TimeGrid::new(vec![1.0, 0.5]).is_err());
    assert!(simulate(&d, &grid(&[1.0]), 0, 1).is_err());
}

#[test]
fn same_seed_same_paths() {
    let d = DriverSpec::VarianceGamma {
        mu: 0.1,
        sigma: 0.9,
        nu: 0.2,
    };
    let g = grid(&[0.5, 1.0, 1.5]);
    let a = simulate(&d, &g, 1000, 99).unwrap();
    let b = simulate(&d, &g, 1000, 99).unwrap();
    let c = simulate(&d, &g, 1000, 100).unwrap();
    assert_eq!(a.paths, b.paths);
    assert_ne!(a.paths, c.paths);
}

#[test]
fn poisson_pivot_examples() {
    let constant = TimeFn::constant(2.0);
    let events = [0.3, 1.1, 2.5];
    let same = poisson_pivot(&constant, 2.0, &events).unwrap();
    for (a, b) in same.iter().zip(events) {
        assert!((a - b).abs() < 1e-10);
    }
    let ramp = TimeFn::linear(0.0, 2.0);
    let mapped = poisson_pivot(&ramp, 1.0, &[3.0]).unwrap();
    assert!((mapped[0] - 9.0).abs() < 1e-8, "{}", mapped[0]);
    assert!(poisson_pivot(&ramp, 1.0, &[]).unwrap().is_empty());
}

#[test]
fn pivoted_events_have_unit_exponential_gaps() {
    let ramp = TimeFn::linear(0.0, 2.0);
    let horizon = 300.0;
    let events = simulate_poisson_events(&ramp, horizon, None, 4).unwrap();
    assert!(events.len() > 50_000);
    let mapped = poisson_pivot(&ramp, 1.0, &events).unwrap();
    let gaps: Vec<f64> = std::iter::once(mapped[0]).chain(mapped.windows(2).map(|w| w[1] - w[0])).collect();
    let (m, se) = mean_se(&gaps);
    assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
    let ks = ks_one_sample(&gaps, |x| 1.0 - (-x.max(0.0)).exp());
    assert!(ks < ks_critical_one_sample(gaps.len()), "{ks}");
}

#[test]
fn gamma_process_moments() {
    let d = DriverSpec::GammaProcess {
        mean_rate: 1.5,
        variance_rate: 0.5,
    };
    let xs = simulate(&d, &grid(&[2.0]), 200_000, 2).unwrap().column(0);
    let m = moments(&xs);
    assert!((m.mean - 3.0).abs() < 0.01, "{}", m.mean);
    assert!((m.variance - 1.0).abs() < 0.02, "{}", m.variance);
    assert!(xs.iter().all(|&x| x >= 0.0));
}
