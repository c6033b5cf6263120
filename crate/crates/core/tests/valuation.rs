use qpvp::dominance::crossing_u_star;
use qpvp::drivers::DriverSpec;
use qpvp::measures::MoneyMarket;
use qpvp::numerics::{integrate, norm_cdf, norm_pdf, QuadOptions};
use qpvp::transforms::{CompositeMap, DistributionSpec, MapMode, QuantileSpec};
use qpvp::valuation::{
    carbon_tariff_table, nested_price, price_ordering, qpvp_price, quantile_integral_price, risk_loading_check, Exporter,
    McSettings, Payoff, ValuationRequest,
};

fn brownian() -> DriverSpec {
    DriverSpec::standard_brownian()
}

fn true_law(q: QuantileSpec) -> CompositeMap {
    CompositeMap::new(DistributionSpec::driver(brownian()), q, MapMode::TrueLaw)
}

fn request(q: QuantileSpec, payoff: Payoff, u: f64, n: usize, seed: u64) -> ValuationRequest {
    ValuationRequest::new(brownian(), true_law(q), payoff, u, McSettings::new(n, seed))
}

#[test]
fn layer_price_matches_quantile_integral() {
    let q = QuantileSpec::tukey_g(0.0, 1.0, 0.5);
    let layer = Payoff::Layer { a: 1.0, b: 2.0 };
    let req = request(q.clone(), layer.clone(), 1.0, 400_000, 41);
    let mc = qpvp_price(&req).unwrap();
    let exact = quantile_integral_price(&req.map, &layer, 1.0, &req.rate).unwrap();
    assert!((mc.price - exact).abs() < 3.0 * mc.std_error, "{} vs {exact}", mc.price);

    let mut disc = req.clone();
    disc.rate = MoneyMarket::constant(0.05);
    let d = qpvp_price(&disc).unwrap();
    assert!((d.price / mc.price - (-0.05f64).exp()).abs() < 1e-12);
}

#[test]
fn risk_loading_sign_follows_skewness() {
    for g in [0.5, -0.5] {
        let req = request(QuantileSpec::tukey_g(0.0, 1.0, g), Payoff::Linear, 1.0, 400_000, 42);
        let rl = risk_loading_check(&req).unwrap();
        let oracle = ((g * g / 2.0f64).exp() - 1.0) / g;
        assert!((rl.gap - oracle).abs() < 3.0 * rl.std_error, "g={g}: {} vs {oracle}", rl.gap);
        assert_eq!(rl.loaded, g > 0.0);
    }
}

#[test]
fn identical_maps_price_identically() {
    let q = QuantileSpec::tukey_gh(0.0, 1.0, 0.4, 0.1);
    let a = request(q.clone(), Payoff::StopLoss { a: 0.5, b: 2.0 }, 1.0, 10_000, 43);
    let v = price_ordering(&a, &a.clone()).unwrap();
    assert_eq!(v.difference, 0.0);
    assert!(!v.inconsistent);
}

#[test]
fn layer_above_the_crossing_is_priced_higher() {
    let (q1, q2) = (QuantileSpec::tukey_gh(0.0, 1.0, 2.0, 0.4), QuantileSpec::tukey_gh(0.0, 1.0, 0.8, 0.05));
    let z = crossing_u_star(&q1, &q2, 1.0).unwrap().z.unwrap();
    let a = z.max(0.0) + 1.0;
    let layer = Payoff::Layer { a, b: a + 5.0 };
    let r1 = request(q1, layer.clone(), 1.0, 100_000, 44);
    let r2 = request(q2, layer, 1.0, 100_000, 44);
    let v = price_ordering(&r1, &r2).unwrap();
    assert!(v.difference > 3.0 * v.std_error, "{} ± {}", v.difference, v.std_error);
}

#[test]
fn nested_price_agrees_with_direct_price() {
    let q = QuantileSpec::tukey_g(0.0, 1.0, 0.3);
    let mut req = request(q, Payoff::Layer { a: 0.5, b: 2.5 }, 2.0, 4000, 45);
    req.rate = MoneyMarket::constant(0.02);
    req.mc.n_inner = 500;
    let nested = nested_price(&req, 1.0).unwrap();
    let mut direct = req.clone();
    direct.mc = McSettings::new(400_000, 46);
    let d = qpvp_price(&direct).unwrap();
    let se = (nested.std_error.powi(2) + d.std_error.powi(2)).sqrt();
    assert!((nested.price - d.price).abs() < 3.0 * se, "{} vs {}", nested.price, d.price);
    assert!(nested_price(&req, 2.0).is_err());
}

#[test]
fn translation_and_scaling() {
    let (a, b, g, c, lambda) = (0.2, 1.1, 0.6, 0.75, 2.5);
    let price = |q: QuantileSpec, payoff: Payoff| {
        let mut r = request(q, payoff, 1.5, 20_000, 47);
        r.rate = MoneyMarket::constant(0.03);
        qpvp_price(&r).unwrap().price
    };
    let disc = (-0.03f64 * 1.5).exp();
    let base = price(QuantileSpec::tukey_g(a, b, g), Payoff::Linear);
    let shifted = price(QuantileSpec::tukey_g(a + c, b, g), Payoff::Linear);
    assert!((shifted - base - c * disc).abs() < 1e-10);
    let scaled = price(QuantileSpec::tukey_g(lambda * a, lambda * b, g), Payoff::Linear);
    assert!((scaled - lambda * base).abs() < 1e-10);
    let zero = Payoff::Table {
        x: vec![-1.0, 1.0],
        v: vec![0.0, 0.0],
    };
    assert_eq!(price(QuantileSpec::tukey_g(a, b, g), zero), 0.0);
}

#[test]
fn layers_add_up() {
    let q = QuantileSpec::tukey_gh(0.0, 1.0, 0.5, 0.1);
    let p = |a: f64, b: f64| qpvp_price(&request(q.clone(), Payoff::Layer { a, b }, 1.0, 20_000, 48)).unwrap().price;
    let whole = p(0.5, 3.0);
    let parts = p(0.5, 1.2) + p(1.2, 3.0);
    assert!((whole - parts).abs() < 1e-12);
}

fn exporter(name: &str, gamma: f64, g: f64) -> Exporter {
    Exporter {
        name: name.into(),
        gamma,
        g,
        driver: brownian(),
        a: 0.0,
        b: 1.0,
    }
}

#[test]
fn tariffs_rise_with_skewness_and_fall_with_shift() {
    let ex = vec![
        exporter("low", 0.0, 0.2),
        exporter("mid", 0.0, 0.5),
        exporter("high", 0.0, 0.9),
        exporter("shifted", 1.0, 0.5),
    ];
    let (cost, u, r) = (40.0, 1.0, 0.02);
    let table = carbon_tariff_table(&ex, cost, u, &MoneyMarket::constant(r), McSettings::new(200_000, 49)).unwrap();
    assert!(table.monotone_in_g);
    let get = |n: &str| table.rows.iter().find(|row| row.name == n).unwrap();
    assert!(get("low").price < get("mid").price && get("mid").price < get("high").price);
    assert!(get("shifted").price < get("mid").price);

    let disc = (-r * u).exp();
    for e in &ex {
        let q = QuantileSpec::tukey_g(e.a, e.b, e.g);
        let opts = QuadOptions::abs(1e-11);
        let integral = integrate(|y| q.eval(u, norm_cdf(y - e.gamma)) * norm_pdf(y), f64::NEG_INFINITY, f64::INFINITY, opts)
            .unwrap()
            .value;
        let want = cost * disc * integral;
        let row = get(&e.name);
        assert!((row.price - want).abs() < 3.0 * row.std_error, "{}: {} vs {want}", e.name, row.price);
        if e.gamma == 0.0 {
            let closed = cost * disc * ((e.g * e.g / 2.0).exp() - 1.0) / e.g;
            assert!((integral * cost * disc - closed).abs() < 1e-8);
        }
    }
    assert!(carbon_tariff_table(&ex[..1], cost, u, &MoneyMarket::constant(r), McSettings::new(1000, 1)).is_err());
}
