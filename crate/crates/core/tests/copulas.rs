use qpvp::copulas::{
    apply_multi_composite, kendall_function, multi_distorted_cdf, multi_layer_premium, multi_rn_derivative, simulate_joint,
    CopulaSpec, JointMode, KendallFunction, MultiCompositeMap,
};
use qpvp::dominance::{fosd_check, Direction, Order};
use qpvp::drivers::{DriverSpec, TimeGrid};
use qpvp::measures::MoneyMarket;
use qpvp::numerics::{integrate, norm_pdf, QuadOptions};
use qpvp::stats::{ks_critical_one_sample, ks_one_sample, mean_se};
use qpvp::transforms::{DistributionSpec, QuantileSpec};
use qpvp::valuation::{quantile_integral_price, McSettings, Payoff};

fn brownians(m: usize) -> Vec<DriverSpec> {
    vec![DriverSpec::standard_brownian(); m]
}

fn joint_map(copula: CopulaSpec, quantile: QuantileSpec, mode: JointMode) -> MultiCompositeMap {
    let m = copula.dim();
    MultiCompositeMap {
        margins: brownians(m).into_iter().map(DistributionSpec::driver).collect(),
        copula,
        quantile,
        mode,
    }
}

#[test]
fn clayton_sample_frequencies() {
    let c = CopulaSpec::clayton(2, 2.0);
    let draws = c.sample(0.0, 200_000, 51).unwrap();
    for (a, b) in [(0.3, 0.6), (0.5, 0.5), (0.8, 0.2)] {
        let hits: Vec<f64> = draws.iter().map(|u| f64::from(u8::from(u[0] <= a && u[1] <= b))).collect();
        let (p, se) = mean_se(&hits);
        let want = c.eval(0.0, &[a, b]).unwrap();
        assert!((p - want).abs() < 4.0 * se, "({a},{b}): {p} vs {want}");
    }
}

#[test]
fn boundary_conditions() {
    let specs = [
        CopulaSpec::independence(2),
        CopulaSpec::clayton(2, 0.7),
        CopulaSpec::gumbel(2, 3.0),
        CopulaSpec::gaussian2(-0.6),
        CopulaSpec::gaussian(vec![vec![1.0, 0.5, 0.1], vec![0.5, 1.0, -0.2], vec![0.1, -0.2, 1.0]]),
    ];
    for c in &specs {
        let d = c.dim();
        for v in [0.1, 0.45, 0.9] {
            let mut u = vec![1.0; d];
            u[d - 1] = v;
            assert!((c.eval(0.0, &u).unwrap() - v).abs() < 1e-6, "{} at {v}", c.family());
            u[0] = 0.0;
            assert_eq!(c.eval(0.0, &u).unwrap(), 0.0);
        }
    }
}

#[test]
fn independent_pair_output_follows_kendall_law() {
    let grid = TimeGrid::new(vec![1.0]).unwrap();
    let n = 100_000;
    for (c, k) in [
        (CopulaSpec::independence(2), Box::new(|v: f64| v - v * v.ln()) as Box<dyn Fn(f64) -> f64>),
        (CopulaSpec::comonotone(2), Box::new(|v: f64| v)),
    ] {
        let ens = simulate_joint(&brownians(2), &c, &grid, None, n, 52).unwrap();
        let map = joint_map(c.clone(), QuantileSpec::uniform(), JointMode::TrueJointLaw);
        let z = apply_multi_composite(&map, &ens).unwrap().column(0);
        let ks = ks_one_sample(&z, |v| if v <= 0.0 { 0.0 } else if v >= 1.0 { 1.0 } else { k(v) });
        assert!(ks < ks_critical_one_sample(n), "{}: {ks}", c.family());
    }
}

#[test]
fn single_margin_reduces_to_the_one_dimensional_map() {
    let map = joint_map(CopulaSpec::independence(1), QuantileSpec::tukey_g(0.0, 1.0, 0.5), JointMode::TrueJointLaw);
    let grid = TimeGrid::new(vec![1.0]).unwrap();
    let ens = simulate_joint(&brownians(1), &CopulaSpec::independence(1), &grid, None, 1000, 53).unwrap();
    let z = apply_multi_composite(&map, &ens).unwrap();
    for (y, z) in ens[0].paths.iter().zip(&z.paths) {
        let want = ((0.5 * y[0]).exp() - 1.0) / 0.5;
        assert!((z[0] - want).abs() < 1e-9 * (1.0 + want.abs()));
    }
}

#[test]
fn kendall_closed_forms_agree_with_sampling() {
    for c in [CopulaSpec::clayton(2, 2.0), CopulaSpec::gumbel(2, 2.0), CopulaSpec::independence(3)] {
        let closed = KendallFunction::new(&c, 0.0, 0, 0).unwrap();
        let emp = KendallFunction::empirical(&c, 0.0, 100_000, 54).unwrap();
        for i in 1..10 {
            let v = i as f64 / 10.0;
            let k = closed.eval(v);
            assert!(k >= v - 1e-15);
            let (e, se) = emp.eval_with_se(v);
            assert!((e - k).abs() < 4.0 * se.unwrap(), "{} v={v}: {e} vs {k}", c.family());
        }
    }
    let kv = kendall_function(&CopulaSpec::independence(2), 0.0, 0.5, 0, 0).unwrap();
    assert!((kv.value - (0.5 + 0.5 * 2f64.ln())).abs() < 1e-15);
    assert!(kv.std_error.is_none());
}

#[test]
fn joint_cdf_with_uniform_quantile() {
    let map = joint_map(CopulaSpec::independence(2), QuantileSpec::uniform(), JointMode::TrueJointLaw);
    for z in [0.05, 0.3, 0.7, 0.99] {
        let got = multi_distorted_cdf(&map, 1.0, z).unwrap();
        assert!((got - (z - z * z.ln())).abs() < 1e-12);
    }
    let fl = joint_map(CopulaSpec::independence(2), QuantileSpec::uniform(), JointMode::FalseLaw);
    assert!(multi_distorted_cdf(&fl, 1.0, 0.5).is_err());
}

fn premium(c: CopulaSpec, mode: JointMode, payoff: &Payoff) -> (f64, f64) {
    let map = joint_map(c.clone(), QuantileSpec::tukey_g(0.0, 1.0, 0.5), mode);
    let r = multi_layer_premium(&map, &brownians(2), &c, 0, payoff, 1.0, &MoneyMarket::constant(0.0), McSettings::new(200_000, 55))
        .unwrap();
    (r.price, r.std_error)
}

fn kendall_weighted(payoff: &Payoff, k: &KendallFunction) -> f64 {
    let q = QuantileSpec::tukey_g(0.0, 1.0, 0.5);
    integrate(|v| payoff.eval(q.eval(1.0, v)) * k.derivative(v).unwrap(), 0.0, 1.0, QuadOptions::abs(1e-10))
        .unwrap()
        .value
}

#[test]
fn premiums_against_kendall_integrals() {
    let layer = Payoff::Layer { a: 0.5, b: 2.0 };
    let (p, se) = premium(CopulaSpec::comonotone(2), JointMode::TrueJointLaw, &layer);
    let one_dim = qpvp::transforms::CompositeMap::new(
        DistributionSpec::driver(DriverSpec::standard_brownian()),
        QuantileSpec::tukey_g(0.0, 1.0, 0.5),
        qpvp::transforms::MapMode::TrueLaw,
    );
    let want = quantile_integral_price(&one_dim, &layer, 1.0, &MoneyMarket::constant(0.0)).unwrap();
    assert!((p - want).abs() < 3.0 * se, "{p} vs {want}");

    let indep = CopulaSpec::independence(2);
    let (p, se) = premium(indep.clone(), JointMode::TrueJointLaw, &layer);
    let want = kendall_weighted(&layer, &KendallFunction::new(&indep, 1.0, 0, 0).unwrap());
    assert!((p - want).abs() < 3.0 * se, "{p} vs {want}");

    let mut prev = f64::NEG_INFINITY;
    for theta in [0.5, 1.0, 2.0, 4.0] {
        let c = CopulaSpec::clayton(2, theta);
        let (p, se) = premium(c.clone(), JointMode::FalseLaw, &layer);
        let want = kendall_weighted(&layer, &KendallFunction::new(&c, 1.0, 0, 0).unwrap());
        assert!((p - want).abs() < 3.0 * se, "θ={theta}: {p} vs {want}");
        assert!(p > prev);
        prev = p;
    }
}

#[test]
fn joint_rn_derivative() {
    let base = DriverSpec::standard_brownian();
    let como = joint_map(CopulaSpec::comonotone(2), QuantileSpec::gaussian(0.0, 1.0), JointMode::TrueJointLaw);
    for y in [-2.0, 0.0, 1.3] {
        assert!((multi_rn_derivative(&como, 1.0, y, &base).unwrap() - 1.0).abs() < 1e-12);
    }

    let indep = joint_map(CopulaSpec::independence(2), QuantileSpec::gaussian(0.3, 0.8), JointMode::TrueJointLaw);
    let total = integrate(
        |y| multi_rn_derivative(&indep, 1.0, y, &base).unwrap() * norm_pdf(y),
        f64::NEG_INFINITY,
        f64::INFINITY,
        QuadOptions::abs(1e-10),
    )
    .unwrap()
    .value;
    assert!((total - 1.0).abs() < 1e-6, "{total}");

    let h = 1e-4;
    for y in [-1.0, 0.2, 1.5] {
        let fd = (multi_distorted_cdf(&indep, 1.0, y + h).unwrap() - multi_distorted_cdf(&indep, 1.0, y - h).unwrap()) / (2.0 * h);
        let rho = multi_rn_derivative(&indep, 1.0, y, &base).unwrap() * norm_pdf(y);
        assert!((rho - fd).abs() < 1e-4 * fd, "y={y}: {rho} vs {fd}");
    }
}

#[test]
fn kendall_order_carries_to_the_outputs() {
    let q = QuantileSpec::tukey_g(0.0, 1.0, 0.5);
    let como = joint_map(CopulaSpec::comonotone(2), q.clone(), JointMode::TrueJointLaw);
    let indep = joint_map(CopulaSpec::independence(2), q, JointMode::TrueJointLaw);
    let rep = fosd_check(
        &|z| multi_distorted_cdf(&como, 1.0, z),
        &|z| multi_distorted_cdf(&indep, 1.0, z),
        (f64::NEG_INFINITY, f64::INFINITY),
        256,
    )
    .unwrap();
    assert_eq!(rep.order, Order::FOSD);
    assert_eq!(rep.direction, Direction::FirstDominates);
}
