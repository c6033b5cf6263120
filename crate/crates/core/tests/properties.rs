use proptest::prelude::*;
use qpvp::copulas::{CopulaSpec, KendallFunction};
use qpvp::dominance::{fosd_check, sosd_check, Direction, Order};
use qpvp::drivers::DriverSpec;
use qpvp::transforms::{quantile_cdf, quantile_eval, CompositeMap, DistributionSpec, MapMode, QuantileSpec};
use qpvp::valuation::{price_ordering, McSettings, Payoff, ValuationRequest};

const WHOLE_LINE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

fn quantile() -> impl Strategy<Value = QuantileSpec> {
    prop_oneof![
        (-2.0..2.0f64, 0.1..3.0f64, -1.5..1.5f64).prop_map(|(a, b, g)| QuantileSpec::tukey_g(a, b, g)),
        (-2.0..2.0f64, 0.1..3.0f64, -1.5..1.5f64, 0.0..0.5f64).prop_map(|(a, b, g, h)| QuantileSpec::tukey_gh(a, b, g, h)),
        (-2.0..2.0f64, 0.05..4.0f64).prop_map(|(m, v)| QuantileSpec::gaussian(m, v)),
    ]
}

fn copula() -> impl Strategy<Value = CopulaSpec> {
    prop_oneof![
        (2usize..5).prop_map(CopulaSpec::independence),
        (2usize..5).prop_map(CopulaSpec::comonotone),
        (2usize..4, 0.1..6.0f64).prop_map(|(d, t)| CopulaSpec::clayton(d, t)),
        (2usize..4, 1.0..6.0f64).prop_map(|(d, t)| CopulaSpec::gumbel(d, t)),
        (-0.9..0.9f64).prop_map(CopulaSpec::gaussian2),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantiles_are_monotone(q in quantile(), u1 in 0.001..0.999f64, u2 in 0.001..0.999f64, t in 0.1..3.0f64) {
        let (lo, hi) = if u1 < u2 { (u1, u2) } else { (u2, u1) };
        prop_assert!(quantile_eval(&q, t, lo) <= quantile_eval(&q, t, hi));
    }

    #[test]
    fn quantile_cdf_inverts_eval(q in quantile(), u in 0.001..0.999f64) {
        let back = quantile_cdf(&q, 1.0, quantile_eval(&q, 1.0, u)).unwrap();
        prop_assert!((back - u).abs() < 1e-8, "u={} back={}", u, back);
    }

    #[test]
    fn first_order_implies_second_order(q1 in quantile(), q2 in quantile()) {
        let (a1, a2) = (q1.at(1.0), q2.at(1.0));
        let f1 = |z: f64| a1.cdf(z);
        let f2 = |z: f64| a2.cdf(z);
        let first = fosd_check(&f1, &f2, WHOLE_LINE, 128).unwrap();
        if first.order == Order::FOSD && first.full_domain && !first.inconclusive {
            let second = sosd_check(&f1, &f2, WHOLE_LINE, 128).unwrap();
            prop_assert_ne!(second.order, Order::None);
            prop_assert_eq!(second.direction, first.direction);
        }
    }

    #[test]
    fn copula_boundaries(c in copula(), v in 0.0..1.0f64, pos in 0usize..4) {
        let d = c.dim();
        let mut u = vec![1.0; d];
        u[pos % d] = v;
        prop_assert!((c.eval(0.0, &u).unwrap() - v).abs() < 1e-5);
        u[(pos + 1) % d] = 0.0;
        prop_assert_eq!(c.eval(0.0, &u).unwrap(), 0.0);
    }

    #[test]
    fn kendall_dominates_the_diagonal(c in copula(), v in 0.01..0.99f64) {
        let k = KendallFunction::new(&c, 0.0, 20_000, 1).unwrap();
        let (val, se) = k.eval_with_se(v);
        prop_assert!(val >= v - 4.0 * se.unwrap_or(0.0) - 1e-12, "K({})={}", v, val);
    }
}

fn payoff() -> impl Strategy<Value = Payoff> {
    prop_oneof![
        Just(Payoff::Linear),
        (0.1..1.0f64, 0.5..3.0f64).prop_map(|(a, w)| Payoff::Layer { a, b: a + w }),
        (0.0..1.0f64, 0.5..3.0f64).prop_map(|(a, b)| Payoff::StopLoss { a, b }),
        (0.2..1.0f64).prop_map(|gamma| Payoff::PowerUtility { gamma }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dominance_orders_prices(g1 in 0.05..1.0f64, gap in 0.1..0.8f64, v in payoff(), seed in 0u64..1000) {
        let req = |g: f64| {
            let map = CompositeMap::new(
                DistributionSpec::driver(DriverSpec::standard_brownian()),
                QuantileSpec::tukey_g(0.0, 1.0, g),
                MapMode::TrueLaw,
            );
            ValuationRequest::new(DriverSpec::standard_brownian(), map, v.clone(), 1.0, McSettings::new(5000, seed))
        };
        let verdict = price_ordering(&req(g1 + gap), &req(g1)).unwrap();
        prop_assert_eq!(verdict.fosd.direction, Direction::FirstDominates);
        prop_assert!(!verdict.inconsistent);
        prop_assert!(verdict.difference >= -1e-12, "{}", verdict.difference);
    }
}
