//! Numerical building blocks: Gaussian special functions, adaptive
//! Gauss–Kronrod quadrature, bracketed root finding and deterministic
//! functions of time.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

// Wichura (1988), algorithm AS 241, PPND16.
const AS241_A: [f64; 8] = [
    3.387_132_872_796_366_608e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const AS241_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const AS241_C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_9e0,
    5.769_497_221_460_691_405_5e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const AS241_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_4e0,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const AS241_E: [f64; 8] = [
    6.657_904_643_501_103_777_2e0,
    5.463_784_911_164_114_369_9e0,
    1.784_826_539_917_291_335_8e0,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const AS241_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Lower-half normal quantile (`p ≤ 0.5`), polished by one Halley step.
fn ppf_lower(p: f64) -> f64 {
    let q = p - 0.5;
    let mut x = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        q * poly(&AS241_A, r) / poly(&AS241_B, r)
    } else {
        let r = (-p.ln()).sqrt();
        if r <= 5.0 {
            let r = r - 1.6;
            -poly(&AS241_C, r) / poly(&AS241_D, r)
        } else {
            let r = r - 5.0;
            -poly(&AS241_E, r) / poly(&AS241_F, r)
        }
    };
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Standard normal quantile `√2·erf⁻¹(2u − 1)`; returns ∓∞ at 0 and 1.
pub fn norm_ppf(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    if u <= 0.5 {
        ppf_lower(u)
    } else {
        -ppf_lower(1.0 - u)
    }
}

/// Upper-tail quantile: `x` with `1 − Φ(x) = q`, exact for tiny `q`.
pub fn norm_isf(q: f64) -> f64 {
    -norm_ppf(q)
}

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn abs(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            ..Self::default()
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let fc = f(centr);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..3 {
        let jtw = 2 * j + 1;
        let absc = hlgth * XGK[jtw];
        let f1 = f(centr - absc);
        let f2 = f(centr + absc);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let absc = hlgth * XGK[jtwm1];
        let f1 = f(centr - absc);
        let f2 = f(centr + absc);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * hlgth;
    resabs *= hlgth.abs();
    resasc *= hlgth.abs();
    let mut error = ((resk - resg) * hlgth).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Segment { a, b, value, error }
}

fn adaptive_finite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut segments = vec![kronrod15(f, a, b)];
    let mut evaluations = 15;
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(Quadrature {
                value,
                error,
                evaluations,
            });
        }
        if segments.len() >= opts.max_intervals || !value.is_finite() {
            return Err(Error::numeric("adaptive quadrature", error));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval can no longer be split in floating point
            return Err(Error::numeric("adaptive quadrature (interval underflow)", error));
        }
        segments.push(kronrod15(f, seg.a, mid));
        segments.push(kronrod15(f, mid, seg.b));
        evaluations += 30;
    }
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`; either bound may
/// be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::param("quadrature bounds must not be NaN"));
    }
    if a > b {
        return integrate(f, b, a, opts).map(|q| Quadrature {
            value: -q.value,
            ..q
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_finite(&f, a, b, opts),
        (true, false) => {
            let g = |s: f64| {
                let x = a + (1.0 - s) / s;
                let v = f(x) / (s * s);
                if v.is_finite() { v } else { 0.0 }
            };
            adaptive_finite(&g, 0.0, 1.0, opts)
        }
        (false, true) => {
            let g = |s: f64| {
                let x = b - (1.0 - s) / s;
                let v = f(x) / (s * s);
                if v.is_finite() { v } else { 0.0 }
            };
            adaptive_finite(&g, 0.0, 1.0, opts)
        }
        (false, false) => {
            let g = |s: f64| {
                let x = (1.0 - s) / s;
                let v = (f(x) + f(-x)) / (s * s);
                if v.is_finite() { v } else { 0.0 }
            };
            adaptive_finite(&g, 0.0, 1.0, opts)
        }
    }
}

/// Integrate over consecutive breakpoints `[p0, p1], [p1, p2], ...` and sum.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], opts: QuadOptions) -> Result<Quadrature> {
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    for w in points.windows(2) {
        let q = integrate(&f, w[0], w[1], opts)?;
        total.value += q.value;
        total.error += q.error;
        total.evaluations += q.evaluations;
    }
    Ok(total)
}

/// Quadrature of a fallible integrand; the first error aborts the result.
pub fn try_integrate<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let g = |x: f64| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let q = integrate(g, a, b, opts);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    q
}

/// Brent's bracketed root finder (bisection / secant / inverse quadratic).
///
/// Requires `f(a)` and `f(b)` of opposite sign (or one of them zero).
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Numeric {
            context: format!("root not bracketed on [{a}, {b}]"),
            estimate: (b - a).abs(),
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::numeric("root finder hit NaN", (c - b).abs()));
        }
    }
    Err(Error::numeric("root finder exceeded iteration limit", (c - b).abs()))
}

/// Plain bisection for monotone predicates: returns the boundary point
/// between `pred == false` (at `lo`) and `pred == true` (at `hi`).
pub fn bisect_predicate<P: FnMut(f64) -> bool>(mut pred: P, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A deterministic function of time used for time-dependent parameters.
///
/// In configuration files a bare number is a constant; other shapes are
/// tables with a `kind` key.
#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeFn {
    Constant(f64),
    Shaped(Shape),
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Linear { intercept: f64, slope: f64 },
    Polynomial { coeffs: Vec<f64> },
    /// `level + amplitude * exp(-rate * t)`
    Exponential { level: f64, amplitude: f64, rate: f64 },
    /// `values[i]` on `[breaks[i-1], breaks[i])`, with `values.len() == breaks.len() + 1`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(c) => write!(f, "Constant({c})"),
            TimeFn::Shaped(s) => write!(f, "{s:?}"),
            TimeFn::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

impl From<f64> for TimeFn {
    fn from(c: f64) -> Self {
        TimeFn::Constant(c)
    }
}

impl TimeFn {
    pub fn constant(c: f64) -> Self {
        TimeFn::Constant(c)
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        TimeFn::Shaped(Shape::Linear { intercept, slope })
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        TimeFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Custom(f) => f(t),
            TimeFn::Shaped(s) => match s {
                Shape::Linear { intercept, slope } => intercept + slope * t,
                Shape::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
                Shape::Exponential { level, amplitude, rate } => level + amplitude * (-rate * t).exp(),
                Shape::Piecewise { breaks, values } => {
                    let idx = breaks.partition_point(|b| *b <= t);
                    values[idx.min(values.len() - 1)]
                }
            },
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeFn::Constant(c) => Some(*c),
            TimeFn::Shaped(Shape::Polynomial { coeffs }) if coeffs.len() <= 1 => {
                Some(coeffs.first().copied().unwrap_or(0.0))
            }
            _ => None,
        }
    }

    /// `∫_a^b f(s) ds`, in closed form where the shape allows it.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            TimeFn::Constant(c) => Ok(c * (b - a)),
            TimeFn::Shaped(Shape::Linear { intercept, slope }) => {
                Ok(intercept * (b - a) + 0.5 * slope * (b * b - a * a))
            }
            TimeFn::Shaped(Shape::Polynomial { coeffs }) => {
                let prim = |x: f64| {
                    coeffs
                        .iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc + c * x.powi(k as i32 + 1) / (k as f64 + 1.0))
                };
                Ok(prim(b) - prim(a))
            }
            TimeFn::Shaped(Shape::Exponential { level, amplitude, rate }) => {
                if *rate == 0.0 {
                    Ok((level + amplitude) * (b - a))
                } else {
                    Ok(level * (b - a) + amplitude * ((-rate * a).exp() - (-rate * b).exp()) / rate)
                }
            }
            TimeFn::Shaped(Shape::Piecewise { breaks, .. }) => {
                let mut knots = vec![a];
                knots.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
                knots.push(b);
                Ok(knots
                    .windows(2)
                    .map(|w| self.eval(0.5 * (w[0] + w[1])) * (w[1] - w[0]))
                    .sum())
            }
            TimeFn::Custom(_) => Ok(integrate(|s| self.eval(s), a, b, QuadOptions::abs(1e-12))?.value),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if let TimeFn::Shaped(Shape::Piecewise { breaks, values }) = self {
            if values.len() != breaks.len() + 1 {
                return Err("piecewise time function needs one more value than breaks".into());
            }
            if breaks.windows(2).any(|w| w[1] <= w[0]) {
                return Err("piecewise breaks must be strictly increasing".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_functions_agree() {
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 2e-16);
        assert!((norm_cdf(-8.0) - 6.220_960_574_271_784e-16).abs() < 1e-28);
        // reference quantiles from 30-digit arithmetic
        let refs = [
            (1e-300, -37.047_096_299_361_2),
            (1e-10, -6.361_340_902_404_056),
            (0.001, -3.090_232_306_167_813_5),
            (0.3, -0.524_400_512_708_040_8),
            (0.975, 1.959_963_984_540_054),
        ];
        for (p, x) in refs {
            assert!((norm_ppf(p) - x).abs() < 4e-16 * x.abs().max(1.0), "{p}");
        }
        for &u in &[1e-12, 0.001, 0.3, 0.5, 0.9, 0.999_999] {
            assert!((norm_cdf(norm_ppf(u)) - u).abs() < 1e-14 * u.max(1e-3));
        }
        assert_eq!(norm_ppf(0.0), f64::NEG_INFINITY);
        assert_eq!(norm_ppf(1.0), f64::INFINITY);
    }

    #[test]
    fn quadrature_finite_and_infinite() {
        let q = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, QuadOptions::default()).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12);
        let q = integrate(norm_pdf, f64::NEG_INFINITY, f64::INFINITY, QuadOptions::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
        let q = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, QuadOptions::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
        let q = integrate(|x| x.sqrt(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_reports_failure() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..QuadOptions::default()
        };
        let err = integrate(|x| (1.0 / x).sin() / x, 1e-6, 1.0, opts).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn brent_finds_roots() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - SQRT_2).abs() < 1e-13);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn time_functions() {
        let f = TimeFn::linear(1.0, 2.0);
        assert_eq!(f.eval(3.0), 7.0);
        assert!((f.integral(0.0, 2.0).unwrap() - 6.0).abs() < 1e-15);
        let p = TimeFn::Shaped(Shape::Piecewise {
            breaks: vec![1.0],
            values: vec![2.0, 5.0],
        });
        assert_eq!(p.eval(0.5), 2.0);
        assert_eq!(p.eval(1.0), 5.0);
        assert!((p.integral(0.0, 2.0).unwrap() - 7.0).abs() < 1e-15);
        let c = TimeFn::custom(|t| t * t);
        assert!((c.integral(0.0, 3.0).unwrap() - 9.0).abs() < 1e-10);
        let e = TimeFn::Shaped(Shape::Exponential {
            level: 1.0,
            amplitude: 1.0,
            rate: 1.0,
        });
        let direct = integrate(|s| e.eval(s), 0.0, 2.0, QuadOptions::default()).unwrap().value;
        assert!((e.integral(0.0, 2.0).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn time_fn_config_forms() {
        #[derive(Deserialize)]
        struct Holder {
            a: TimeFn,
            b: TimeFn,
        }
        let h: Holder = toml::from_str("a = 0.5\nb = { kind = \"linear\", intercept = 1.0, slope = 0.5 }").unwrap();
        assert_eq!(h.a.as_constant(), Some(0.5));
        assert_eq!(h.b.eval(2.0), 2.0);
    }
}
