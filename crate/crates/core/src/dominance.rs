//! First- and second-order stochastic dominance between evaluable CDFs,
//! quantile crossing levels and sufficient conditions for SOSD.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::drivers::DriverSpec;
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::numerics::{bisect_predicate, integrate_pieces, norm_cdf, norm_isf, QuadOptions, SQRT_2};
use crate::transforms::{CompositeMap, QuantileSpec};

/// Numerical strictness threshold for "strict inequality somewhere".
pub const STRICT_TOL: f64 = 1e-8;
/// Infinite domains are cut where both CDFs are this close to 0 or 1.
pub const TRUNCATION_EPS: f64 = 1e-10;
/// Largest |z| explored when truncating an infinite domain.
pub const TRUNCATION_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    FOSD,
    SOSD,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Process 1 dominates process 2.
    FirstDominates,
    /// Process 2 dominates process 1.
    SecondDominates,
    Neither,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::FirstDominates => 1.0,
            Direction::SecondDominates => -1.0,
            Direction::Neither => 0.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::FirstDominates => Direction::SecondDominates,
            Direction::SecondDominates => Direction::FirstDominates,
            Direction::Neither => Direction::Neither,
        }
    }
}

/// One grid point of the evidence table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Evidence {
    pub z: f64,
    pub f1: f64,
    pub f2: f64,
    /// `F₂(z) − F₁(z)`.
    pub diff: f64,
    /// `∫_{lower}^{z} (F₂ − F₁)`, for SOSD reports.
    pub cumulative: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub order: Order,
    pub direction: Direction,
    /// Left end `z₀` of the domain on which the verdict holds.
    pub domain_lower: f64,
    pub domain_upper: f64,
    /// The verdict holds on the whole evaluated domain.
    pub full_domain: bool,
    pub u_star: Option<f64>,
    pub strictness_witness: Option<f64>,
    /// Bounds actually evaluated after truncating infinite ends.
    pub truncation: (f64, f64),
    /// Set when a tail could not be truncated within the search cap.
    pub inconclusive: bool,
    pub tolerance: f64,
    #[serde(skip)]
    pub evidence: Vec<Evidence>,
}

impl DominanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Evidence grid as CSV (`z,f1,f2,diff,cumulative`).
    pub fn write_evidence_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "f1", "f2", "diff", "cumulative"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for e in &self.evidence {
            w.write_record([
                sig9(e.z),
                sig9(e.f1),
                sig9(e.f2),
                sig9(e.diff),
                e.cumulative.map(sig9).unwrap_or_default(),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn with_u_star(mut self, u: Option<f64>) -> Self {
        self.u_star = u;
        self
    }
}

/// Which quantile function lies above the other beyond the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Upper {
    First,
    Second,
    /// The two quantile functions coincide on the scan.
    Equal,
}

/// Crossing structure of two quantile functions.
#[derive(Debug, Clone, Serialize)]
pub struct UStar {
    /// Largest crossing level, 0 if the curves are strictly ordered, None if
    /// they coincide.
    pub u: Option<f64>,
    /// Normal score of the crossing.
    pub x: Option<f64>,
    /// `Q₁(u*)`.
    pub z: Option<f64>,
    /// The process whose quantile is larger on `(u*, 1)`.
    pub upper: Upper,
    /// All sign changes found, in increasing `u`.
    pub crossings: Vec<f64>,
}

impl UStar {
    /// The level with `Q₁ > Q₂` on `(u*, 1)`: `u` when process 1 is on top
    /// above the crossing, otherwise None.
    pub fn first_dominant(&self) -> Option<f64> {
        (self.upper == Upper::First).then_some(self.u).flatten()
    }
}

const SCAN_POINTS: usize = 2048;
const SCAN_X: f64 = 20.0;

/// Locate the crossings of `Q₁` and `Q₂` at time `t`.
///
/// The difference is scanned on 2048 normal scores in [−20, 20] and each
/// sign change is refined by bisection; the largest crossing is reported.
/// Working in normal-score space keeps crossings at levels like 1 − 1e-10
/// resolvable.
pub fn crossing_u_star(q1: &QuantileSpec, q2: &QuantileSpec, t: f64) -> Result<UStar> {
    for q in [q1, q2] {
        q.validate(&[t]).map_err(Error::Validation)?;
    }
    let (a1, a2) = (q1.at(t), q2.at(t));
    let diff = |x: f64| a1.eval_x(x) - a2.eval_x(x);
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| -SCAN_X + 2.0 * SCAN_X * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let signs: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| (x, diff(x)))
        .filter(|(_, d)| *d != 0.0 && !d.is_nan())
        .collect();
    let mut crossings_x = Vec::new();
    for w in signs.windows(2) {
        let ((xa, da), (xb, db)) = (w[0], w[1]);
        if da.signum() != db.signum() {
            let s = da.signum();
            // Rounding can make the difference exactly zero on a short
            // interval; take the middle of that plateau.
            let left = bisect_predicate(|x| s * diff(x) <= 0.0, xa, xb, 1e-13);
            let right = bisect_predicate(|x| s * diff(x) < 0.0, xa, xb, 1e-13);
            crossings_x.push(0.5 * (left + right));
        }
    }
    let upper = match signs.last() {
        None => Upper::Equal,
        Some((_, d)) if *d > 0.0 => Upper::First,
        Some(_) => Upper::Second,
    };
    let crossings: Vec<f64> = crossings_x.iter().map(|&x| norm_cdf(x)).collect();
    let (u, x) = match (crossings_x.last(), upper) {
        (Some(&x), _) => (Some(norm_cdf(x)), Some(x)),
        (None, Upper::Equal) => (None, None),
        (None, _) => (Some(0.0), Some(f64::NEG_INFINITY)),
    };
    let z = x.map(|x| a1.eval_x(x));
    Ok(UStar {
        u,
        x,
        z,
        upper,
        crossings,
    })
}

type Cdf<'a> = &'a (dyn Fn(f64) -> Result<f64> + Sync);

/// Truncate an infinite end: the point beyond which both CDFs are within
/// `TRUNCATION_EPS` of their limit. Returns `(bound, hit_cap)`.
fn truncate_end(f1: Cdf<'_>, f2: Cdf<'_>, finite_other: f64, upper: bool) -> Result<(f64, bool)> {
    let settled = |z: f64| -> Result<bool> {
        let (a, b) = (f1(z)?, f2(z)?);
        Ok(if upper {
            a >= 1.0 - TRUNCATION_EPS && b >= 1.0 - TRUNCATION_EPS
        } else {
            a <= TRUNCATION_EPS && b <= TRUNCATION_EPS
        })
    };
    let dir = if upper { 1.0 } else { -1.0 };
    let base = if finite_other.is_finite() { finite_other } else { 0.0 };
    let mut inner = base;
    let mut step = 1.0;
    let mut outer = base + dir * step;
    while !settled(outer)? {
        inner = outer;
        step *= 2.0;
        outer = base + dir * step;
        if step > TRUNCATION_CAP {
            return Ok((outer, true));
        }
    }
    let mut failure = None;
    let bound = bisect_predicate(
        |s| {
            let z = inner + (outer - inner) * s;
            match settled(z) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    true
                }
            }
        },
        0.0,
        1.0,
        1e-6,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((inner + (outer - inner) * bound, false))
}

fn truncated_domain(f1: Cdf<'_>, f2: Cdf<'_>, domain: (f64, f64)) -> Result<((f64, f64), bool)> {
    let (mut lo, mut hi) = domain;
    let mut capped = false;
    if lo.is_infinite() {
        let (b, c) = truncate_end(f1, f2, hi, false)?;
        lo = b;
        capped |= c;
    }
    if hi.is_infinite() {
        let (b, c) = truncate_end(f1, f2, lo, true)?;
        hi = b;
        capped |= c;
    }
    if !(hi > lo) {
        return Err(Error::param(format!("empty dominance domain [{lo}, {hi}]")));
    }
    Ok(((lo, hi), capped))
}

/// Uniform points plus quantiles of the equal mixture of the two laws, so
/// that both the bulk and long tails are resolved.
fn evaluation_grid(f1: Cdf<'_>, f2: Cdf<'_>, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let mut zs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let (m_lo, m_hi) = (0.5 * (f1(lo)? + f2(lo)?), 0.5 * (f1(hi)? + f2(hi)?));
    let quantiles: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let p = m_lo + (m_hi - m_lo) * (j as f64 + 0.5) / n as f64;
            let mut failure = None;
            let z = bisect_predicate(
                |z| match (f1(z), f2(z)) {
                    (Ok(a), Ok(b)) => 0.5 * (a + b) >= p,
                    (Err(e), _) | (_, Err(e)) => {
                        failure.get_or_insert(e);
                        true
                    }
                },
                lo,
                hi,
                1e-12 * (1.0 + lo.abs().max(hi.abs())),
            );
            match failure {
                Some(e) => Err(e),
                None => Ok(z),
            }
        })
        .collect();
    for q in quantiles {
        zs.push(q?);
    }
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    Ok(zs)
}

fn evaluate(f1: Cdf<'_>, f2: Cdf<'_>, zs: &[f64]) -> Result<Vec<Evidence>> {
    zs.par_iter()
        .map(|&z| {
            let (a, b) = (f1(z)?, f2(z)?);
            Ok(Evidence {
                z,
                f1: a,
                f2: b,
                diff: b - a,
                cumulative: None,
            })
        })
        .collect()
}

struct SuffixVerdict {
    direction: Direction,
    start: usize,
    witness: usize,
}

/// For each direction, the longest suffix of the grid where `s·value ≥ −tol`
/// that contains a strict witness; the longer of the two wins.
fn best_suffix(values: &[f64]) -> Option<SuffixVerdict> {
    let mut best: Option<SuffixVerdict> = None;
    for direction in [Direction::FirstDominates, Direction::SecondDominates] {
        let s = direction.sign();
        let start = values
            .iter()
            .rposition(|v| s * v < -STRICT_TOL)
            .map_or(0, |i| i + 1);
        let witness = (start..values.len()).find(|&i| s * values[i] > STRICT_TOL);
        if let Some(witness) = witness {
            let better = best.as_ref().is_none_or(|b| start < b.start);
            if better {
                best = Some(SuffixVerdict {
                    direction,
                    start,
                    witness,
                });
            }
        }
    }
    best
}

/// Refine the left end of a suffix verdict to the zero of `value(z)`
/// between the last violating grid point and the suffix.
fn refine_start<F: Fn(f64) -> Result<f64>>(value: F, zs: &[f64], vals: &[f64], v: &SuffixVerdict) -> Result<f64> {
    if v.start == 0 {
        return Ok(zs[0]);
    }
    let s = v.direction.sign();
    let next = (v.start..zs.len()).find(|&i| s * vals[i] >= 0.0).unwrap_or(v.witness);
    let (a, b) = (zs[next - 1], zs[next]);
    let mut failure = None;
    let z0 = bisect_predicate(
        |z| match value(z) {
            Ok(d) => s * d >= 0.0,
            Err(e) => {
                failure.get_or_insert(e);
                true
            }
        },
        a,
        b,
        1e-12 * (1.0 + a.abs().max(b.abs())),
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(z0),
    }
}

/// First-order dominance of `F₁` over `F₂` (or the reverse) on `domain`.
///
/// The verdict is FOSD when `F₂ − F₁ ≥ −tol` on a right-anchored part of
/// the domain `[z₀, upper]` with a strict witness there; `full_domain`
/// records whether `z₀` is the lower bound.
pub fn fosd_check(f1: Cdf<'_>, f2: Cdf<'_>, domain: (f64, f64), grid_size: usize) -> Result<DominanceReport> {
    if grid_size < 64 {
        return Err(Error::param("dominance grids need at least 64 points"));
    }
    let ((lo, hi), capped) = truncated_domain(f1, f2, domain)?;
    let zs = evaluation_grid(f1, f2, lo, hi, grid_size)?;
    let evidence = evaluate(f1, f2, &zs)?;
    let diffs: Vec<f64> = evidence.iter().map(|e| e.diff).collect();
    let verdict = best_suffix(&diffs);
    let (order, direction, domain_lower, witness, full) = match &verdict {
        None => (Order::None, Direction::Neither, lo, None, false),
        Some(v) => {
            let z0 = refine_start(|z| Ok(f2(z)? - f1(z)?), &zs, &diffs, v)?;
            (Order::FOSD, v.direction, z0, Some(zs[v.witness]), v.start == 0)
        }
    };
    Ok(DominanceReport {
        order,
        direction,
        domain_lower,
        domain_upper: hi,
        full_domain: full,
        u_star: None,
        strictness_witness: witness,
        truncation: (lo, hi),
        inconclusive: capped,
        tolerance: STRICT_TOL,
        evidence,
    })
}

/// Second-order dominance: the running integral `∫_{lower}^{z} (F₂ − F₁)`
/// must stay above `−tol` with a strict witness. Integration uses Simpson's
/// rule on every grid cell.
pub fn sosd_check(f1: Cdf<'_>, f2: Cdf<'_>, domain: (f64, f64), grid_size: usize) -> Result<DominanceReport> {
    if grid_size < 64 {
        return Err(Error::param("dominance grids need at least 64 points"));
    }
    let ((lo, hi), capped) = truncated_domain(f1, f2, domain)?;
    let zs = evaluation_grid(f1, f2, lo, hi, grid_size)?;
    let mut evidence = evaluate(f1, f2, &zs)?;
    let mids: Vec<f64> = zs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mid_diff: Vec<f64> = mids
        .par_iter()
        .map(|&z| Ok(f2(z)? - f1(z)?))
        .collect::<Result<_>>()?;
    let mut acc = 0.0;
    evidence[0].cumulative = Some(0.0);
    for i in 1..evidence.len() {
        let h = zs[i] - zs[i - 1];
        acc += h / 6.0 * (evidence[i - 1].diff + 4.0 * mid_diff[i - 1] + evidence[i].diff);
        evidence[i].cumulative = Some(acc);
    }
    let cum: Vec<f64> = evidence.iter().map(|e| e.cumulative.unwrap_or(0.0)).collect();
    let mut direction = Direction::Neither;
    let mut witness = None;
    for d in [Direction::FirstDominates, Direction::SecondDominates] {
        let s = d.sign();
        if cum.iter().all(|c| s * c >= -STRICT_TOL) {
            if let Some(i) = cum.iter().position(|c| s * c > STRICT_TOL) {
                direction = d;
                witness = Some(zs[i]);
                break;
            }
        }
    }
    let order = if direction == Direction::Neither { Order::None } else { Order::SOSD };
    Ok(DominanceReport {
        order,
        direction,
        domain_lower: lo,
        domain_upper: hi,
        full_domain: order != Order::None,
        u_star: None,
        strictness_witness: witness,
        truncation: (lo, hi),
        inconclusive: capped,
        tolerance: STRICT_TOL,
        evidence,
    })
}

/// CDF of a canonical Tukey-g process (A = 0, B = 1) whose skewness is
/// `g_neg` for `z ≤ 0` and `g_pos` for `z > 0`.
pub fn state_dependent_tukey_g_cdf(g_neg: f64, g_pos: f64, z: f64) -> f64 {
    let g = if z <= 0.0 { g_neg } else { g_pos };
    tukey_g_cdf(g, z)
}

/// `Φ(ln(gz + 1)/g)` on the range `(−1/g, ∞)`, 0 below it.
pub fn tukey_g_cdf(g: f64, z: f64) -> f64 {
    let arg = g * z + 1.0;
    if arg <= 0.0 {
        return 0.0;
    }
    norm_cdf(arg.ln() / g)
}

fn erf_term(g: f64, x: f64) -> f64 {
    let arg = g * x + 1.0;
    if arg <= 0.0 {
        return -1.0;
    }
    libm::erf(arg.ln() / (g * SQRT_2))
}

/// The two integrals whose ordering decides SOSD for the state-dependent
/// Tukey-g pair `(g₁ᵃ, g₁ᵇ)` against constant `g₂`:
///
/// `left = ∫_{−1/g₂}^{0} [erf(ln(g₂x+1)/(g₂√2)) − erf(ln(g₁ᵃx+1)/(g₁ᵃ√2))] dx`,
/// `right = ∫_{0}^{∞} [erf(ln(g₁ᵇx+1)/(g₁ᵇ√2)) − erf(ln(g₂x+1)/(g₂√2))] dx`.
///
/// Below `−1/g`, where the logarithm is undefined, the erf term takes its
/// limit −1 (the CDF is 0 there). The right integral stops where both erf
/// terms are within 1e-12 of 1.
pub fn appendix_b4_integrals(g1a: f64, g1b: f64, g2: f64) -> Result<(f64, f64)> {
    for (name, g) in [("g1a", g1a), ("g1b", g1b), ("g2", g2)] {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::param(format!("{name} must be positive, got {g}")));
        }
    }
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let lo = -1.0 / g2;
    let mut knots = vec![lo];
    let kink = -1.0 / g1a;
    if kink > lo && kink < 0.0 {
        knots.push(kink);
    }
    knots.push(0.0);
    let left = integrate_pieces(|x| erf_term(g2, x) - erf_term(g1a, x), &knots, opts)?.value;
    // erfc(y) < 1e-12 for y beyond c; ln(gx+1) = g√2·c at the cut.
    let c = norm_isf(0.5e-12) / SQRT_2;
    let cut = |g: f64| ((g * SQRT_2 * c).exp() - 1.0) / g;
    let upper = cut(g1b).max(cut(g2));
    let right = integrate_pieces(|x| erf_term(g1b, x) - erf_term(g2, x), &[0.0, 1.0, upper.max(2.0)], opts)?.value;
    Ok((left, right))
}

/// Condition flags of the SOSD sufficient conditions at one `z`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionPoint {
    pub z: f64,
    /// `∂_z Q_i(t, F_{ζ_i}(z))`, the slope of the map from `z` back to the
    /// driver scale.
    pub d1: f64,
    pub d2: f64,
    pub f_z1: f64,
    pub f_z2: f64,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    /// A density vanished, so the slopes are undefined here.
    pub indeterminate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub points: Vec<ConditionPoint>,
    /// Some condition holds at every determinate grid point.
    pub sufficient: bool,
    pub indeterminate_points: usize,
}

/// Slope of `z ↦ Q_F(F_ζ(z))` by the inverse-function rule.
fn preimage_slope(map: &CompositeMap, driver: &DriverSpec, t: f64, z: f64) -> Result<Option<(f64, f64)>> {
    let fm = map.freeze(t, driver)?;
    let fz = fm.quantile.density(z)?;
    let y = fm.preimage(z)?;
    if !y.is_finite() {
        return Ok(None);
    }
    let fy = fm.dist_pdf(y)?;
    if !(fy > 0.0) || !(fz > 0.0) {
        return Ok(None);
    }
    Ok(Some((fz / fy, y)))
}

/// Evaluate the three sufficient conditions for `Z⁽¹⁾ ≽_SOSD Z⁽²⁾` on
/// `z_grid`. `F_{Z⁽ⁱ⁾}` is the driver law pushed through the map.
pub fn sosd_sufficient_conditions(
    map1: &CompositeMap,
    driver1: &DriverSpec,
    map2: &CompositeMap,
    driver2: &DriverSpec,
    t: f64,
    z_grid: &[f64],
) -> Result<ConditionReport> {
    let slack = 1e-12;
    let points: Vec<ConditionPoint> = z_grid
        .par_iter()
        .map(|&z| {
            let s1 = preimage_slope(map1, driver1, t, z)?;
            let s2 = preimage_slope(map2, driver2, t, z)?;
            let (Some((d1, y1)), Some((d2, y2))) = (s1, s2) else {
                return Ok(ConditionPoint {
                    z,
                    d1: f64::NAN,
                    d2: f64::NAN,
                    f_z1: f64::NAN,
                    f_z2: f64::NAN,
                    cond_i: false,
                    cond_ii: false,
                    cond_iii: false,
                    indeterminate: true,
                });
            };
            let f_z1 = driver1.marginal_cdf(t, y1)?;
            let f_z2 = driver2.marginal_cdf(t, y2)?;
            let cond_i = d2 <= 1.0 + slack && 1.0 - slack <= d1;
            // Ratio conditions in cross-multiplied form (F_Z1 > 0).
            let cond_ii = d1 >= 1.0 - slack && d2 >= 1.0 - slack && f_z2 * (d2 - 1.0) <= f_z1 * (d1 - 1.0) + slack;
            let cond_iii = d1 <= 1.0 + slack && d2 <= 1.0 + slack && f_z2 * (1.0 - d2) + slack >= f_z1 * (1.0 - d1);
            Ok(ConditionPoint {
                z,
                d1,
                d2,
                f_z1,
                f_z2,
                cond_i,
                cond_ii: cond_ii && f_z1 > 0.0,
                cond_iii: cond_iii && f_z1 > 0.0,
                indeterminate: false,
            })
        })
        .collect::<Result<_>>()?;
    let indeterminate_points = points.iter().filter(|p| p.indeterminate).count();
    let determinate: Vec<&ConditionPoint> = points.iter().filter(|p| !p.indeterminate).collect();
    let sufficient = !determinate.is_empty() && determinate.iter().all(|p| p.cond_i || p.cond_ii || p.cond_iii);
    Ok(ConditionReport {
        points,
        sufficient,
        indeterminate_points,
    })
}

/// Kendall ordering: process 1 dominates when `K₁(v) ≤ K₂(v)` on (0, 1)
/// with strict inequality somewhere.
pub fn kendall_order_check(
    k1: &(dyn Fn(f64) -> Result<f64> + Sync),
    k2: &(dyn Fn(f64) -> Result<f64> + Sync),
    grid_size: usize,
) -> Result<DominanceReport> {
    if grid_size < 2 {
        return Err(Error::param("Kendall grid needs at least two points"));
    }
    let vs: Vec<f64> = (1..=grid_size).map(|i| i as f64 / (grid_size + 1) as f64).collect();
    let evidence: Vec<Evidence> = vs
        .par_iter()
        .map(|&v| {
            let (a, b) = (k1(v)?, k2(v)?);
            Ok(Evidence {
                z: v,
                f1: a,
                f2: b,
                diff: b - a,
                cumulative: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut direction = Direction::Neither;
    let mut witness = None;
    for d in [Direction::FirstDominates, Direction::SecondDominates] {
        let s = d.sign();
        if evidence.iter().all(|e| s * e.diff >= -STRICT_TOL) {
            if let Some(e) = evidence.iter().find(|e| s * e.diff > STRICT_TOL) {
                direction = d;
                witness = Some(e.z);
                break;
            }
        }
    }
    Ok(DominanceReport {
        order: if direction == Direction::Neither { Order::None } else { Order::FOSD },
        direction,
        domain_lower: 0.0,
        domain_upper: 1.0,
        full_domain: direction != Direction::Neither,
        u_star: None,
        strictness_witness: witness,
        truncation: (0.0, 1.0),
        inconclusive: false,
        tolerance: STRICT_TOL,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::DistributionSpec;

    fn normal(m: f64, s: f64) -> impl Fn(f64) -> Result<f64> + Sync {
        move |z| Ok(norm_cdf((z - m) / s))
    }

    #[test]
    fn mean_shift_is_fosd() {
        let (f1, f2) = (normal(1.0, 1.0), normal(0.0, 1.0));
        let r = fosd_check(&f1, &f2, (-6.0, 7.0), 256).unwrap();
        assert_eq!(r.order, Order::FOSD);
        assert_eq!(r.direction, Direction::FirstDominates);
        assert_eq!(r.domain_lower, -6.0);
        assert!(r.full_domain);
        let r = fosd_check(&f2, &f1, (-6.0, 7.0), 256).unwrap();
        assert_eq!(r.direction, Direction::SecondDominates);
    }

    #[test]
    fn identical_cdfs_have_no_order() {
        let f = normal(0.0, 1.0);
        assert_eq!(fosd_check(&f, &f, (-8.0, 8.0), 128).unwrap().order, Order::None);
        assert_eq!(sosd_check(&f, &f, (-8.0, 8.0), 128).unwrap().order, Order::None);
    }

    #[test]
    fn mean_preserving_spread_is_sosd() {
        let (narrow, wide) = (normal(0.0, 1.0), normal(0.0, 2f64.sqrt()));
        let r = sosd_check(&narrow, &wide, (f64::NEG_INFINITY, f64::INFINITY), 512).unwrap();
        assert_eq!(r.order, Order::SOSD);
        assert_eq!(r.direction, Direction::FirstDominates);
        let f = fosd_check(&narrow, &wide, (f64::NEG_INFINITY, f64::INFINITY), 512).unwrap();
        assert!(!f.full_domain);
    }

    #[test]
    fn equal_g_crossing_is_at_half() {
        let q1 = QuantileSpec::tukey_gh(0.0, 1.0, 0.7, 0.3);
        let q2 = QuantileSpec::tukey_gh(0.0, 1.0, 0.7, 0.1);
        let u = crossing_u_star(&q1, &q2, 1.0).unwrap();
        assert!((u.u.unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(u.upper, Upper::First);
        let swapped = crossing_u_star(&q2, &q1, 1.0).unwrap();
        assert_eq!(swapped.upper, Upper::Second);
        assert!((swapped.u.unwrap() - 0.5).abs() < 1e-8);
        let same = crossing_u_star(&q1, &q1, 1.0).unwrap();
        assert_eq!(same.upper, Upper::Equal);
        assert!(same.u.is_none());
    }

    #[test]
    fn b4_degenerate_case() {
        let (l, r) = appendix_b4_integrals(0.4, 0.4, 0.4).unwrap();
        assert!(l.abs() < 1e-14 && r.abs() < 1e-14);
        assert!(appendix_b4_integrals(0.0, 0.2, 0.3).is_err());
    }

    #[test]
    fn kendall_order_examples() {
        let como = |v: f64| Ok(v);
        let indep = |v: f64| Ok(v - v * v.ln());
        let r = kendall_order_check(&como, &indep, 99).unwrap();
        assert_eq!(r.direction, Direction::FirstDominates);
        let r = kendall_order_check(&indep, &como, 99).unwrap();
        assert_eq!(r.direction, Direction::SecondDominates);
        let r = kendall_order_check(&como, &como, 99).unwrap();
        assert_eq!(r.order, Order::None);
    }

    #[test]
    fn scaled_gaussian_condition_one() {
        let driver = DriverSpec::standard_brownian();
        let q = QuantileSpec::gaussian(0.0, 1.0);
        let m1 = CompositeMap::new(DistributionSpec::gaussian(0.0, 1.5 * 1.5), q.clone(), Default::default());
        let m2 = CompositeMap::new(DistributionSpec::gaussian(0.0, 0.25), q, Default::default());
        let zs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.2).collect();
        let rep = sosd_sufficient_conditions(&m1, &driver, &m2, &driver, 1.0, &zs).unwrap();
        assert!(rep.sufficient);
        assert!(rep.points.iter().all(|p| p.cond_i));
        assert!((rep.points[3].d1 - 1.5).abs() < 1e-9);
        let same = sosd_sufficient_conditions(&m1, &driver, &m1, &driver, 1.0, &zs).unwrap();
        assert!(same.points.iter().all(|p| p.cond_ii && (p.d1 - p.d2).abs() == 0.0));
    }
}
