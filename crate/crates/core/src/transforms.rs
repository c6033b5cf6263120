//! Quantile families, distribution families and the composite maps
//! `Z_t = Q_ζ(F(t, Y_t))` built from them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::drivers::{DriverSpec, PathEnsemble};
use crate::error::{Error, Result};
use crate::numerics::{brent, norm_cdf, norm_pdf, norm_ppf, TimeFn};

/// Monotone piecewise-linear quantile table; values clamp at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl QuantileTable {
    pub fn new(u: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let t = QuantileTable { u, z };
        t.validate().map_err(Error::Parameter)?;
        Ok(t)
    }

    /// Two columns `u,z` with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
        let (mut u, mut z) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("quantile table rows need 2 columns, got {}", rec.len())));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            u.push(parse(&rec[0])?);
            z.push(parse(&rec[1])?);
        }
        Self::new(u, z)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.u.len() != self.z.len() || self.u.len() < 2 {
            return Err("TableDriven needs at least two (u, z) pairs of equal length".into());
        }
        if self.u.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err("TableDriven u values must lie in [0, 1]".into());
        }
        if self.u.windows(2).any(|w| w[1] <= w[0]) || self.z.windows(2).any(|w| w[1] <= w[0]) {
            return Err("TableDriven table must be strictly increasing in both u and z".into());
        }
        Ok(())
    }

    fn eval(&self, u: f64) -> f64 {
        interp(&self.u, &self.z, u)
    }

    fn cdf(&self, z: f64) -> f64 {
        if z < self.z[0] {
            return 0.0;
        }
        if z >= *self.z.last().expect("non-empty") {
            return 1.0;
        }
        interp(&self.z, &self.u, z)
    }

    fn slope(&self, u: f64) -> f64 {
        let i = segment(&self.u, u);
        (self.z[i + 1] - self.z[i]) / (self.u[i + 1] - self.u[i])
    }
}

fn segment(xs: &[f64], x: f64) -> usize {
    xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1) - 1
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = segment(xs, x);
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// A quantile family with time-dependent parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum QuantileSpec {
    /// `A + (B/g)(e^{gX} − 1)`.
    TukeyG { a: TimeFn, b: TimeFn, g: TimeFn },
    /// `A + (B/g)(e^{gX} − 1)e^{hX²/2}`.
    TukeyGH { a: TimeFn, b: TimeFn, g: TimeFn, h: TimeFn },
    /// `m + √v X`.
    Gaussian { m: TimeFn, v: TimeFn },
    TableDriven(QuantileTable),
}

/// A quantile family with its parameters evaluated at one time.
#[derive(Debug, Clone, Copy)]
pub enum QuantileAt<'a> {
    TukeyGH { a: f64, b: f64, g: f64, h: f64 },
    Gaussian { m: f64, s: f64 },
    Table(&'a QuantileTable),
}

/// `(e^{gx} − 1)/g` with its `g → 0` limit.
#[inline]
fn g_term(g: f64, x: f64) -> f64 {
    if g == 0.0 {
        x
    } else {
        (g * x).exp_m1() / g
    }
}

/// Tukey g-and-h transform of a normal score.
#[inline]
pub fn tukey_gh(a: f64, b: f64, g: f64, h: f64, x: f64) -> f64 {
    if x.is_infinite() {
        return tukey_gh_limit(a, b, g, h, x);
    }
    let k = if h == 0.0 { 1.0 } else { (0.5 * h * x * x).exp() };
    a + b * g_term(g, x) * k
}

fn tukey_gh_limit(a: f64, b: f64, g: f64, h: f64, x: f64) -> f64 {
    if h > 0.0 || g == 0.0 || (g > 0.0) == (x > 0.0) {
        x.signum() * f64::INFINITY
    } else {
        a - b / g
    }
}

impl QuantileSpec {
    pub fn tukey_g(a: f64, b: f64, g: f64) -> Self {
        QuantileSpec::TukeyG {
            a: a.into(),
            b: b.into(),
            g: g.into(),
        }
    }

    pub fn tukey_gh(a: f64, b: f64, g: f64, h: f64) -> Self {
        QuantileSpec::TukeyGH {
            a: a.into(),
            b: b.into(),
            g: g.into(),
            h: h.into(),
        }
    }

    pub fn gaussian(m: f64, v: f64) -> Self {
        QuantileSpec::Gaussian { m: m.into(), v: v.into() }
    }

    /// The Gaussian quantile of a Gaussian driver's own marginal law, so
    /// that a `TrueLaw` map with it reproduces the driver.
    pub fn driver_marginal(driver: &DriverSpec) -> Result<Self> {
        if !driver.is_gaussian() {
            return Err(Error::Capability(format!("{} has no Gaussian marginal", driver.name())));
        }
        let (d1, d2) = (driver.clone(), driver.clone());
        let m = TimeFn::custom(move |t| d1.gaussian_moments(t).map_or(f64::NAN, |(m, _)| m));
        let v = TimeFn::custom(move |t| d2.gaussian_moments(t).map_or(f64::NAN, |(_, s)| s * s));
        Ok(QuantileSpec::Gaussian { m, v })
    }

    /// The identity on `[0, 1]`.
    pub fn uniform() -> Self {
        QuantileSpec::TableDriven(QuantileTable {
            u: vec![0.0, 1.0],
            z: vec![0.0, 1.0],
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            QuantileSpec::TukeyG { .. } => "TukeyG",
            QuantileSpec::TukeyGH { .. } => "TukeyGH",
            QuantileSpec::Gaussian { .. } => "Gaussian",
            QuantileSpec::TableDriven(_) => "TableDriven",
        }
    }

    pub fn at(&self, t: f64) -> QuantileAt<'_> {
        match self {
            QuantileSpec::TukeyG { a, b, g } => QuantileAt::TukeyGH {
                a: a.eval(t),
                b: b.eval(t),
                g: g.eval(t),
                h: 0.0,
            },
            QuantileSpec::TukeyGH { a, b, g, h } => QuantileAt::TukeyGH {
                a: a.eval(t),
                b: b.eval(t),
                g: g.eval(t),
                h: h.eval(t),
            },
            QuantileSpec::Gaussian { m, v } => QuantileAt::Gaussian {
                m: m.eval(t),
                s: v.eval(t).sqrt(),
            },
            QuantileSpec::TableDriven(tab) => QuantileAt::Table(tab),
        }
    }

    /// Parameter-range diagnostics at the given times.
    pub fn validate(&self, times: &[f64]) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if let QuantileSpec::TableDriven(tab) = self {
            if let Err(e) = tab.validate() {
                issues.push(e);
            }
        } else {
            for &t in times {
                match self.at(t) {
                    QuantileAt::TukeyGH { a, b, g, h } => {
                        if ![a, b, g, h].iter().all(|v| v.is_finite()) {
                            issues.push(format!("{} parameters must be finite (t={t})", self.family()));
                        }
                        if !(b > 0.0) {
                            issues.push(format!("{} requires B > 0, got {b} at t={t}", self.family()));
                        }
                        if h < 0.0 {
                            issues.push(format!("TukeyGH requires h ≥ 0, got {h} at t={t}"));
                        }
                    }
                    QuantileAt::Gaussian { m, s } => {
                        if !m.is_finite() {
                            issues.push(format!("Gaussian quantile mean must be finite at t={t}"));
                        }
                        if !(s > 0.0 && s.is_finite()) {
                            issues.push(format!("Gaussian quantile requires v > 0 at t={t}"));
                        }
                    }
                    QuantileAt::Table(_) => {}
                }
                if !issues.is_empty() {
                    break;
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// `Q_ζ(t, u)`.
    pub fn eval(&self, t: f64, u: f64) -> f64 {
        self.at(t).eval(u)
    }

    /// `F_ζ(t, z)`, the inverse of [`QuantileSpec::eval`].
    pub fn cdf(&self, t: f64, z: f64) -> Result<f64> {
        self.at(t).cdf(z)
    }

    pub fn density(&self, t: f64, z: f64) -> Result<f64> {
        self.at(t).density(z)
    }
}

/// Quantile evaluation (free-function form).
pub fn quantile_eval(spec: &QuantileSpec, t: f64, u: f64) -> f64 {
    spec.eval(t, u)
}

/// Numerical inverse of the quantile function.
pub fn quantile_cdf(spec: &QuantileSpec, t: f64, z: f64) -> Result<f64> {
    spec.cdf(t, z)
}

const X_LIMIT: f64 = 40.0;

impl QuantileAt<'_> {
    /// True when the family is a transform of a standard normal score.
    pub fn is_normal_based(&self) -> bool {
        !matches!(self, QuantileAt::Table(_))
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            QuantileAt::Table(tab) => tab.eval(u),
            _ => self.eval_x(norm_ppf(u)),
        }
    }

    /// Quantile at normal score `x`, i.e. `Q(Φ(x))`.
    pub fn eval_x(&self, x: f64) -> f64 {
        match *self {
            QuantileAt::TukeyGH { a, b, g, h } => tukey_gh(a, b, g, h, x),
            QuantileAt::Gaussian { m, s } => m + s * x,
            QuantileAt::Table(tab) => tab.eval(norm_cdf(x)),
        }
    }

    /// `dQ(Φ(x))/dx`.
    pub fn deriv_x(&self, x: f64) -> f64 {
        match *self {
            QuantileAt::TukeyGH { b, g, h, .. } => {
                let k = if h == 0.0 { 1.0 } else { (0.5 * h * x * x).exp() };
                let eg = if g == 0.0 { 1.0 } else { (g * x).exp() };
                b * k * (eg + g_term(g, x) * h * x)
            }
            QuantileAt::Gaussian { s, .. } => s,
            QuantileAt::Table(tab) => tab.slope(norm_cdf(x)) * norm_pdf(x),
        }
    }

    /// Support `(inf D_ζ, sup D_ζ)`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            QuantileAt::TukeyGH { a, b, g, h } => {
                if h > 0.0 || g == 0.0 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else if g > 0.0 {
                    (a - b / g, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, a - b / g)
                }
            }
            QuantileAt::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            QuantileAt::Table(tab) => (tab.z[0], *tab.z.last().expect("non-empty")),
        }
    }

    /// Normal score `x` with `Q(Φ(x)) = z`; ±∞ outside the range.
    pub fn normal_score(&self, z: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if z <= lo {
            return Ok(f64::NEG_INFINITY);
        }
        if z >= hi {
            return Ok(f64::INFINITY);
        }
        match *self {
            QuantileAt::Gaussian { m, s } => Ok((z - m) / s),
            QuantileAt::TukeyGH { a, b, g, h } if h == 0.0 => {
                let w = (z - a) / b;
                Ok(if g == 0.0 { w } else { (g * w).ln_1p() / g })
            }
            QuantileAt::TukeyGH { .. } => {
                let f = |x: f64| (self.eval_x(x) - z).clamp(-1e300, 1e300);
                let mut lo_x = -1.0;
                while f(lo_x) > 0.0 {
                    if lo_x <= -X_LIMIT {
                        return Ok(f64::NEG_INFINITY);
                    }
                    lo_x = (2.0 * lo_x).max(-X_LIMIT);
                }
                let mut hi_x = 1.0;
                while f(hi_x) < 0.0 {
                    if hi_x >= X_LIMIT {
                        return Ok(f64::INFINITY);
                    }
                    hi_x = (2.0 * hi_x).min(X_LIMIT);
                }
                brent(f, lo_x, hi_x, 1e-14, 400)
            }
            QuantileAt::Table(tab) => Ok(norm_ppf(tab.cdf(z))),
        }
    }

    /// `F_ζ(z)`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        match self {
            QuantileAt::Table(tab) => Ok(tab.cdf(z)),
            _ => Ok(norm_cdf(self.normal_score(z)?)),
        }
    }

    /// `f_ζ(z) = φ(x)/Q'(x)` at the normal score of `z`; zero off the range.
    pub fn density(&self, z: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if z < lo || z > hi {
            return Ok(0.0);
        }
        match self {
            QuantileAt::Table(tab) => {
                if z == hi {
                    return Ok(0.0);
                }
                let u = tab.cdf(z);
                Ok(1.0 / tab.slope(u))
            }
            _ => {
                let x = self.normal_score(z)?;
                if x.is_infinite() {
                    return Ok(0.0);
                }
                Ok(norm_pdf(x) / self.deriv_x(x))
            }
        }
    }
}

/// A continuous distribution family `F(t, y; θ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    Gaussian { mean: TimeFn, variance: TimeFn },
    /// The marginal law of a driver (OU, Brownian, VG, gamma).
    DriverMarginal { driver: DriverSpec },
    /// Continuous piecewise-linear interpolation of the empirical CDF of a
    /// sorted sample.
    Empirical { samples: Vec<f64> },
    /// `F_Y(t, y − γ)` for a driver law `F_Y`.
    ShiftedDriverLaw { driver: DriverSpec, shift: f64 },
}

/// A distribution frozen at one time.
#[derive(Debug, Clone, Copy)]
pub enum FrozenDist<'a> {
    Normal { mean: f64, sd: f64 },
    Driver { driver: &'a DriverSpec, t: f64, shift: f64 },
    Empirical(&'a [f64]),
}

impl DistributionSpec {
    pub fn standard_normal() -> Self {
        DistributionSpec::Gaussian {
            mean: 0.0.into(),
            variance: 1.0.into(),
        }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        DistributionSpec::Gaussian {
            mean: mean.into(),
            variance: variance.into(),
        }
    }

    pub fn driver(driver: DriverSpec) -> Self {
        DistributionSpec::DriverMarginal { driver }
    }

    pub fn empirical(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        DistributionSpec::Empirical { samples }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Gaussian { .. } => "Gaussian",
            DistributionSpec::DriverMarginal { .. } => "DriverMarginal",
            DistributionSpec::Empirical { .. } => "Empirical",
            DistributionSpec::ShiftedDriverLaw { .. } => "ShiftedDriverLaw",
        }
    }

    pub fn validate(&self, times: &[f64]) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        match self {
            DistributionSpec::Gaussian { mean, variance } => {
                for &t in times {
                    if !mean.eval(t).is_finite() || !(variance.eval(t) > 0.0) {
                        issues.push(format!("Gaussian distribution needs finite mean and variance > 0 at t={t}"));
                        break;
                    }
                }
            }
            DistributionSpec::DriverMarginal { driver } => {
                if driver.is_discrete() {
                    issues.push("DriverMarginal needs a continuous driver law".into());
                }
                if let Err(v) = driver.validate(None) {
                    issues.extend(v);
                }
            }
            DistributionSpec::Empirical { samples } => {
                if samples.len() < 2 || samples.first() == samples.last() {
                    issues.push("Empirical distribution needs at least two distinct samples".into());
                }
                if samples.windows(2).any(|w| !(w[1] >= w[0])) {
                    issues.push("Empirical samples must be sorted ascending".into());
                }
            }
            DistributionSpec::ShiftedDriverLaw { driver, shift } => {
                if !(0.0..=1.0).contains(shift) {
                    issues.push(format!("ShiftedDriverLaw shift must lie in [0, 1], got {shift}"));
                }
                if driver.is_discrete() {
                    issues.push("ShiftedDriverLaw needs a continuous driver law".into());
                }
                if let Err(v) = driver.validate(None) {
                    issues.extend(v);
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn freeze(&self, t: f64) -> Result<FrozenDist<'_>> {
        Ok(match self {
            DistributionSpec::Gaussian { mean, variance } => FrozenDist::Normal {
                mean: mean.eval(t),
                sd: variance.eval(t).sqrt(),
            },
            DistributionSpec::DriverMarginal { driver } => freeze_driver(driver, t, 0.0)?,
            DistributionSpec::ShiftedDriverLaw { driver, shift } => freeze_driver(driver, t, *shift)?,
            DistributionSpec::Empirical { samples } => FrozenDist::Empirical(samples),
        })
    }

    pub fn cdf(&self, t: f64, y: f64) -> Result<f64> {
        self.freeze(t)?.cdf(y)
    }

    pub fn pdf(&self, t: f64, y: f64) -> Result<f64> {
        self.freeze(t)?.pdf(y)
    }

    pub fn quantile(&self, t: f64, p: f64) -> Result<f64> {
        self.freeze(t)?.quantile(p)
    }
}

fn freeze_driver(driver: &DriverSpec, t: f64, shift: f64) -> Result<FrozenDist<'_>> {
    if !(t > 0.0) {
        return Err(Error::param(format!("driver law needs t > 0, got {t}")));
    }
    if driver.is_gaussian() {
        let (m, s) = driver.gaussian_moments(t)?;
        Ok(FrozenDist::Normal { mean: m + shift, sd: s })
    } else {
        Ok(FrozenDist::Driver { driver, t, shift })
    }
}

impl FrozenDist<'_> {
    pub fn cdf(&self, y: f64) -> Result<f64> {
        match *self {
            FrozenDist::Normal { mean, sd } => Ok(norm_cdf((y - mean) / sd)),
            FrozenDist::Driver { driver, t, shift } => driver.marginal_cdf(t, y - shift),
            FrozenDist::Empirical(s) => Ok(empirical_cdf(s, y)),
        }
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        match *self {
            FrozenDist::Normal { mean, sd } => Ok(norm_pdf((y - mean) / sd) / sd),
            FrozenDist::Driver { driver, t, shift } => driver.marginal_pdf(t, y - shift),
            FrozenDist::Empirical(s) => {
                let n = s.len();
                if y < s[0] || y >= s[n - 1] {
                    return Ok(0.0);
                }
                let i = segment(s, y);
                Ok(1.0 / ((n - 1) as f64 * (s[i + 1] - s[i])))
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match *self {
            FrozenDist::Normal { mean, sd } => Ok(mean + sd * norm_ppf(p)),
            FrozenDist::Driver { driver, t, shift } => Ok(driver.marginal_quantile(t, p)? + shift),
            FrozenDist::Empirical(s) => {
                let n = s.len();
                let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
                let i = (pos.floor() as usize).min(n - 2);
                Ok(s[i] + (pos - i as f64) * (s[i + 1] - s[i]))
            }
        }
    }

    /// `Φ⁻¹(F(y))`, exact for Gaussian laws.
    pub fn normal_score(&self, y: f64) -> Result<f64> {
        match *self {
            FrozenDist::Normal { mean, sd } => Ok((y - mean) / sd),
            _ => Ok(norm_ppf(self.cdf(y)?)),
        }
    }

    /// Inverse of [`FrozenDist::normal_score`].
    pub fn from_normal_score(&self, x: f64) -> Result<f64> {
        match *self {
            FrozenDist::Normal { mean, sd } => Ok(mean + sd * x),
            _ => self.quantile(norm_cdf(x)),
        }
    }
}

fn empirical_cdf(s: &[f64], y: f64) -> f64 {
    let n = s.len();
    if y < s[0] {
        return 0.0;
    }
    if y >= s[n - 1] {
        return 1.0;
    }
    let i = segment(s, y);
    let w = if s[i + 1] > s[i] { (y - s[i]) / (s[i + 1] - s[i]) } else { 1.0 };
    (i as f64 + w) / (n - 1) as f64
}

/// How the distribution map relates to the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MapMode {
    /// `F` differs from the driver's law.
    #[default]
    FalseLaw,
    /// `F` is the driver's own marginal law, so `F(t, Y_t)` is uniform.
    TrueLaw,
    /// `F` acts on the standardized driver `(Y_t − μ_Y(t))/σ_Y(t)`.
    Pivot,
}

/// The distortion recipe `y ↦ Q_ζ(t, F(t, y))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeMap {
    pub dist: DistributionSpec,
    pub quantile: QuantileSpec,
    #[serde(default)]
    pub mode: MapMode,
    #[serde(default)]
    pub pivot_reference: Option<DistributionSpec>,
}

/// A composite map frozen at one time for a given driver.
#[derive(Debug, Clone, Copy)]
pub struct FrozenMap<'a> {
    pub dist: FrozenDist<'a>,
    pub quantile: QuantileAt<'a>,
    /// `(μ_Y, σ_Y)` of the pivot standardization, if any.
    pub pivot: Option<(f64, f64)>,
}

impl FrozenMap<'_> {
    fn inner(&self, y: f64) -> f64 {
        match self.pivot {
            Some((m, s)) => (y - m) / s,
            None => y,
        }
    }

    fn outer(&self, w: f64) -> f64 {
        match self.pivot {
            Some((m, s)) => m + s * w,
            None => w,
        }
    }

    /// `Z = Q(F(y))`.
    pub fn apply(&self, y: f64) -> Result<f64> {
        let w = self.inner(y);
        if self.quantile.is_normal_based() {
            Ok(self.quantile.eval_x(self.dist.normal_score(w)?))
        } else {
            Ok(self.quantile.eval(self.dist.cdf(w)?))
        }
    }

    /// The driver value `y` mapped to `z`: `Q_F(F_ζ(z))`.
    pub fn preimage(&self, z: f64) -> Result<f64> {
        let w = if self.quantile.is_normal_based() {
            self.dist.from_normal_score(self.quantile.normal_score(z)?)?
        } else {
            self.dist.quantile(self.quantile.cdf(z)?)?
        };
        Ok(self.outer(w))
    }

    /// Density of `F` at the driver value `y` (chain-ruled through the pivot).
    pub fn dist_pdf(&self, y: f64) -> Result<f64> {
        let w = self.inner(y);
        let scale = self.pivot.map_or(1.0, |(_, s)| s);
        Ok(self.dist.pdf(w)? / scale)
    }
}

impl CompositeMap {
    pub fn new(dist: DistributionSpec, quantile: QuantileSpec, mode: MapMode) -> Self {
        let pivot_reference = (mode == MapMode::Pivot).then(DistributionSpec::standard_normal);
        CompositeMap {
            dist,
            quantile,
            mode,
            pivot_reference,
        }
    }

    /// `Q_ζ(F_W(t, w))` with `F_W` the law of standard Brownian motion.
    pub fn canonical_brownian(quantile: QuantileSpec) -> Self {
        Self::new(
            DistributionSpec::driver(DriverSpec::standard_brownian()),
            quantile,
            MapMode::TrueLaw,
        )
    }

    /// The map whose quantile is the generalized inverse of `dist` itself,
    /// so that `Q∘F` is the identity.
    pub fn identity_gaussian(mean: f64, variance: f64) -> Self {
        Self::new(
            DistributionSpec::gaussian(mean, variance),
            QuantileSpec::gaussian(mean, variance),
            MapMode::TrueLaw,
        )
    }

    pub fn freeze<'a>(&'a self, t: f64, driver: &DriverSpec) -> Result<FrozenMap<'a>> {
        let pivot = match self.mode {
            MapMode::Pivot => Some(Pivot::new(driver)?.moments(t)?),
            _ => None,
        };
        Ok(FrozenMap {
            dist: self.dist.freeze(t)?,
            quantile: self.quantile.at(t),
            pivot,
        })
    }

    /// Check parameter ranges and, for `TrueLaw`, that `F` is the driver's law.
    pub fn validate_for(&self, driver: &DriverSpec, times: &[f64]) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if let Err(v) = self.quantile.validate(times) {
            issues.extend(v);
        }
        if let Err(v) = self.dist.validate(times) {
            issues.extend(v);
        }
        match self.mode {
            MapMode::TrueLaw => {
                if let Err(e) = true_law_matches(&self.dist, driver, times) {
                    issues.push(e);
                }
            }
            MapMode::Pivot => {
                if !driver.is_gaussian() {
                    issues.push(format!("Pivot mode needs a Gaussian driver, got {}", driver.name()));
                }
            }
            MapMode::FalseLaw => {}
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

fn true_law_matches(dist: &DistributionSpec, driver: &DriverSpec, times: &[f64]) -> std::result::Result<(), String> {
    match dist {
        DistributionSpec::DriverMarginal { driver: d } if format!("{d:?}") == format!("{driver:?}") => Ok(()),
        DistributionSpec::Gaussian { mean, variance } if driver.is_gaussian() => {
            for &t in times.iter().filter(|t| **t > 0.0) {
                let (m, s) = driver.gaussian_moments(t).map_err(|e| e.to_string())?;
                let (fm, fv) = (mean.eval(t), variance.eval(t));
                if (fm - m).abs() > 1e-10 * (1.0 + m.abs()) || (fv - s * s).abs() > 1e-10 * (1.0 + s * s) {
                    return Err(format!(
                        "TrueLaw map: Gaussian(mean={fm}, variance={fv}) differs from the driver law N({m}, {}) at t={t}",
                        s * s
                    ));
                }
            }
            Ok(())
        }
        _ => Err(format!(
            "TrueLaw map requires the distribution to be the {} driver's own marginal law, got {}",
            driver.name(),
            dist.family()
        )),
    }
}

/// `output[n][k] = Q_ζ(t_k, F(t_k, input[n][k]))`.
pub fn apply_composite(map: &CompositeMap, ensemble: &PathEnsemble) -> Result<PathEnsemble> {
    let driver = &ensemble.driver;
    map.validate_for(driver, &ensemble.grid.times).map_err(Error::Validation)?;
    let frozen: Vec<FrozenMap<'_>> = ensemble
        .grid
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| map.freeze(t, driver).map_err(|e| e.at(0, k)))
        .collect::<Result<_>>()?;
    let paths = ensemble
        .paths
        .par_iter()
        .enumerate()
        .map(|(p, row)| {
            row.iter()
                .zip(&frozen)
                .enumerate()
                .map(|(k, (&y, fm))| fm.apply(y).map_err(|e| e.at(p, k)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        grid: ensemble.grid.clone(),
        paths,
        seed: ensemble.seed,
        driver: ensemble.driver.clone(),
    })
}

/// Standardization `ỹ = (y − μ_Y(t))/σ_Y(t)` of a Gaussian driver.
#[derive(Debug, Clone)]
pub struct Pivot {
    driver: DriverSpec,
}

impl Pivot {
    pub fn new(driver: &DriverSpec) -> Result<Self> {
        if !driver.is_gaussian() {
            return Err(Error::Capability(format!(
                "pivot standardization is implemented for Gaussian drivers only, got {}",
                driver.name()
            )));
        }
        Ok(Pivot { driver: driver.clone() })
    }

    /// `(μ_Y(t), σ_Y(t))`.
    pub fn moments(&self, t: f64) -> Result<(f64, f64)> {
        if !(t > 0.0) {
            return Err(Error::param(format!("pivot needs t > 0, got {t}")));
        }
        self.driver.gaussian_moments(t)
    }

    pub fn standardize(&self, t: f64, y: f64) -> Result<f64> {
        let (m, s) = self.moments(t)?;
        Ok((y - m) / s)
    }

    pub fn apply(&self, ensemble: &PathEnsemble) -> Result<PathEnsemble> {
        let moments = ensemble
            .grid
            .times
            .iter()
            .map(|&t| self.moments(t))
            .collect::<Result<Vec<_>>>()?;
        let paths = ensemble
            .paths
            .iter()
            .map(|row| row.iter().zip(&moments).map(|(y, (m, s))| (y - m) / s).collect())
            .collect();
        Ok(PathEnsemble {
            grid: ensemble.grid.clone(),
            paths,
            seed: ensemble.seed,
            driver: ensemble.driver.clone(),
        })
    }
}

/// Standardizing map of a Gaussian driver and its N(0, 1) reference law.
pub fn build_pivot(driver: &DriverSpec) -> Result<(Pivot, DistributionSpec)> {
    Ok((Pivot::new(driver)?, DistributionSpec::standard_normal()))
}

/// Tukey-g map with a Gaussian `F(m, v)` over a standardized Gaussian
/// driver, rewritten as a direct map of the raw driver value:
/// `Z = A* + (B*/g*)(e^{g* y} − 1)`.
#[derive(Debug, Clone)]
pub struct PivotTukeyG {
    pub a: TimeFn,
    pub b: TimeFn,
    pub g: TimeFn,
    pub m: TimeFn,
    pub v: TimeFn,
    pub mu_y: TimeFn,
    pub sigma_y: TimeFn,
}

impl PivotTukeyG {
    /// `(A*, B*, g*)` at time `t`.
    pub fn at(&self, t: f64) -> Result<(f64, f64, f64)> {
        let (a, b, g) = (self.a.eval(t), self.b.eval(t), self.g.eval(t));
        let (m, v) = (self.m.eval(t), self.v.eval(t));
        let (mu, sigma) = (self.mu_y.eval(t), self.sigma_y.eval(t));
        check_pivot_params(g, v, sigma, t)?;
        let scale = sigma * v.sqrt();
        let g_star = g / scale;
        let shift = (-g_star * (mu + sigma * m)).exp();
        let a_star = a + (b / g) * (shift - 1.0);
        let b_star = b * shift / scale;
        Ok((a_star, b_star, g_star))
    }

    pub fn eval(&self, t: f64, y: f64) -> Result<f64> {
        let (a, b, g) = self.at(t)?;
        Ok(a + b * g_term(g, y))
    }

    /// The reparameterized triple as time functions.
    pub fn time_fns(&self) -> (TimeFn, TimeFn, TimeFn) {
        let mk = |idx: usize| {
            let me = self.clone();
            TimeFn::custom(move |t| match me.at(t) {
                Ok(p) => [p.0, p.1, p.2][idx],
                Err(_) => f64::NAN,
            })
        };
        (mk(0), mk(1), mk(2))
    }
}

fn check_pivot_params(g: f64, v: f64, sigma: f64, t: f64) -> Result<()> {
    if g == 0.0 {
        return Err(Error::param(format!("Tukey-g pivot needs g ≠ 0 (t={t})")));
    }
    if !(v > 0.0) {
        return Err(Error::param(format!("Tukey-g pivot needs v > 0, got {v} (t={t})")));
    }
    if !(sigma > 0.0) {
        return Err(Error::param(format!("Tukey-g pivot needs σ_Y > 0, got {sigma} (t={t})")));
    }
    Ok(())
}

/// Reparameterize a Gaussian-pivot Tukey-g map as a direct Tukey-g map of
/// the driver. Constant inputs are checked immediately; time-dependent
/// ones when evaluated.
#[allow(clippy::too_many_arguments)]
pub fn pivot_gaussian_tukey_g_params(
    a: TimeFn,
    b: TimeFn,
    g: TimeFn,
    m: TimeFn,
    v: TimeFn,
    mu_y: TimeFn,
    sigma_y: TimeFn,
) -> Result<PivotTukeyG> {
    if let (Some(gc), Some(vc), Some(sc)) = (g.as_constant(), v.as_constant(), sigma_y.as_constant()) {
        check_pivot_params(gc, vc, sc, 0.0)?;
    }
    Ok(PivotTukeyG {
        a,
        b,
        g,
        m,
        v,
        mu_y,
        sigma_y,
    })
}

/// Moments of `Z = A + (B/g)(e^{g(X − m)/√v} − 1)`, `X ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TukeyGMoments {
    pub mean: f64,
    pub variance: f64,
    /// Third standardized-moment factor `(e^{σ²}+2)√(e^{σ²}−1)` with `σ² = g²/v`.
    pub mu3_factor: f64,
    /// Fourth-moment factor `e^{4σ²}+2e^{3σ²}+3e^{2σ²}−6`.
    pub mu4_factor: f64,
    /// Skewness of `Z` (sign follows `g`).
    pub skewness: f64,
    /// Excess kurtosis of `Z`.
    pub excess_kurtosis: f64,
}

pub fn tukey_g_gaussian_moments(a: f64, b: f64, g: f64, m: f64, v: f64) -> Result<TukeyGMoments> {
    if g == 0.0 || !(v > 0.0) {
        return Err(Error::param("Tukey-g moments need g ≠ 0 and v > 0"));
    }
    let s2 = g * g / v;
    let mean = a + (b / g) * ((-m * g / v.sqrt() + 0.5 * s2).exp() - 1.0);
    let variance = (b * b / (g * g)) * s2.exp_m1() * (-2.0 * g * m / v.sqrt() + s2).exp();
    let mu3_factor = (s2.exp() + 2.0) * s2.exp_m1().sqrt();
    let mu4_factor = (4.0 * s2).exp() + 2.0 * (3.0 * s2).exp() + 3.0 * (2.0 * s2).exp() - 6.0;
    Ok(TukeyGMoments {
        mean,
        variance,
        mu3_factor,
        mu4_factor,
        skewness: g.signum() * b.signum() * mu3_factor,
        excess_kurtosis: mu4_factor,
    })
}

/// Discrete pivot map: counts `n` of a homogeneous Poisson pivot observed at
/// time `t` are sent through the Poisson(θt) CDF and then `Q_ζ`.
pub fn poisson_pivot_composite(quantile: &QuantileSpec, theta: f64, t: f64, counts: &[f64]) -> Result<Vec<f64>> {
    if !(theta > 0.0 && t > 0.0) {
        return Err(Error::param("Poisson pivot composite needs θ > 0 and t > 0"));
    }
    let law = Poisson::new(theta * t).map_err(|e| Error::param(e.to_string()))?;
    let q = quantile.at(t);
    counts
        .iter()
        .map(|&n| {
            if n < 0.0 || n.fract() != 0.0 {
                return Err(Error::Mapping(format!("pivot count {n} is not a non-negative integer")));
            }
            Ok(q.eval(law.cdf(n as u64)))
        })
        .collect()
}

/// Mass function of the Poisson(θt) law used by [`poisson_pivot_composite`].
pub fn poisson_mass(theta: f64, t: f64, n: u64) -> Result<f64> {
    let law = Poisson::new(theta * t).map_err(|e| Error::param(e.to_string()))?;
    Ok(law.pmf(n))
}
