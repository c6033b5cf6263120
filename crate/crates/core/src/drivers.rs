//! Driving risk processes: exact simulation on a time grid and evaluation
//! of their marginal and transition laws.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Discrete, DiscreteCDF, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{brent, integrate, integrate_pieces, norm_cdf, norm_pdf, norm_ppf, QuadOptions, TimeFn};
use crate::rng::path_rng;

/// Smallest admissible evaluation time for marginal laws.
pub const MIN_TIME: f64 = 1e-6;

/// Observation times of an ensemble.
///
/// Paths start at `origin` (default 0) from `origin_value`; when that is
/// `None` the driver's own initial value is used. `times` are the
/// observation instants and may include `origin` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    #[serde(default)]
    pub origin: f64,
    #[serde(default)]
    pub origin_value: Option<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        let grid = TimeGrid {
            times,
            origin: 0.0,
            origin_value: None,
        };
        grid.validate().map_err(Error::Validation)?;
        Ok(grid)
    }

    /// Grid that restarts a driver from `value` at time `origin`.
    pub fn starting_at(times: Vec<f64>, origin: f64, value: f64) -> Result<Self> {
        let grid = TimeGrid {
            times,
            origin,
            origin_value: Some(value),
        };
        grid.validate().map_err(Error::Validation)?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if self.times.is_empty() {
            issues.push("time grid must contain at least one time".to_string());
        }
        if self.times.iter().any(|t| !t.is_finite()) {
            issues.push("time grid values must be finite".to_string());
        }
        if self.origin < 0.0 || !self.origin.is_finite() {
            issues.push("grid origin must be a finite non-negative time".to_string());
        }
        if let Some(&t0) = self.times.first() {
            if t0 < self.origin {
                issues.push(format!("first grid time {t0} precedes origin {}", self.origin));
            }
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            issues.push("time grid must be strictly increasing".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

fn zero() -> TimeFn {
    TimeFn::Constant(0.0)
}

fn one() -> TimeFn {
    TimeFn::Constant(1.0)
}

/// A driving process and its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverSpec {
    /// `dY = drift(t) dt + volatility(t) dW`, `Y_0 = y0`.
    Brownian {
        #[serde(default = "zero")]
        drift: TimeFn,
        #[serde(default = "one")]
        volatility: TimeFn,
        #[serde(default)]
        y0: f64,
    },
    /// `dY = θ(t)(μ(t) − Y) dt + σ(t) dW`, `Y_0 = y0`.
    #[serde(rename = "ou", alias = "inhomogeneous_ou")]
    InhomogeneousOU {
        theta: TimeFn,
        mu: TimeFn,
        sigma: TimeFn,
        #[serde(default)]
        y0: f64,
    },
    /// Variance gamma with drift `mu`, volatility `sigma` and variance rate `nu`.
    VarianceGamma { mu: f64, sigma: f64, nu: f64 },
    /// Gamma subordinator with mean rate `mean_rate` and variance rate `variance_rate`.
    GammaProcess { mean_rate: f64, variance_rate: f64 },
    /// Counting process with deterministic intensity. `sup_bounds`, when
    /// given, holds one intensity bound per grid interval for thinning.
    #[serde(rename = "poisson", alias = "inhomogeneous_poisson")]
    InhomogeneousPoisson {
        intensity: TimeFn,
        #[serde(default)]
        sup_bounds: Option<Vec<f64>>,
    },
}

/// Gaussian transition `Y_t | Y_s = x ~ N(a·x + b, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianStep {
    pub a: f64,
    pub b: f64,
    pub sd: f64,
}

impl GaussianStep {
    pub fn mean(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

const LAW_TOL: f64 = 1e-10;

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    Ok(integrate(f, a, b, QuadOptions::abs(LAW_TOL))?.value)
}

impl DriverSpec {
    pub fn standard_brownian() -> Self {
        DriverSpec::Brownian {
            drift: zero(),
            volatility: one(),
            y0: 0.0,
        }
    }

    pub fn ou_constant(theta: f64, mu: f64, sigma: f64, y0: f64) -> Self {
        DriverSpec::InhomogeneousOU {
            theta: theta.into(),
            mu: mu.into(),
            sigma: sigma.into(),
            y0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriverSpec::Brownian { .. } => "Brownian",
            DriverSpec::InhomogeneousOU { .. } => "InhomogeneousOU",
            DriverSpec::VarianceGamma { .. } => "VarianceGamma",
            DriverSpec::GammaProcess { .. } => "GammaProcess",
            DriverSpec::InhomogeneousPoisson { .. } => "InhomogeneousPoisson",
        }
    }

    /// Value of the driver at time 0.
    pub fn initial_value(&self) -> f64 {
        match self {
            DriverSpec::Brownian { y0, .. } | DriverSpec::InhomogeneousOU { y0, .. } => *y0,
            _ => 0.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, DriverSpec::Brownian { .. } | DriverSpec::InhomogeneousOU { .. })
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DriverSpec::InhomogeneousPoisson { .. })
    }

    /// Check parameter ranges; time-dependent parameters are checked at the
    /// grid times when a grid is given.
    pub fn validate(&self, grid: Option<&TimeGrid>) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        let times: Vec<f64> = grid.map(|g| g.times.clone()).unwrap_or_else(|| vec![0.0]);
        let mut check_fn = |name: &str, f: &TimeFn, positive: bool, nonneg: bool| {
            if let Err(e) = f.validate() {
                issues.push(format!("{}: {name}: {e}", self.name()));
                return;
            }
            for &t in &times {
                let v = f.eval(t);
                if !v.is_finite() {
                    issues.push(format!("{}: {name}(t={t}) is not finite", self.name()));
                    break;
                }
                if positive && v <= 0.0 {
                    issues.push(format!("{}: {name}(t={t}) must be > 0, got {v}", self.name()));
                    break;
                }
                if nonneg && v < 0.0 {
                    issues.push(format!("{}: {name}(t={t}) must be ≥ 0, got {v}", self.name()));
                    break;
                }
            }
        };
        match self {
            DriverSpec::Brownian { drift, volatility, .. } => {
                check_fn("drift", drift, false, false);
                check_fn("volatility", volatility, true, false);
            }
            DriverSpec::InhomogeneousOU { theta, mu, sigma, y0 } => {
                check_fn("theta", theta, false, true);
                check_fn("mu", mu, false, false);
                check_fn("sigma", sigma, true, false);
                if !y0.is_finite() {
                    issues.push("InhomogeneousOU: y0 must be finite".into());
                }
            }
            DriverSpec::VarianceGamma { mu, sigma, nu } => {
                if !mu.is_finite() {
                    issues.push("VarianceGamma: mu must be finite".into());
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    issues.push(format!("VarianceGamma: sigma must be > 0, got {sigma}"));
                }
                if !(*nu > 0.0 && nu.is_finite()) {
                    issues.push(format!("VarianceGamma: nu must be > 0, got {nu}"));
                }
            }
            DriverSpec::GammaProcess {
                mean_rate,
                variance_rate,
            } => {
                if !(*mean_rate > 0.0 && mean_rate.is_finite()) {
                    issues.push(format!("GammaProcess: mean_rate must be > 0, got {mean_rate}"));
                }
                if !(*variance_rate > 0.0 && variance_rate.is_finite()) {
                    issues.push(format!("GammaProcess: variance_rate must be > 0, got {variance_rate}"));
                }
            }
            DriverSpec::InhomogeneousPoisson { intensity, sup_bounds } => {
                check_fn("intensity", intensity, false, true);
                if let (Some(b), Some(g)) = (sup_bounds, grid) {
                    if b.len() != g.len() {
                        issues.push(format!(
                            "InhomogeneousPoisson: sup_bounds needs one bound per grid interval ({}), got {}",
                            g.len(),
                            b.len()
                        ));
                    }
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    fn check(&self, grid: Option<&TimeGrid>) -> Result<()> {
        self.validate(grid).map_err(|v| Error::Parameter(v.join("; ")))
    }

    /// Gaussian transition from `(s, ·)` to `t` for Brownian and OU drivers.
    pub fn gaussian_step(&self, s: f64, t: f64) -> Result<GaussianStep> {
        if t < s {
            return Err(Error::param(format!("transition needs s ≤ t, got s={s}, t={t}")));
        }
        match self {
            DriverSpec::Brownian { drift, volatility, .. } => {
                let b = drift.integral(s, t)?;
                let var = match volatility.as_constant() {
                    Some(v) => v * v * (t - s),
                    None => quad(|r| volatility.eval(r).powi(2), s, t)?,
                };
                Ok(GaussianStep {
                    a: 1.0,
                    b,
                    sd: var.max(0.0).sqrt(),
                })
            }
            DriverSpec::InhomogeneousOU { theta, mu, sigma, .. } => {
                let dt = t - s;
                if let (Some(th), Some(m), Some(sg)) = (theta.as_constant(), mu.as_constant(), sigma.as_constant()) {
                    if th == 0.0 {
                        return Ok(GaussianStep {
                            a: 1.0,
                            b: 0.0,
                            sd: sg * dt.sqrt(),
                        });
                    }
                    let a = (-th * dt).exp();
                    let var = sg * sg * (-(-2.0 * th * dt).exp_m1()) / (2.0 * th);
                    return Ok(GaussianStep {
                        a,
                        b: m * (1.0 - a),
                        sd: var.sqrt(),
                    });
                }
                // I(r, t) = ∫_r^t θ = I(s, t) − ∫_s^r θ
                let i_st = theta.integral(s, t)?;
                let i_rt = |r: f64| i_st - theta.integral(s, r).unwrap_or(f64::NAN);
                let b = quad(|r| (-i_rt(r)).exp() * theta.eval(r) * mu.eval(r), s, t)?;
                let var = quad(|r| (-2.0 * i_rt(r)).exp() * sigma.eval(r).powi(2), s, t)?;
                Ok(GaussianStep {
                    a: (-i_st).exp(),
                    b,
                    sd: var.max(0.0).sqrt(),
                })
            }
            _ => Err(Error::Capability(format!("{} has no Gaussian transition", self.name()))),
        }
    }

    /// Mean and standard deviation of `Y_t` started from the driver's own
    /// initial value at time 0.
    pub fn gaussian_moments(&self, t: f64) -> Result<(f64, f64)> {
        let step = self.gaussian_step(0.0, t)?;
        Ok((step.mean(self.initial_value()), step.sd))
    }

    /// Marginal CDF `F_Y(t, y)` from the natural start at time 0.
    pub fn marginal_cdf(&self, t: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param(format!("marginal law needs t > 0, got {t}")));
        }
        self.transition_cdf(0.0, self.initial_value(), t, y)
    }

    /// Marginal density `f_Y(t, y)` (probability mass for the counting driver).
    pub fn marginal_pdf(&self, t: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param(format!("marginal law needs t > 0, got {t}")));
        }
        self.transition_pdf(0.0, self.initial_value(), t, y)
    }

    pub fn marginal_quantile(&self, t: f64, p: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::param(format!("marginal law needs t > 0, got {t}")));
        }
        self.transition_quantile(0.0, self.initial_value(), t, p)
    }

    /// `P(Y_t ≤ y | Y_s = x)`.
    pub fn transition_cdf(&self, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
        let dt = t - s;
        if dt < 0.0 {
            return Err(Error::param(format!("transition needs s ≤ t, got s={s}, t={t}")));
        }
        if dt == 0.0 {
            return Ok(if y >= x { 1.0 } else { 0.0 });
        }
        match self {
            DriverSpec::Brownian { .. } | DriverSpec::InhomogeneousOU { .. } => {
                let step = self.gaussian_step(s, t)?;
                Ok(norm_cdf((y - step.mean(x)) / step.sd))
            }
            DriverSpec::VarianceGamma { mu, sigma, nu } => vg_cdf(*mu, *sigma, *nu, dt, y - x),
            DriverSpec::GammaProcess {
                mean_rate,
                variance_rate,
            } => {
                let d = gamma_law(*mean_rate, *variance_rate, dt)?;
                Ok(if y - x <= 0.0 { 0.0 } else { d.cdf(y - x) })
            }
            DriverSpec::InhomogeneousPoisson { intensity, .. } => {
                let m = intensity.integral(s, t)?;
                let k = (y - x).floor();
                if k < 0.0 {
                    return Ok(0.0);
                }
                if m == 0.0 {
                    return Ok(1.0);
                }
                let d = Poisson::new(m).map_err(|e| Error::param(e.to_string()))?;
                Ok(d.cdf(k as u64))
            }
        }
    }

    /// Transition density of `Y_t` given `Y_s = x` (mass function for the
    /// counting driver).
    pub fn transition_pdf(&self, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
        let dt = t - s;
        if !(dt > 0.0) {
            return Err(Error::param(format!("transition density needs s < t, got s={s}, t={t}")));
        }
        match self {
            DriverSpec::Brownian { .. } | DriverSpec::InhomogeneousOU { .. } => {
                let step = self.gaussian_step(s, t)?;
                Ok(norm_pdf((y - step.mean(x)) / step.sd) / step.sd)
            }
            DriverSpec::VarianceGamma { mu, sigma, nu } => vg_pdf(*mu, *sigma, *nu, dt, y - x),
            DriverSpec::GammaProcess {
                mean_rate,
                variance_rate,
            } => {
                let d = gamma_law(*mean_rate, *variance_rate, dt)?;
                Ok(if y - x <= 0.0 { 0.0 } else { d.pdf(y - x) })
            }
            DriverSpec::InhomogeneousPoisson { intensity, .. } => {
                let m = intensity.integral(s, t)?;
                let k = y - x;
                if k < 0.0 || k.fract() != 0.0 {
                    return Ok(0.0);
                }
                if m == 0.0 {
                    return Ok(if k == 0.0 { 1.0 } else { 0.0 });
                }
                let d = Poisson::new(m).map_err(|e| Error::param(e.to_string()))?;
                Ok(d.pmf(k as u64))
            }
        }
    }

    /// Generalized inverse of the transition CDF.
    pub fn transition_quantile(&self, s: f64, x: f64, t: f64, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("probability must lie in [0,1], got {p}")));
        }
        if t - s == 0.0 {
            return Ok(x);
        }
        match self {
            DriverSpec::Brownian { .. } | DriverSpec::InhomogeneousOU { .. } => {
                let step = self.gaussian_step(s, t)?;
                Ok(step.mean(x) + step.sd * norm_ppf(p))
            }
            DriverSpec::GammaProcess { .. } | DriverSpec::VarianceGamma { .. } => {
                let lower = if matches!(self, DriverSpec::GammaProcess { .. }) {
                    x
                } else {
                    f64::NEG_INFINITY
                };
                if p == 0.0 {
                    return Ok(lower);
                }
                if p == 1.0 {
                    return Ok(f64::INFINITY);
                }
                let (mean, sd) = self.increment_moments(t - s);
                let f = |y: f64| self.transition_cdf(s, x, t, y).map(|c| c - p);
                invert_monotone(f, x + mean, sd.max(1e-12), lower)
            }
            DriverSpec::InhomogeneousPoisson { intensity, .. } => {
                let m = intensity.integral(s, t)?;
                if p == 1.0 {
                    return Ok(f64::INFINITY);
                }
                let mut k = 0.0;
                let mut c = self.transition_cdf(s, x, t, x)?;
                let cap = m + 50.0 * m.sqrt() + 100.0;
                while c < p {
                    k += 1.0;
                    if k > cap {
                        return Err(Error::numeric("Poisson quantile search", 1.0 - c));
                    }
                    c = self.transition_cdf(s, x, t, x + k)?;
                }
                Ok(x + k)
            }
        }
    }

    /// Mean and standard deviation of an increment over `dt` for the Lévy
    /// drivers.
    fn increment_moments(&self, dt: f64) -> (f64, f64) {
        match self {
            DriverSpec::VarianceGamma { mu, sigma, nu } => (mu * dt, ((sigma * sigma + mu * mu * nu) * dt).sqrt()),
            DriverSpec::GammaProcess {
                mean_rate,
                variance_rate,
            } => (mean_rate * dt, (variance_rate * dt).sqrt()),
            _ => (0.0, 1.0),
        }
    }
}

/// Root of an increasing function `f` (returning `F(y) − p`) found by
/// expanding a bracket around `center` in steps of `scale`.
fn invert_monotone<F: Fn(f64) -> Result<f64>>(f: F, center: f64, scale: f64, lower: f64) -> Result<f64> {
    let mut lo = center - scale;
    let mut hi = center + scale;
    if lo < lower {
        lo = lower;
    }
    let mut width = scale;
    for _ in 0..200 {
        if f(lo)? <= 0.0 {
            break;
        }
        width *= 2.0;
        lo = (center - width).max(lower);
    }
    width = scale;
    for _ in 0..200 {
        if f(hi)? >= 0.0 {
            break;
        }
        width *= 2.0;
        hi = center + width;
    }
    let failure = std::cell::RefCell::new(None);
    let root = brent(
        |y| match f(y) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        1e-12 * (1.0 + center.abs()),
        300,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

fn gamma_law(mean_rate: f64, variance_rate: f64, dt: f64) -> Result<statrs::distribution::Gamma> {
    let shape = mean_rate * mean_rate * dt / variance_rate;
    let rate = mean_rate / variance_rate;
    statrs::distribution::Gamma::new(shape, rate).map_err(|e| Error::param(e.to_string()))
}

/// Integration range in `s = ln u` for the gamma mixing density with shape
/// `k` and scale `nu`, cut where the log-density is 16 decades below its
/// mode.
fn vg_log_range(k: f64, nu: f64) -> Result<(f64, f64)> {
    let log_h = |s: f64| k * s - s.exp() / nu;
    let s_star = (k * nu).ln();
    let level = log_h(s_star) - 16.0 * std::f64::consts::LN_10;
    let g = |s: f64| log_h(s) - level;
    let mut step = 1.0;
    let mut lo = s_star - step;
    while g(lo) > 0.0 {
        step *= 2.0;
        lo = s_star - step;
    }
    step = 1.0;
    let mut hi = s_star + step;
    while g(hi) > 0.0 {
        step *= 2.0;
        hi = s_star + step;
    }
    let a = brent(g, lo, s_star, 1e-10, 200)?;
    let b = brent(g, s_star, hi, 1e-10, 200)?;
    Ok((a, b))
}

fn vg_mixture<F: Fn(f64) -> f64>(nu: f64, dt: f64, kernel: F) -> Result<f64> {
    let k = dt / nu;
    let (a, b) = vg_log_range(k, nu)?;
    let s_star = (k * nu).ln();
    let norm = k * nu.ln() + ln_gamma(k);
    let integrand = |s: f64| {
        let u = s.exp();
        let w = (k * s - u / nu - norm).exp();
        if w == 0.0 {
            0.0
        } else {
            kernel(u) * w
        }
    };
    let q = integrate_pieces(integrand, &[a, s_star, b], QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 4000 })?;
    Ok(q.value)
}

/// CDF of a variance-gamma increment over `dt`, as a gamma mixture of
/// Gaussian CDFs.
pub fn vg_cdf(mu: f64, sigma: f64, nu: f64, dt: f64, y: f64) -> Result<f64> {
    let v = vg_mixture(nu, dt, |u| norm_cdf((y - mu * u) / (sigma * u.sqrt())))?;
    Ok(v.clamp(0.0, 1.0))
}

/// Density of a variance-gamma increment over `dt`.
pub fn vg_pdf(mu: f64, sigma: f64, nu: f64, dt: f64, y: f64) -> Result<f64> {
    let v = vg_mixture(nu, dt, |u| {
        let sd = sigma * u.sqrt();
        norm_pdf((y - mu * u) / sd) / sd
    })?;
    Ok(v.max(0.0))
}

/// `N` sample paths observed on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    /// One row per path, one column per grid time.
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
    pub driver: DriverSpec,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k]).collect()
    }

    /// Write the CSV form: a header of grid times, then one path per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = self.grid.times.iter().map(|t| crate::format::sig9(*t)).collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.paths {
            w.write_record(row.iter().map(|v| crate::format::sig9(*v))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the CSV form; the driver and seed are not part of the file.
    pub fn read_csv<R: Read>(input: R, driver: DriverSpec, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let times = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|h| h.trim().parse::<f64>().map_err(|e| Error::Parse(format!("grid time {h:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut paths = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("value {v:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != times.len() {
                return Err(Error::Parse(format!("row of length {} under a {}-column header", row.len(), times.len())));
            }
            paths.push(row);
        }
        Ok(PathEnsemble {
            grid: TimeGrid::new(times)?,
            paths,
            seed,
            driver,
        })
    }

    const MAGIC: &'static [u8; 8] = b"QPVPENS1";

    /// Lossless little-endian binary form including seed and driver.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let driver = serde_json::to_vec(&self.driver).map_err(|e| Error::Capability(format!("driver not serializable: {e}")))?;
        out.write_all(Self::MAGIC)?;
        for v in [self.seed, self.paths.len() as u64, self.grid.len() as u64, driver.len() as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&driver)?;
        out.write_all(&self.grid.origin.to_le_bytes())?;
        out.write_all(&self.grid.origin_value.unwrap_or(f64::NAN).to_le_bytes())?;
        for t in &self.grid.times {
            out.write_all(&t.to_le_bytes())?;
        }
        for row in &self.paths {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Parse("not a path ensemble file".into()));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let seed = next_u64(&mut input)?;
        let n = next_u64(&mut input)? as usize;
        let k = next_u64(&mut input)? as usize;
        let dlen = next_u64(&mut input)? as usize;
        let mut dbytes = vec![0u8; dlen];
        input.read_exact(&mut dbytes)?;
        let driver: DriverSpec = serde_json::from_slice(&dbytes).map_err(|e| Error::Parse(e.to_string()))?;
        let next_f64 = |r: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let origin = next_f64(&mut input)?;
        let ov = next_f64(&mut input)?;
        let times = (0..k).map(|_| next_f64(&mut input)).collect::<Result<Vec<_>>>()?;
        let mut paths = Vec::with_capacity(n);
        for _ in 0..n {
            paths.push((0..k).map(|_| next_f64(&mut input)).collect::<Result<Vec<_>>>()?);
        }
        Ok(PathEnsemble {
            grid: TimeGrid {
                times,
                origin,
                origin_value: if ov.is_nan() { None } else { Some(ov) },
            },
            paths,
            seed,
            driver,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// How the variance-gamma increments are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgScheme {
    /// Difference of two independent gamma processes.
    GammaDifference,
    /// Brownian motion with drift run on a gamma clock.
    TimeChanged,
}

enum StepPlan {
    Gaussian(Vec<GaussianStep>),
    Vg {
        dts: Vec<f64>,
        mu: f64,
        sigma: f64,
        nu: f64,
        scheme: VgScheme,
    },
    Gamma {
        dts: Vec<f64>,
        mean_rate: f64,
        variance_rate: f64,
    },
    Poisson {
        bounds: Vec<f64>,
    },
}

/// Per-interval intensity bound: caller-supplied, or the maximum over 1000
/// equally spaced points of the interval.
fn thinning_bounds(intensity: &TimeFn, sup_bounds: &Option<Vec<f64>>, knots: &[f64]) -> Result<Vec<f64>> {
    let n = knots.len() - 1;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let bound = match sup_bounds {
            Some(b) => b[i],
            None => {
                let (a, c) = (knots[i], knots[i + 1]);
                (0..=1000)
                    .map(|j| intensity.eval(a + (c - a) * j as f64 / 1000.0))
                    .fold(0.0_f64, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
            }
        };
        if !bound.is_finite() {
            return Err(Error::Simulation(format!(
                "intensity supremum on [{}, {}] is not finite",
                knots[i],
                knots[i + 1]
            )));
        }
        if bound < 0.0 {
            return Err(Error::param("intensity bounds must be non-negative"));
        }
        out.push(bound);
    }
    Ok(out)
}

fn plan_steps(driver: &DriverSpec, knots: &[f64], scheme: VgScheme) -> Result<StepPlan> {
    let dts: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(match driver {
        DriverSpec::Brownian { .. } | DriverSpec::InhomogeneousOU { .. } => StepPlan::Gaussian(
            knots
                .windows(2)
                .map(|w| driver.gaussian_step(w[0], w[1]))
                .collect::<Result<Vec<_>>>()?,
        ),
        DriverSpec::VarianceGamma { mu, sigma, nu } => StepPlan::Vg {
            dts,
            mu: *mu,
            sigma: *sigma,
            nu: *nu,
            scheme,
        },
        DriverSpec::GammaProcess {
            mean_rate,
            variance_rate,
        } => StepPlan::Gamma {
            dts,
            mean_rate: *mean_rate,
            variance_rate: *variance_rate,
        },
        DriverSpec::InhomogeneousPoisson { intensity, sup_bounds } => StepPlan::Poisson {
            bounds: thinning_bounds(intensity, sup_bounds, knots)?,
        },
    })
}

fn gamma_draw<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale).expect("validated gamma parameters").sample(rng)
}

fn simulate_row(
    driver: &DriverSpec,
    plan: &StepPlan,
    knots: &[f64],
    start: f64,
    skip_first: bool,
    seed: u64,
    path: usize,
) -> Vec<f64> {
    let mut rng = path_rng(seed, path);
    let steps = knots.len() - 1;
    let mut row = Vec::with_capacity(steps + 1);
    let mut y = start;
    if !skip_first {
        row.push(y);
    }
    for i in 0..steps {
        y = match plan {
            StepPlan::Gaussian(g) => {
                let z: f64 = StandardNormal.sample(&mut rng);
                g[i].mean(y) + g[i].sd * z
            }
            StepPlan::Vg {
                dts,
                mu,
                sigma,
                nu,
                scheme,
            } => {
                let dt = dts[i];
                match scheme {
                    VgScheme::GammaDifference => {
                        let root = 0.5 * (mu * mu + 2.0 * sigma * sigma / nu).sqrt();
                        let (mp, mn) = (root + 0.5 * mu, root - 0.5 * mu);
                        let gp = gamma_draw(&mut rng, dt / nu, mp * nu);
                        let gn = gamma_draw(&mut rng, dt / nu, mn * nu);
                        y + gp - gn
                    }
                    VgScheme::TimeChanged => {
                        let g = gamma_draw(&mut rng, dt / nu, *nu);
                        let z: f64 = StandardNormal.sample(&mut rng);
                        y + mu * g + sigma * g.sqrt() * z
                    }
                }
            }
            StepPlan::Gamma {
                dts,
                mean_rate,
                variance_rate,
            } => {
                let shape = mean_rate * mean_rate * dts[i] / variance_rate;
                y + gamma_draw(&mut rng, shape, variance_rate / mean_rate)
            }
            StepPlan::Poisson { bounds } => {
                let DriverSpec::InhomogeneousPoisson { intensity, .. } = driver else {
                    unreachable!("plan matches driver")
                };
                let (a, b) = (knots[i], knots[i + 1]);
                let lmax = bounds[i];
                let mut count = 0.0;
                if lmax > 0.0 {
                    let mut s = a;
                    loop {
                        let e: f64 = Exp1.sample(&mut rng);
                        s += e / lmax;
                        if s > b {
                            break;
                        }
                        let accept: f64 = rng.random();
                        if accept * lmax <= intensity.eval(s) {
                            count += 1.0;
                        }
                    }
                }
                y + count
            }
        };
        row.push(y);
    }
    row
}

fn knots_for(grid: &TimeGrid) -> (Vec<f64>, bool) {
    let mut knots = Vec::with_capacity(grid.len() + 1);
    let skip_first = grid.times[0] > grid.origin;
    if skip_first {
        knots.push(grid.origin);
    }
    knots.extend_from_slice(&grid.times);
    (knots, skip_first)
}

/// Simulate `n_paths` paths of `driver` on `grid` with exact transitions.
pub fn simulate(driver: &DriverSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    simulate_with(driver, grid, n_paths, seed, VgScheme::GammaDifference)
}

/// As [`simulate`], choosing the variance-gamma construction.
pub fn simulate_with(
    driver: &DriverSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    scheme: VgScheme,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::param("n_paths must be at least 1"));
    }
    grid.validate().map_err(Error::Validation)?;
    driver.check(Some(grid))?;
    if let DriverSpec::InhomogeneousPoisson {
        sup_bounds: Some(b), ..
    } = driver
    {
        if b.len() != grid.len() {
            return Err(Error::param("sup_bounds must have one entry per grid interval"));
        }
    }
    let (knots, skip_first) = knots_for(grid);
    let plan = plan_steps(driver, &knots, scheme)?;
    let start = grid.origin_value.unwrap_or_else(|| driver.initial_value());
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| simulate_row(driver, &plan, &knots, start, skip_first, seed, p))
        .collect();
    Ok(PathEnsemble {
        grid: grid.clone(),
        paths,
        seed,
        driver: driver.clone(),
    })
}

/// Event times of the counting driver on `(0, horizon]`, by thinning.
pub fn simulate_poisson_events(intensity: &TimeFn, horizon: f64, bound: Option<f64>, seed: u64) -> Result<Vec<f64>> {
    let lmax = thinning_bounds(intensity, &bound.map(|b| vec![b]), &[0.0, horizon])?[0];
    let mut rng = path_rng(seed, 0);
    let mut events = Vec::new();
    if lmax == 0.0 {
        return Ok(events);
    }
    let mut s = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        s += e / lmax;
        if s > horizon {
            break;
        }
        let accept: f64 = rng.random();
        if accept * lmax <= intensity.eval(s) {
            events.push(s);
        }
    }
    Ok(events)
}

/// Probability integral transform of each column: `U = F_Y(t_k, Y_{t_k})`
/// under the law started at the grid origin. Output lies strictly inside
/// `(0, 1)`.
pub fn uniformize(driver: &DriverSpec, ensemble: &PathEnsemble) -> Result<PathEnsemble> {
    if driver.is_discrete() {
        return Err(Error::Capability(
            "uniformize needs a continuous marginal law; the counting driver is discrete".into(),
        ));
    }
    let grid = &ensemble.grid;
    let start = grid.origin_value.unwrap_or_else(|| driver.initial_value());
    for &t in &grid.times {
        if t - grid.origin < MIN_TIME {
            return Err(Error::param(format!(
                "uniformize needs grid times at least {MIN_TIME} after the origin, got {t}"
            )));
        }
    }
    let lo = f64::MIN_POSITIVE;
    let hi = 1.0 - f64::EPSILON / 2.0;
    let gaussian: Option<Vec<GaussianStep>> = if driver.is_gaussian() {
        Some(
            grid.times
                .iter()
                .map(|&t| driver.gaussian_step(grid.origin, t))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let paths = ensemble
        .paths
        .par_iter()
        .enumerate()
        .map(|(p, row)| {
            row.iter()
                .enumerate()
                .map(|(k, &y)| {
                    let u = match &gaussian {
                        Some(steps) => norm_cdf((y - steps[k].mean(start)) / steps[k].sd),
                        None => driver
                            .transition_cdf(grid.origin, start, grid.times[k], y)
                            .map_err(|e| e.at(p, k))?,
                    };
                    Ok(u.clamp(lo, hi))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        grid: grid.clone(),
        paths,
        seed: ensemble.seed,
        driver: ensemble.driver.clone(),
    })
}

fn cumulative_intensity(lambda: &TimeFn, t: f64) -> Result<f64> {
    lambda.integral(0.0, t)
}

/// Time change that turns an inhomogeneous Poisson process with intensity
/// `λ` into a homogeneous one with rate `target_rate`: each event time `t`
/// maps to `μ(t)/λ̃` with `μ(t) = ∫_0^t λ`.
pub fn poisson_pivot(lambda: &TimeFn, target_rate: f64, events: &[f64]) -> Result<Vec<f64>> {
    if !(target_rate > 0.0 && target_rate.is_finite()) {
        return Err(Error::param(format!("target rate must be positive, got {target_rate}")));
    }
    events
        .iter()
        .map(|&t| {
            let m = cumulative_intensity(lambda, t)?;
            // The map is invertible at t only if μ increases on every
            // neighbourhood of t.
            let h = 1e-7 * (1.0 + t.abs());
            let left = cumulative_intensity(lambda, (t - h).max(0.0))?;
            let right = cumulative_intensity(lambda, t + h)?;
            if !(right > left) {
                return Err(Error::Mapping(format!(
                    "cumulative intensity is flat around event time {t}; the pivot map is not invertible there"
                )));
            }
            Ok(m / target_rate)
        })
        .collect()
}

/// Inverse of [`poisson_pivot`]: `ψ(x) = μ⁻(λ̃x)` by root finding on the
/// cumulative intensity.
pub fn poisson_unpivot(lambda: &TimeFn, target_rate: f64, mapped: &[f64]) -> Result<Vec<f64>> {
    mapped
        .iter()
        .map(|&x| {
            let level = target_rate * x;
            if level <= 0.0 {
                return Ok(0.0);
            }
            let mut hi = 1.0;
            let mut guard = 0;
            while cumulative_intensity(lambda, hi)? < level {
                hi *= 2.0;
                guard += 1;
                if guard > 200 {
                    return Err(Error::Mapping(format!("cumulative intensity never reaches {level}")));
                }
            }
            let failure = std::cell::RefCell::new(None);
            let root = brent(
                |t| match cumulative_intensity(lambda, t) {
                    Ok(v) => v - level,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        0.0
                    }
                },
                0.0,
                hi,
                1e-13 * hi,
                300,
            )?;
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(root),
            }
        })
        .collect()
}
