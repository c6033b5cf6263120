//! Distorted laws, Radon–Nikodym derivatives and pricing kernels induced by
//! a composite map over a Markov driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::{DriverSpec, PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::numerics::{try_integrate, QuadOptions, TimeFn};
use crate::stats::mean_se;
use crate::transforms::{poisson_mass, CompositeMap, FrozenMap};

/// The law of `Z_t = Q_ζ(t, F(t, Y_t))` under the base measure.
#[derive(Debug, Clone)]
pub struct DistortedLaw {
    pub map: CompositeMap,
    pub base: DriverSpec,
}

impl DistortedLaw {
    pub fn new(map: CompositeMap, base: DriverSpec) -> Result<Self> {
        if base.is_discrete() {
            return Err(Error::Capability(
                "distorted laws need a continuous driver; use the Poisson pivot composite".into(),
            ));
        }
        Ok(DistortedLaw { map, base })
    }

    /// `F_Z(t, z) = F_Y(t, Q(t, F_ζ(z)))`.
    pub fn cdf(&self, t: f64, z: f64) -> Result<f64> {
        let fm = self.map.freeze(t, &self.base)?;
        let y = fm.preimage(z)?;
        if y == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if y == f64::INFINITY {
            return Ok(1.0);
        }
        self.base.marginal_cdf(t, y)
    }

    /// `P(Z_t ≤ z | Y_s = x)`, the conditional distorted law.
    pub fn conditional_cdf(&self, s: f64, x: f64, t: f64, z: f64) -> Result<f64> {
        let fm = self.map.freeze(t, &self.base)?;
        let y = fm.preimage(z)?;
        if y == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if y == f64::INFINITY {
            return Ok(1.0);
        }
        self.base.transition_cdf(s, x, t, y)
    }

    /// `f_Z(t, z) = f_Y(t, y)·f_ζ(z)/f(t, y)` with `y = Q(t, F_ζ(z))`.
    pub fn pdf(&self, t: f64, z: f64) -> Result<f64> {
        let fm = self.map.freeze(t, &self.base)?;
        pushforward_density(&fm, z, |y| self.base.marginal_pdf(t, y))
    }

    /// Evaluate `F_Z(t, ·)` on a grid of points.
    pub fn tabulate(&self, t: f64, zs: &[f64]) -> Result<Vec<f64>> {
        zs.par_iter().map(|&z| self.cdf(t, z)).collect()
    }
}

pub fn distorted_cdf(law: &DistortedLaw, t: f64, z: f64) -> Result<f64> {
    law.cdf(t, z)
}

/// Density at `z` of the law of `Y` pushed through `z ↦ Q(F_ζ(z))`, with
/// `base_pdf` the density of the driver value.
fn pushforward_density<F: Fn(f64) -> Result<f64>>(fm: &FrozenMap<'_>, z: f64, base_pdf: F) -> Result<f64> {
    let fz = fm.quantile.density(z)?;
    if fz == 0.0 {
        return Ok(0.0);
    }
    let y = fm.preimage(z)?;
    if !y.is_finite() {
        return Ok(0.0);
    }
    let f = fm.dist_pdf(y)?;
    let fy = base_pdf(y)?;
    if fy == 0.0 {
        return Ok(0.0);
    }
    if !(f > 0.0) {
        return Err(Error::numeric(format!("distribution density underflow at y = {y}"), f));
    }
    Ok(fy * fz / f)
}

fn rn_frozen<F: Fn(f64) -> Result<f64>>(fm: &FrozenMap<'_>, y: f64, base_pdf: F) -> Result<f64> {
    let num = pushforward_density(fm, y, &base_pdf)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = base_pdf(y)?;
    if !(den > 0.0) {
        return Err(Error::numeric(format!("base density underflow at y = {y}"), den));
    }
    Ok(num / den)
}

/// `ρ_t(y) = f_Y(t, w)/f(t, w) · f_ζ(y)/f_Y(t, y)` with `w = Q(t, F_ζ(y))`.
/// Zero outside the quantile family's range.
pub fn rn_derivative(map: &CompositeMap, base: &DriverSpec, t: f64, y: f64) -> Result<f64> {
    if base.is_discrete() {
        return Err(Error::Capability(
            "RN derivative of a counting driver: use poisson_rn_derivative".into(),
        ));
    }
    let fm = map.freeze(t, base)?;
    rn_frozen(&fm, y, |v| base.marginal_pdf(t, v))
}

/// `ρ_{t|s}` at `Y_t = y` given `Y_s = state`, built from the transition
/// density of the Markov driver.
pub fn conditional_rn(map: &CompositeMap, base: &DriverSpec, s: f64, t: f64, state: f64, y: f64) -> Result<f64> {
    if base.is_discrete() {
        return Err(Error::Capability(
            "RN derivative of a counting driver: use poisson_rn_derivative".into(),
        ));
    }
    if !(s < t) {
        return Err(Error::param(format!("conditional RN needs s < t, got s={s}, t={t}")));
    }
    let fm = map.freeze(t, base)?;
    rn_frozen(&fm, y, |v| base.transition_pdf(s, state, t, v))
}

/// Probability-mass ratio for the Poisson pivot composite: the count law
/// with intensity `theta` against the pivot's unit-rate law `target_rate`.
pub fn poisson_rn_derivative(theta: f64, target_rate: f64, t: f64, n: u64) -> Result<f64> {
    let den = poisson_mass(target_rate, t, n)?;
    if !(den > 0.0) {
        return Err(Error::numeric(format!("reference mass underflow at n = {n}"), den));
    }
    Ok(poisson_mass(theta, t, n)? / den)
}

/// Deterministic bank account `B_t = exp(∫₀ᵗ r(s) ds)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoneyMarket {
    pub rate: TimeFn,
}

impl Default for MoneyMarket {
    fn default() -> Self {
        MoneyMarket::constant(0.0)
    }
}

impl MoneyMarket {
    pub fn constant(r: f64) -> Self {
        MoneyMarket {
            rate: TimeFn::constant(r),
        }
    }

    pub fn validate(&self, horizon: f64) -> std::result::Result<(), String> {
        self.rate.validate()?;
        let n = 64;
        for i in 0..=n {
            let t = horizon * i as f64 / n as f64;
            let r = self.rate.eval(t);
            if !(r >= 0.0) {
                return Err(format!("short rate must be non-negative, r({t}) = {r}"));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        Ok(self.rate.integral(0.0, t)?.exp())
    }

    /// `B_t / B_u`.
    pub fn discount(&self, t: f64, u: f64) -> Result<f64> {
        Ok((-self.rate.integral(t, u)?).exp())
    }
}

/// Per-path pricing kernel `φ` on an ensemble's grid.
#[derive(Debug, Clone, Serialize)]
pub struct PricingKernelPath {
    pub grid: TimeGrid,
    /// `phi[n][k]` is `φ` at `grid.times[k]` on path `n`.
    pub phi: Vec<Vec<f64>>,
    /// `B` at each grid time.
    pub money_market: Vec<f64>,
}

impl PricingKernelPath {
    /// `φ_t B_t` on every path at grid index `k`.
    pub fn deflated(&self, k: usize) -> Vec<f64> {
        self.phi.iter().map(|p| p[k] * self.money_market[k]).collect()
    }
}

/// Chain `φ_u = ρ_{u|t} φ_t B_t/B_u` across consecutive grid times, starting
/// from `φ = 1` at the grid origin.
pub fn pricing_kernel(
    map: &CompositeMap,
    base: &DriverSpec,
    ensemble: &PathEnsemble,
    money_market: &MoneyMarket,
) -> Result<PricingKernelPath> {
    let grid = &ensemble.grid;
    if grid.len() < 2 {
        return Err(Error::param("pricing kernel needs at least two grid times"));
    }
    if base.is_discrete() {
        return Err(Error::Capability("pricing kernel of a counting driver".into()));
    }
    let horizon = *grid.times.last().expect("non-empty grid");
    money_market.validate(horizon).map_err(Error::Parameter)?;
    let origin = grid.origin;
    let b_origin = money_market.value(origin)?;
    let b: Vec<f64> = grid.times.iter().map(|&t| money_market.value(t)).collect::<Result<_>>()?;
    let frozen: Vec<Option<FrozenMap<'_>>> = grid
        .times
        .iter()
        .map(|&t| if t > origin { map.freeze(t, base).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let start = grid.origin_value.unwrap_or_else(|| base.initial_value());
    let phi: Vec<Vec<f64>> = ensemble
        .paths
        .par_iter()
        .enumerate()
        .map(|(p, path)| {
            let mut out = Vec::with_capacity(path.len());
            let (mut s, mut x, mut phi_prev, mut b_prev) = (origin, start, 1.0, b_origin);
            for (k, &t) in grid.times.iter().enumerate() {
                let y = path[k];
                let phi_k = match &frozen[k] {
                    None => 1.0,
                    Some(fm) => {
                        let rho = rn_frozen(fm, y, |v| base.transition_pdf(s, x, t, v)).map_err(|e| e.at(p, k))?;
                        rho * phi_prev * b_prev / b[k]
                    }
                };
                out.push(phi_k);
                (s, x, phi_prev, b_prev) = (t, y, phi_k, b[k]);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(PricingKernelPath {
        grid: grid.clone(),
        phi,
        money_market: b,
    })
}

/// Core interval `[Q_Y(CORE_TAIL), Q_Y(1 − CORE_TAIL)]` of the tail-split
/// estimator.
pub const CORE_TAIL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailSplitEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub core: (f64, f64),
    /// Deterministic contribution from outside the core.
    pub tail_term: f64,
}

/// Estimate `E^ℙ[ρ_t(Y_t)·V(Y_t)]` (or `E^ℙ[ρ_t]` when `v` is None) from
/// base samples `ys` of `Y_t`.
///
/// `ρ` is unbounded in the tails when the distorted law is heavier than the
/// driver's, so the plain sample mean has infinite variance. The samples
/// are used only on the core interval; the two tail pieces are integrals of
/// the distorted density, evaluated by quadrature.
pub fn rn_expectation(
    map: &CompositeMap,
    base: &DriverSpec,
    t: f64,
    ys: &[f64],
    v: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<TailSplitEstimate> {
    if ys.len() < 2 {
        return Err(Error::param("need at least two samples"));
    }
    let law = DistortedLaw::new(map.clone(), base.clone())?;
    let fm = map.freeze(t, base)?;
    let lo = base.marginal_quantile(t, CORE_TAIL)?;
    let hi = base.marginal_quantile(t, 1.0 - CORE_TAIL)?;
    let terms: Vec<f64> = ys
        .par_iter()
        .map(|&y| {
            if y < lo || y > hi {
                return Ok(0.0);
            }
            let r = rn_frozen(&fm, y, |w| base.marginal_pdf(t, w))?;
            Ok(r * v.map_or(1.0, |f| f(y)))
        })
        .collect::<Result<_>>()?;
    let (core_mean, se) = mean_se(&terms);
    let tail_term = match v {
        None => law.cdf(t, lo)? + (1.0 - law.cdf(t, hi)?),
        Some(f) => {
            let (zlo, zhi) = fm.quantile.range();
            let opts = QuadOptions {
                abs_tol: 1e-10,
                rel_tol: 1e-8,
                max_intervals: 4000,
            };
            let integrand = |z: f64| Ok(f(z) * pushforward_density(&fm, z, |w| base.marginal_pdf(t, w))?);
            let left = if zlo < lo { try_integrate(integrand, zlo, lo, opts)?.value } else { 0.0 };
            let right = if zhi > hi { try_integrate(integrand, hi, zhi, opts)?.value } else { 0.0 };
            left + right
        }
    };
    Ok(TailSplitEstimate {
        mean: core_mean + tail_term,
        std_error: se,
        core: (lo, hi),
        tail_term,
    })
}
