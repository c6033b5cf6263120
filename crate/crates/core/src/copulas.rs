//! Copulas, Kendall distribution functions and multidimensional quantile
//! processes `Z_t = Q_ζ(C(t, F₁(t, Y⁽¹⁾_t), …, F_m(t, Y⁽ᵐ⁾_t)))`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::{DriverSpec, PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::measures::MoneyMarket;
use crate::numerics::{norm_cdf, norm_pdf, norm_ppf, TimeFn};
use crate::rng::path_rng;
use crate::stats::mean_se;
use crate::transforms::{DistributionSpec, QuantileSpec};
use crate::valuation::{Diagnostics, McSettings, Payoff, ValuationResult, MIN_PATHS};

/// Largest dimension accepted for Gaussian copulas.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum CopulaSpec {
    Independence { dim: usize },
    #[serde(rename = "Gaussian")]
    GaussianCopula { correlation: Vec<Vec<f64>> },
    Clayton { dim: usize, theta: TimeFn },
    Gumbel { dim: usize, theta: TimeFn },
    Comonotone { dim: usize },
}

impl CopulaSpec {
    pub fn independence(dim: usize) -> Self {
        CopulaSpec::Independence { dim }
    }

    pub fn comonotone(dim: usize) -> Self {
        CopulaSpec::Comonotone { dim }
    }

    pub fn clayton(dim: usize, theta: f64) -> Self {
        CopulaSpec::Clayton {
            dim,
            theta: theta.into(),
        }
    }

    pub fn gumbel(dim: usize, theta: f64) -> Self {
        CopulaSpec::Gumbel {
            dim,
            theta: theta.into(),
        }
    }

    pub fn gaussian(correlation: Vec<Vec<f64>>) -> Self {
        CopulaSpec::GaussianCopula { correlation }
    }

    /// Bivariate Gaussian copula with correlation `r`.
    pub fn gaussian2(r: f64) -> Self {
        Self::gaussian(vec![vec![1.0, r], vec![r, 1.0]])
    }

    pub fn dim(&self) -> usize {
        match self {
            CopulaSpec::Independence { dim }
            | CopulaSpec::Comonotone { dim }
            | CopulaSpec::Clayton { dim, .. }
            | CopulaSpec::Gumbel { dim, .. } => *dim,
            CopulaSpec::GaussianCopula { correlation } => correlation.len(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            CopulaSpec::Independence { .. } => "Independence",
            CopulaSpec::GaussianCopula { .. } => "Gaussian",
            CopulaSpec::Clayton { .. } => "Clayton",
            CopulaSpec::Gumbel { .. } => "Gumbel",
            CopulaSpec::Comonotone { .. } => "Comonotone",
        }
    }

    pub fn validate(&self, times: &[f64]) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if self.dim() == 0 {
            issues.push("copula dimension must be at least 1".into());
        }
        match self {
            CopulaSpec::GaussianCopula { correlation } => {
                if correlation.len() > MAX_DIM {
                    issues.push(format!("Gaussian copula dimension {} exceeds {MAX_DIM}", correlation.len()));
                }
                if let Err(e) = cholesky_psd(correlation) {
                    issues.push(e);
                }
            }
            CopulaSpec::Clayton { theta, .. } => {
                for &t in times {
                    let th = theta.eval(t);
                    if !(th > 0.0 && th.is_finite()) {
                        issues.push(format!("Clayton requires θ > 0, got θ({t}) = {th}"));
                    }
                }
            }
            CopulaSpec::Gumbel { theta, .. } => {
                for &t in times {
                    let th = theta.eval(t);
                    if !(th >= 1.0 && th.is_finite()) {
                        issues.push(format!("Gumbel requires θ ≥ 1, got θ({t}) = {th}"));
                    }
                }
            }
            _ => {}
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    fn check_arity(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::param(format!(
                "copula of dimension {} evaluated at {} arguments",
                self.dim(),
                u.len()
            )));
        }
        if u.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::param("copula arguments must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `C(t, u)`.
    pub fn eval(&self, t: f64, u: &[f64]) -> Result<f64> {
        self.eval_tol(t, u, 1e-6)
    }

    /// `C(t, u)` with an absolute tolerance for the quasi-Monte Carlo
    /// Gaussian case (`m > 2`).
    pub fn eval_tol(&self, t: f64, u: &[f64], tol: f64) -> Result<f64> {
        self.check_arity(u)?;
        if u.contains(&0.0) {
            return Ok(0.0);
        }
        if u.len() == 1 {
            return Ok(u[0]);
        }
        Ok(match self {
            CopulaSpec::Independence { .. } => u.iter().product(),
            CopulaSpec::Comonotone { .. } => u.iter().copied().fold(1.0, f64::min),
            CopulaSpec::Clayton { theta, .. } => {
                let th = theta.eval(t);
                let s: f64 = u.iter().map(|x| x.powf(-th) - 1.0).sum::<f64>() + 1.0;
                s.powf(-1.0 / th)
            }
            CopulaSpec::Gumbel { theta, .. } => {
                let th = theta.eval(t);
                let s: f64 = u.iter().map(|x| (-x.ln()).powf(th)).sum();
                (-s.powf(1.0 / th)).exp()
            }
            CopulaSpec::GaussianCopula { correlation } => {
                let b: Vec<f64> = u.iter().map(|&x| norm_ppf(x)).collect();
                if b.len() == 2 {
                    bvn_cdf(b[0], b[1], correlation[0][1])
                } else {
                    let l = cholesky_psd(correlation).map_err(Error::Parameter)?;
                    mvn_cdf(&l, &b, tol).0
                }
            }
        })
    }

    /// A sampler for this copula, with the Gaussian factor precomputed.
    pub fn sampler(&self) -> Result<CopulaSampler<'_>> {
        let chol = match self {
            CopulaSpec::GaussianCopula { correlation } => Some(cholesky_psd(correlation).map_err(Error::Parameter)?),
            _ => None,
        };
        Ok(CopulaSampler { spec: self, chol })
    }

    /// `n` draws of `U ~ C(t, ·)`, one substream per draw.
    pub fn sample(&self, t: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let s = self.sampler()?;
        Ok((0..n)
            .into_par_iter()
            .map(|i| s.draw(t, &mut path_rng(seed, i)))
            .collect())
    }
}

pub struct CopulaSampler<'a> {
    spec: &'a CopulaSpec,
    chol: Option<Vec<Vec<f64>>>,
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    let bits: u64 = rng.random::<u64>() >> 11;
    (bits as f64 + 0.5) / (1u64 << 53) as f64
}

/// Positive stable variable with Laplace transform `exp(−s^α)`, by
/// Kanter's representation.
fn positive_stable<R: Rng>(rng: &mut R, alpha: f64) -> f64 {
    let theta = std::f64::consts::PI * open_unit(rng);
    let w: f64 = Exp1.sample(rng);
    let a = ((alpha * theta).sin().powf(alpha) * ((1.0 - alpha) * theta).sin().powf(1.0 - alpha) / theta.sin())
        .powf(1.0 / (1.0 - alpha));
    (a / w).powf((1.0 - alpha) / alpha)
}

impl CopulaSampler<'_> {
    pub fn draw<R: Rng>(&self, t: f64, rng: &mut R) -> Vec<f64> {
        let m = self.spec.dim();
        match self.spec {
            CopulaSpec::Independence { .. } => (0..m).map(|_| open_unit(rng)).collect(),
            CopulaSpec::Comonotone { .. } => vec![open_unit(rng); m],
            CopulaSpec::GaussianCopula { .. } => {
                let l = self.chol.as_ref().expect("factor built");
                let n: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
                (0..m)
                    .map(|i| {
                        let z: f64 = (0..=i).map(|j| l[i][j] * n[j]).sum();
                        norm_cdf(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
                    })
                    .collect()
            }
            CopulaSpec::Clayton { theta, .. } => {
                let th = theta.eval(t);
                let v = Gamma::new(1.0 / th, 1.0).expect("validated θ").sample(rng);
                (0..m)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        (1.0 + e / v).powf(-1.0 / th)
                    })
                    .collect()
            }
            CopulaSpec::Gumbel { theta, .. } => {
                let th = theta.eval(t);
                if th == 1.0 {
                    return (0..m).map(|_| open_unit(rng)).collect();
                }
                let v = positive_stable(rng, 1.0 / th);
                (0..m)
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        (-(e / v).powf(1.0 / th)).exp()
                    })
                    .collect()
            }
        }
    }
}

/// Lower-triangular factor of a correlation matrix, allowing singular
/// (positive semi-definite) matrices.
pub fn cholesky_psd(a: &[Vec<f64>]) -> std::result::Result<Vec<Vec<f64>>, String> {
    let m = a.len();
    if a.iter().any(|r| r.len() != m) {
        return Err("correlation matrix must be square".into());
    }
    for i in 0..m {
        if (a[i][i] - 1.0).abs() > 1e-12 {
            return Err(format!("correlation matrix needs a unit diagonal, entry {i} is {}", a[i][i]));
        }
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 {
                return Err(format!("correlation matrix is not symmetric at ({i}, {j})"));
            }
            if !(a[i][j].abs() <= 1.0) {
                return Err(format!("correlation entry ({i}, {j}) = {} is outside [−1, 1]", a[i][j]));
            }
        }
    }
    let mut l = vec![vec![0.0; m]; m];
    for j in 0..m {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -1e-10 {
            return Err("correlation matrix is not positive semi-definite".into());
        }
        l[j][j] = d.max(0.0).sqrt();
        for i in j + 1..m {
            let r = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if l[j][j] > 1e-10 {
                l[i][j] = r / l[j][j];
            } else if r.abs() > 1e-8 {
                return Err("correlation matrix is not positive semi-definite".into());
            }
        }
    }
    Ok(l)
}

const GL6: ([f64; 3], [f64; 3]) = (
    [0.1713244923791705, 0.3607615730481384, 0.4679139345726904],
    [0.9324695142031522, 0.6612093864662647, 0.2386191860831970],
);
const GL12: ([f64; 6], [f64; 6]) = (
    [
        0.04717533638651177,
        0.1069393259953183,
        0.1600783285433464,
        0.2031674267230659,
        0.2334925365383547,
        0.2491470458134029,
    ],
    [
        0.9815606342467191,
        0.9041172563704750,
        0.7699026741943050,
        0.5873179542866171,
        0.3678314989981802,
        0.1252334085114692,
    ],
);
const GL20: ([f64; 10], [f64; 10]) = (
    [
        0.01761400713915212,
        0.04060142980038694,
        0.06267204833410906,
        0.08327674157670475,
        0.1019301198172404,
        0.1181945319615184,
        0.1316886384491766,
        0.1420961093183821,
        0.1491729864726037,
        0.1527533871307259,
    ],
    [
        0.9931285991850949,
        0.9639719272779138,
        0.9122344282513259,
        0.8391169718222188,
        0.7463319064601508,
        0.6360536807265150,
        0.5108670019508271,
        0.3737060887154196,
        0.2277858511416451,
        0.07652652113349733,
    ],
);

/// Upper bivariate normal probability `P(X > h, Y > k)` with correlation `r`
/// (Genz's algorithm, double precision).
fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    let (w, x): (Vec<f64>, Vec<f64>) = if r.abs() < 0.3 {
        (GL6.0.to_vec(), GL6.1.to_vec())
    } else if r.abs() < 0.75 {
        (GL12.0.to_vec(), GL12.1.to_vec())
    } else {
        (GL20.0.to_vec(), GL20.1.to_vec())
    };
    let nodes: Vec<(f64, f64)> = w
        .iter()
        .zip(&x)
        .flat_map(|(&wi, &xi)| [(wi, 1.0 - xi), (wi, 1.0 + xi)])
        .collect();
    let tp = 2.0 * std::f64::consts::PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for &(wi, xi) in &nodes {
            let sn = (asr * xi).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = 1.0 - r * r;
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let asr = -(bs / as_ + hk) / 2.0;
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = tp.sqrt() * norm_cdf(-b / a);
            bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        let mut acc = 0.0;
        for &(wi, xi) in &nodes {
            let xs = (a * xi) * (a * xi);
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                let rs = (1.0 - xs).sqrt();
                let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                acc += wi * asr.exp() * (sp - ep);
            }
        }
        bvn = (a * acc - bvn) / tp;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else if h >= k {
        -bvn
    } else {
        let l = if h < 0.0 { norm_cdf(k) - norm_cdf(h) } else { norm_cdf(-h) - norm_cdf(-k) };
        l - bvn
    }
}

/// `P(X ≤ h, Y ≤ k)` for standard bivariate normals with correlation `r`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r).clamp(0.0, 1.0)
}

const PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];

/// `P(X ≤ b)` for `X = L·N`, by Genz's separation of variables on a
/// randomly shifted Richtmyer lattice. Returns `(estimate, standard error)`.
pub fn mvn_cdf(l: &[Vec<f64>], b: &[f64], tol: f64) -> (f64, f64) {
    let m = b.len();
    if b.contains(&f64::NEG_INFINITY) {
        return (0.0, 0.0);
    }
    let shifts = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d76_6e63);
    let shift: Vec<Vec<f64>> = (0..shifts).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let alpha: Vec<f64> = PRIMES[..m.max(1)].iter().map(|p| p.sqrt().fract()).collect();
    let integrand = |w: &[f64]| -> f64 {
        let mut y = vec![0.0; m];
        let mut f = 1.0;
        for i in 0..m {
            let s: f64 = (0..i).map(|j| l[i][j] * y[j]).sum();
            let e = if l[i][i] > 1e-10 {
                norm_cdf((b[i] - s) / l[i][i])
            } else if b[i] >= s {
                1.0
            } else {
                0.0
            };
            f *= e;
            if f == 0.0 {
                return 0.0;
            }
            if i + 1 < m && l[i][i] > 1e-10 {
                let p = (w[i] * e).clamp(1e-300, 1.0 - 1e-16);
                y[i] = norm_ppf(p);
            }
        }
        f
    };
    let mut n = 256usize;
    loop {
        let means: Vec<f64> = shift
            .iter()
            .map(|sh| {
                let mut acc = 0.0;
                let mut w = vec![0.0; m];
                for k in 1..=n {
                    for j in 0..m {
                        let v = (k as f64 * alpha[j] + sh[j]).fract();
                        w[j] = (2.0 * v - 1.0).abs();
                    }
                    acc += integrand(&w);
                }
                acc / n as f64
            })
            .collect();
        let (est, se) = mean_se(&means);
        if 3.0 * se <= tol || n >= 1 << 18 {
            return (est.clamp(0.0, 1.0), se);
        }
        n *= 2;
    }
}

/// Kendall function values `K(v) = P(C(U) ≤ v)`.
#[derive(Debug, Clone)]
pub enum KendallRepr {
    ClosedForm,
    /// Sorted copula values `C(U_j)` from `U_j ~ C`.
    Empirical { values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct KendallFunction {
    pub copula: CopulaSpec,
    pub t: f64,
    pub repr: KendallRepr,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KendallValue {
    pub value: f64,
    /// Binomial standard error in empirical mode.
    pub std_error: Option<f64>,
    pub warning: Option<String>,
}

/// Default number of copula draws for the empirical Kendall estimator.
pub const KENDALL_SAMPLES: usize = 100_000;

fn closed_form_available(c: &CopulaSpec) -> bool {
    match c {
        CopulaSpec::Independence { .. } | CopulaSpec::Comonotone { .. } => true,
        CopulaSpec::Clayton { dim, .. } | CopulaSpec::Gumbel { dim, .. } => *dim <= 2,
        CopulaSpec::GaussianCopula { correlation } => correlation.len() == 1,
    }
}

impl KendallFunction {
    /// Closed form where one exists, otherwise the empirical estimator.
    pub fn new(copula: &CopulaSpec, t: f64, n_samples: usize, seed: u64) -> Result<Self> {
        copula.validate(&[t]).map_err(Error::Validation)?;
        if closed_form_available(copula) {
            Ok(KendallFunction {
                copula: copula.clone(),
                t,
                repr: KendallRepr::ClosedForm,
                warning: None,
            })
        } else {
            Self::empirical(copula, t, n_samples, seed)
        }
    }

    pub fn empirical(copula: &CopulaSpec, t: f64, n_samples: usize, seed: u64) -> Result<Self> {
        copula.validate(&[t]).map_err(Error::Validation)?;
        if n_samples == 0 {
            return Err(Error::param("empirical Kendall function needs samples"));
        }
        let warning = (n_samples < 10_000)
            .then(|| format!("empirical Kendall estimate from only {n_samples} draws; precision is low"));
        let draws = copula.sample(t, n_samples, seed)?;
        let mut values: Vec<f64> = draws
            .par_iter()
            .map(|u| copula.eval_tol(t, u, 1e-4))
            .collect::<Result<_>>()?;
        values.sort_by(f64::total_cmp);
        Ok(KendallFunction {
            copula: copula.clone(),
            t,
            repr: KendallRepr::Empirical { values },
            warning,
        })
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.eval_with_se(v).0
    }

    pub fn eval_with_se(&self, v: f64) -> (f64, Option<f64>) {
        if v <= 0.0 {
            return (0.0, None);
        }
        if v >= 1.0 {
            return (1.0, None);
        }
        match &self.repr {
            KendallRepr::Empirical { values } => {
                let n = values.len() as f64;
                let p = values.partition_point(|&c| c <= v) as f64 / n;
                (p, Some((p * (1.0 - p) / n).sqrt()))
            }
            KendallRepr::ClosedForm => (self.closed(v), None),
        }
    }

    fn closed(&self, v: f64) -> f64 {
        let t = self.t;
        match &self.copula {
            CopulaSpec::Comonotone { .. } => v,
            CopulaSpec::GaussianCopula { .. } => v,
            CopulaSpec::Independence { dim } => {
                let l = -v.ln();
                let mut term = 1.0;
                let mut sum = 0.0;
                for k in 0..*dim {
                    if k > 0 {
                        term *= l / k as f64;
                    }
                    sum += term;
                }
                (v * sum).min(1.0)
            }
            CopulaSpec::Clayton { dim, theta } => {
                if *dim == 1 {
                    return v;
                }
                let th = theta.eval(t);
                v + v * (1.0 - v.powf(th)) / th
            }
            CopulaSpec::Gumbel { dim, theta } => {
                if *dim == 1 {
                    return v;
                }
                v - v * v.ln() / theta.eval(t)
            }
        }
    }

    /// `K′(v)`; kernel-smoothed in empirical mode. Undefined at the ends of
    /// (0, 1).
    pub fn derivative(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Mapping(format!("Kendall derivative is not defined at v = {v}")));
        }
        let t = self.t;
        Ok(match &self.repr {
            KendallRepr::Empirical { values } => {
                let n = values.len() as f64;
                let (_, se) = mean_se(values);
                let h = 1.06 * (se * n.sqrt()).max(1e-6) * n.powf(-0.2);
                // Reflection at both ends keeps the estimate unbiased near 0 and 1.
                values
                    .iter()
                    .map(|&c| norm_pdf((v - c) / h) + norm_pdf((v + c) / h) + norm_pdf((2.0 - v - c) / h))
                    .sum::<f64>()
                    / (n * h)
            }
            KendallRepr::ClosedForm => match &self.copula {
                CopulaSpec::Comonotone { .. } | CopulaSpec::GaussianCopula { .. } => 1.0,
                CopulaSpec::Independence { dim } => {
                    let l = -v.ln();
                    let fact: f64 = (1..*dim).map(|k| k as f64).product();
                    l.powi(*dim as i32 - 1) / fact
                }
                CopulaSpec::Clayton { dim, theta } => {
                    if *dim == 1 {
                        return Ok(1.0);
                    }
                    let th = theta.eval(t);
                    1.0 + (1.0 - (th + 1.0) * v.powf(th)) / th
                }
                CopulaSpec::Gumbel { dim, theta } => {
                    if *dim == 1 {
                        return Ok(1.0);
                    }
                    1.0 - (v.ln() + 1.0) / theta.eval(t)
                }
            },
        })
    }

    /// Write `(v, K(v))` at `n` interior grid points as CSV.
    pub fn write_csv<W: Write>(&self, n: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["v", "K"]).map_err(err)?;
        for i in 1..=n {
            let v = i as f64 / (n + 1) as f64;
            w.write_record([sig9(v), sig9(self.eval(v))]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `K_C(t, v)` with its standard error in empirical mode.
pub fn kendall_function(spec: &CopulaSpec, t: f64, v: f64, n_samples: usize, seed: u64) -> Result<KendallValue> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(format!("Kendall argument must lie in [0, 1], got {v}")));
    }
    let k = KendallFunction::new(spec, t, n_samples, seed)?;
    let (value, std_error) = k.eval_with_se(v);
    Ok(KendallValue {
        value,
        std_error,
        warning: k.warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum JointMode {
    /// Margins and copula are the drivers' own joint law.
    TrueJointLaw,
    #[default]
    FalseLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiCompositeMap {
    pub margins: Vec<DistributionSpec>,
    pub copula: CopulaSpec,
    pub quantile: QuantileSpec,
    #[serde(default)]
    pub mode: JointMode,
}

impl MultiCompositeMap {
    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    /// Check the parts and, in `TrueJointLaw` mode, that the margins are the
    /// drivers' laws and the map's copula is the coupling copula.
    pub fn validate_for(
        &self,
        drivers: &[DriverSpec],
        coupling: &CopulaSpec,
        times: &[f64],
    ) -> std::result::Result<(), Vec<String>> {
        let mut issues = Vec::new();
        if self.margins.len() != self.copula.dim() {
            issues.push(format!(
                "{} margins for a copula of dimension {}",
                self.margins.len(),
                self.copula.dim()
            ));
        }
        if drivers.len() != self.margins.len() {
            issues.push(format!("{} drivers for {} margins", drivers.len(), self.margins.len()));
        }
        for m in &self.margins {
            if let Err(e) = m.validate(times) {
                issues.extend(e);
            }
        }
        if let Err(e) = self.copula.validate(times) {
            issues.extend(e);
        }
        if let Err(e) = self.quantile.validate(times) {
            issues.extend(e);
        }
        if self.mode == JointMode::TrueJointLaw {
            for (i, (m, d)) in self.margins.iter().zip(drivers).enumerate() {
                let ok = match m {
                    DistributionSpec::DriverMarginal { driver } => format!("{driver:?}") == format!("{d:?}"),
                    DistributionSpec::Gaussian { mean, variance } if d.is_gaussian() => times.iter().all(|&t| {
                        d.gaussian_moments(t).is_ok_and(|(mu, sd)| {
                            (mean.eval(t) - mu).abs() < 1e-10 && (variance.eval(t) - sd * sd).abs() < 1e-10
                        })
                    }),
                    _ => false,
                };
                if !ok {
                    issues.push(format!("TrueJointLaw margin {i} is not the law of driver {i}"));
                }
            }
            if format!("{:?}", self.copula) != format!("{coupling:?}") {
                issues.push("TrueJointLaw requires the map's copula to equal the driver coupling".into());
            }
            let gaussian_ok = drivers.iter().all(DriverSpec::is_gaussian);
            let implicit_known = matches!(coupling, CopulaSpec::Independence { .. } | CopulaSpec::Comonotone { .. })
                || (gaussian_ok && matches!(coupling, CopulaSpec::GaussianCopula { .. }));
            if !implicit_known {
                issues.push(
                    "TrueJointLaw needs a coupling whose implicit copula is known: Independence, Comonotone, or Gaussian over Gaussian drivers"
                        .into(),
                );
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }
}

/// One step of `driver` from `(s, x)` to `t` driven by the uniform `u`.
fn step_from_uniform(driver: &DriverSpec, s: f64, x: f64, t: f64, u: f64) -> Result<f64> {
    if driver.is_gaussian() {
        let g = driver.gaussian_step(s, t)?;
        Ok(g.mean(x) + g.sd * norm_ppf(u))
    } else {
        driver.transition_quantile(s, x, t, u)
    }
}

/// Simulate `m` drivers whose per-step innovations are coupled by
/// `coupling`. Each component starts from its own `y0` (or `starts[i]`).
pub fn simulate_joint(
    drivers: &[DriverSpec],
    coupling: &CopulaSpec,
    grid: &TimeGrid,
    starts: Option<&[f64]>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathEnsemble>> {
    let m = drivers.len();
    if m == 0 || coupling.dim() != m {
        return Err(Error::param(format!(
            "{m} drivers for a coupling copula of dimension {}",
            coupling.dim()
        )));
    }
    grid.validate().map_err(Error::Validation)?;
    for d in drivers {
        d.validate(Some(grid)).map_err(Error::Validation)?;
    }
    let mut knots = Vec::with_capacity(grid.len() + 1);
    let skip_first = grid.times[0] > grid.origin;
    if skip_first {
        knots.push(grid.origin);
    }
    knots.extend_from_slice(&grid.times);
    coupling.validate(&knots[1..]).map_err(Error::Validation)?;
    let x0: Vec<f64> = match starts {
        Some(s) if s.len() == m => s.to_vec(),
        Some(s) => return Err(Error::param(format!("{} start values for {m} drivers", s.len()))),
        None => drivers.iter().map(DriverSpec::initial_value).collect(),
    };
    let sampler = coupling.sampler()?;
    let rows: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut y = x0.clone();
            let mut rows = vec![Vec::with_capacity(grid.len()); m];
            if !skip_first {
                for i in 0..m {
                    rows[i].push(y[i]);
                }
            }
            for k in 1..knots.len() {
                let u = sampler.draw(knots[k], &mut rng);
                for i in 0..m {
                    y[i] = step_from_uniform(&drivers[i], knots[k - 1], y[i], knots[k], u[i])
                        .map_err(|e| Error::Simulation(format!("driver {i}: {e}")).at(p, k))?;
                    rows[i].push(y[i]);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<PathEnsemble> = drivers
        .iter()
        .map(|d| PathEnsemble {
            grid: grid.clone(),
            paths: Vec::with_capacity(n_paths),
            seed,
            driver: d.clone(),
        })
        .collect();
    for r in rows {
        for (i, row) in r.into_iter().enumerate() {
            out[i].paths.push(row);
        }
    }
    Ok(out)
}

/// `Z[n][k] = Q_ζ(C(t_k, F₁(t_k, Y⁽¹⁾), …, F_m(t_k, Y⁽ᵐ⁾)))`. The output
/// carries the first component's driver for reference.
pub fn apply_multi_composite(map: &MultiCompositeMap, ensembles: &[PathEnsemble]) -> Result<PathEnsemble> {
    let m = map.dim();
    if ensembles.len() != m || m == 0 {
        return Err(Error::Request(format!("{} ensembles for {m} margins", ensembles.len())));
    }
    let grid = &ensembles[0].grid;
    let n = ensembles[0].n_paths();
    for (i, e) in ensembles.iter().enumerate() {
        if e.grid.times != grid.times || e.n_paths() != n {
            return Err(Error::Request(format!("ensemble {i} does not share the grid and path count")));
        }
    }
    if map.copula.dim() != m {
        return Err(Error::param("copula dimension does not match the margins"));
    }
    map.copula.validate(&grid.times).map_err(Error::Validation)?;
    map.quantile.validate(&grid.times).map_err(Error::Validation)?;
    let mut columns = Vec::with_capacity(grid.len());
    for (k, &t) in grid.times.iter().enumerate() {
        let frozen: Vec<_> = map.margins.iter().map(|d| d.freeze(t)).collect::<Result<_>>()?;
        let q = map.quantile.at(t);
        let col: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| {
                let u: Vec<f64> = frozen
                    .iter()
                    .zip(ensembles)
                    .map(|(f, e)| f.cdf(e.paths[p][k]))
                    .collect::<Result<_>>()
                    .map_err(|e| e.at(p, k))?;
                let c = map.copula.eval(t, &u).map_err(|e| e.at(p, k))?;
                Ok(q.eval(c))
            })
            .collect::<Result<_>>()?;
        columns.push(col);
    }
    let paths = (0..n).map(|p| columns.iter().map(|c| c[p]).collect()).collect();
    Ok(PathEnsemble {
        grid: grid.clone(),
        paths,
        seed: ensembles[0].seed,
        driver: ensembles[0].driver.clone(),
    })
}

/// `P(Z_t ≤ z) = K_C(t, F_ζ(z))` for a `TrueJointLaw` map. False-law maps
/// have no closed form; use the empirical CDF of an output ensemble.
pub fn multi_distorted_cdf(map: &MultiCompositeMap, t: f64, z: f64) -> Result<f64> {
    if map.mode != JointMode::TrueJointLaw {
        return Err(Error::Request(
            "closed-form multidimensional law needs TrueJointLaw; estimate false-law maps from an ensemble".into(),
        ));
    }
    let k = KendallFunction::new(&map.copula, t, KENDALL_SAMPLES, 0x6b65_6e64)?;
    Ok(k.eval(map.quantile.at(t).cdf(z)?))
}

/// `ρ_t(y) = K_C′(F_ζ(y))·f_ζ(y) / f_Y(t, y)` for the insured margin.
pub fn multi_rn_derivative(map: &MultiCompositeMap, t: f64, y: f64, base: &DriverSpec) -> Result<f64> {
    let k = KendallFunction::new(&map.copula, t, KENDALL_SAMPLES, 0x6b65_6e64)?;
    multi_rn_with(&k, map, t, y, base)
}

/// As [`multi_rn_derivative`] with a prebuilt Kendall function.
pub fn multi_rn_with(k: &KendallFunction, map: &MultiCompositeMap, t: f64, y: f64, base: &DriverSpec) -> Result<f64> {
    let q = map.quantile.at(t);
    let fz = q.density(y)?;
    if fz == 0.0 {
        return Ok(0.0);
    }
    // A positive density puts the level strictly inside (0, 1); rounding in
    // the far tails can still land on an endpoint.
    let v = q.cdf(y)?.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    let kp = k.derivative(v)?;
    let fy = base.marginal_pdf(t, y)?;
    if !(fy > 0.0) {
        return Err(Error::numeric(format!("base density underflow at y = {y}"), fy));
    }
    Ok(kp * fz / fy)
}

/// Premium `(B_t/B_u)·E[V(Z_u)]` with `Z` the multidimensional quantile
/// process over jointly simulated drivers. The loading is measured against
/// the raw risk `Y⁽ʳⁱˢᵏ⁾_u`.
#[allow(clippy::too_many_arguments)]
pub fn multi_layer_premium(
    map: &MultiCompositeMap,
    drivers: &[DriverSpec],
    coupling: &CopulaSpec,
    risk_index: usize,
    payoff: &Payoff,
    u: f64,
    rate: &MoneyMarket,
    mc: McSettings,
) -> Result<ValuationResult> {
    if !matches!(payoff, Payoff::Layer { .. } | Payoff::StopLoss { .. } | Payoff::Linear) {
        return Err(Error::Request(format!(
            "premiums support Layer, StopLoss and Linear payoffs, got {}",
            payoff.name()
        )));
    }
    payoff.validate().map_err(Error::Validation)?;
    if risk_index >= drivers.len() {
        return Err(Error::Request(format!("risk index {risk_index} out of range")));
    }
    if mc.n_paths < MIN_PATHS {
        return Err(Error::Validation(vec![format!(
            "n_paths must be at least {MIN_PATHS}, got {}",
            mc.n_paths
        )]));
    }
    map.validate_for(drivers, coupling, &[u]).map_err(Error::Validation)?;
    let grid = TimeGrid::new(vec![u])?;
    let ens = simulate_joint(drivers, coupling, &grid, None, mc.n_paths, mc.seed)?;
    let z = apply_multi_composite(map, &ens)?;
    let disc = rate.discount(0.0, u)?;
    let pay: Vec<f64> = z.paths.iter().map(|p| disc * payoff.eval(p[0])).collect();
    let gap: Vec<f64> = pay
        .iter()
        .zip(&ens[risk_index].paths)
        .map(|(v, y)| v - disc * y[0])
        .collect();
    let (price, std_error) = mean_se(&pay);
    let (risk_loading, risk_loading_se) = mean_se(&gap);
    Ok(ValuationResult {
        price,
        std_error,
        risk_loading,
        risk_loading_se,
        diagnostics: Diagnostics {
            n_effective: pay.len(),
            seed: mc.seed,
        },
    })
}
