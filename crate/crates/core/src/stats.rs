//! Sample statistics used by the Monte Carlo estimators and the test
//! oracles.

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis (0 for a Gaussian).
    pub excess_kurtosis: f64,
}

/// Plain (biased, moment-ratio) sample moments.
pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Moments {
        mean,
        variance: m2 * n / (n - 1.0),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Standard error of `stat` by the method of batch means: split `xs` into
/// `batches` contiguous blocks, evaluate the statistic on each, and return
/// the full-sample statistic together with the SE of the batch average.
pub fn batch_means<F: Fn(&[f64]) -> f64>(xs: &[f64], batches: usize, stat: F) -> (f64, f64) {
    let size = xs.len() / batches;
    let values: Vec<f64> = (0..batches).map(|b| stat(&xs[b * size..(b + 1) * size])).collect();
    let (_, se) = mean_se(&values);
    (stat(xs), se)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d.max(hi).max(lo)
    })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 1% critical value `c(α)` of the KS distribution.
pub const KS_C_1PCT: f64 = 1.628;

pub fn ks_critical_one_sample(n: usize) -> f64 {
    KS_C_1PCT / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_1PCT * ((n + m) / (n * m)).sqrt()
}

/// Empirical CDF at `x` of an already sorted sample.
pub fn ecdf_sorted(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&xs);
        assert_eq!(m, 2.5);
        assert!((se - (1.666_666_666_666_666_7_f64 / 4.0).sqrt()).abs() < 1e-15);
        let mo = moments(&xs);
        assert!(mo.skewness.abs() < 1e-15);
        assert!((mo.excess_kurtosis - (-1.36)).abs() < 1e-12);
    }

    #[test]
    fn ks_statistics() {
        // Evenly spread points have D = 1/(2n) against the uniform CDF.
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_one_sample(&xs, |x| x) - 0.05).abs() < 1e-15);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 10.0).collect();
        assert_eq!(ks_two_sample(&xs, &shifted), 1.0);
    }
}
