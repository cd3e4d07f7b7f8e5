//! Small statistics toolkit: batch-means confidence intervals, a
//! Kolmogorov-Smirnov distance against an exponential law, and OLS slopes.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Batches per replication for batch-means intervals.
pub const BATCHES: usize = 32;
/// Two-sided nominal coverage of reported confidence intervals.
pub const COVERAGE: f64 = 0.95;

/// Quantile `t_{p, df}` of Student's t distribution.
///
/// Above a million degrees of freedom the normal quantile is used; the two
/// differ by less than 1e-5 there and the t inversion loses accuracy.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if df > 1e6 {
        return Normal::standard().inverse_cdf(p);
    }
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(p)
}

/// Mean and sample variance (with `n - 1` denominator).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean of equally sized batch means and the half-width of its
/// [`COVERAGE`] t-interval.
pub fn batch_means_ci(batch_means: &[f64]) -> (f64, f64) {
    let b = batch_means.len();
    let (mean, var) = mean_var(batch_means);
    if b < 2 {
        return (mean, f64::INFINITY);
    }
    let t = t_quantile(0.5 + COVERAGE / 2.0, (b - 1) as f64);
    (mean, t * (var / b as f64).sqrt())
}

/// Splits a stream of `expected` samples into [`BATCHES`] nearly equal
/// consecutive batches and accumulates one sum per batch.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    expected: u64,
    seen: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl BatchAccumulator {
    pub fn new(expected: u64) -> Self {
        BatchAccumulator {
            expected: expected.max(1),
            seen: 0,
            sums: vec![0.0; BATCHES],
            counts: vec![0; BATCHES],
        }
    }

    /// Batch index of the next sample.
    #[inline]
    pub fn slot(&self) -> usize {
        ((self.seen.min(self.expected - 1) as u128 * BATCHES as u128) / self.expected as u128)
            as usize
    }

    #[inline]
    pub fn push(&mut self, batch: usize, x: f64) {
        self.sums[batch] += x;
        self.counts[batch] += 1;
    }

    #[inline]
    pub fn advance(&mut self) {
        self.seen += 1;
    }

    pub fn batch_means(&self) -> impl Iterator<Item = f64> + '_ {
        self.sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
    }
}

/// Kolmogorov-Smirnov distance between a weighted discrete sample
/// `(value, count)` (values ascending) and the exponential law with `mean`.
pub fn ks_exponential(sample: &[(f64, u64)], mean: f64) -> f64 {
    let total: u64 = sample.iter().map(|s| s.1).sum();
    let total = total as f64;
    let mut below = 0u64;
    let mut d: f64 = 0.0;
    for &(x, count) in sample {
        let cdf = if x <= 0.0 { 0.0 } else { -(-x / mean).exp_m1() };
        let left = below as f64 / total;
        below += count;
        let right = below as f64 / total;
        d = d.max((cdf - left).abs()).max((right - cdf).abs());
    }
    d
}

/// Least-squares slope of `ys` on `xs` and its t statistic.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    (slope, slope / se)
}
