//! Small statistics toolkit for the Monte-Carlo experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A closed confidence interval `[lo, hi]` at a stated level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// Exact (Clopper–Pearson) binomial interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if n == 0 || k > n {
        return Err(Error::invalid(format!(
            "need 0 <= k <= n and n > 0, got k={k} n={n}"
        )));
    }
    let alpha = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok(ConfidenceInterval { lo, hi, level })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Median of the finite values; `None` when there are none.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Percentile bootstrap interval for the median.
pub fn bootstrap_median_ci(
    xs: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if xs.is_empty() || resamples == 0 {
        return Err(Error::invalid(
            "bootstrap needs data and at least one resample",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; xs.len()];
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..xs.len())];
            }
            median(&buf).unwrap_or(f64::NAN)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let pick = |p: f64| {
        let i = ((p * resamples as f64).floor() as usize).min(resamples - 1);
        medians[i]
    };
    Ok(ConfidenceInterval {
        lo: pick(alpha / 2.0),
        hi: pick(1.0 - alpha / 2.0),
        level,
    })
}

/// Cochran–Armitage test for a trend in binomial proportions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub z: f64,
    /// One-sided p-value against an increasing trend.
    pub p_increasing: f64,
    /// One-sided p-value against a decreasing trend.
    pub p_decreasing: f64,
}

impl TrendTest {
    /// True when an increasing trend is not significant at `level`.
    pub fn non_increasing(&self, level: f64) -> bool {
        self.p_increasing >= 1.0 - level
    }
}

/// `hits[i]` successes out of `trials[i]` at ordered scores `scores[i]`.
pub fn cochran_armitage(hits: &[u64], trials: &[u64], scores: &[f64]) -> Result<TrendTest> {
    if hits.len() != trials.len() || hits.len() != scores.len() || hits.is_empty() {
        return Err(Error::invalid(
            "trend test needs equally long, non-empty inputs",
        ));
    }
    if hits.iter().zip(trials).any(|(h, t)| h > t || *t == 0) {
        return Err(Error::invalid(
            "each group needs 0 <= hits <= trials and trials > 0",
        ));
    }
    let total: f64 = trials.iter().map(|&t| t as f64).sum();
    let p = hits.iter().sum::<u64>() as f64 / total;
    let mut num = 0.0;
    let (mut s1, mut s2) = (0.0, 0.0);
    for ((&h, &t), &s) in hits.iter().zip(trials).zip(scores) {
        num += s * (h as f64 - t as f64 * p);
        s1 += s * t as f64;
        s2 += s * s * t as f64;
    }
    let var = p * (1.0 - p) * (s2 - s1 * s1 / total);
    let z = if var > 0.0 { num / var.sqrt() } else { 0.0 };
    let normal = Normal::standard();
    Ok(TrendTest {
        z,
        p_increasing: 1.0 - normal.cdf(z),
        p_decreasing: normal.cdf(z),
    })
}

/// Ordinary least squares fit `y ≈ slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid(
            "linear fit needs at least two paired points",
        ));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "linear fit needs at least two distinct abscissae",
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fit `ln y` against `ln x`; both must be positive.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}
