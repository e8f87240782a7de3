//! Output analysis: summary statistics, autocorrelation, inefficiency
//! factors, relative inefficiency, classification and kernel densities.

use serde::Serialize;

use crate::error::{Error, Result};

/// Default Parzen bandwidth for inefficiency factors.
pub const DEFAULT_IF_LAGS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Fourth standardized moment (3 for a normal sample).
    pub kurtosis: f64,
    pub excess_kurtosis: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation (divisor `n - 1`) and kurtosis.
pub fn summary_stats(x: &[f64]) -> Result<SummaryStats> {
    if x.len() < 2 {
        return Err(Error::Dimension("summary statistics need at least two values".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    let var_pop = m2 / n;
    let kurtosis = if var_pop > 0.0 {
        (m4 / n) / (var_pop * var_pop)
    } else {
        f64::NAN
    };
    Ok(SummaryStats {
        n: x.len(),
        mean,
        sd: (m2 / (n - 1.0)).sqrt(),
        kurtosis,
        excess_kurtosis: kurtosis - 3.0,
        min: x.iter().copied().fold(f64::INFINITY, f64::min),
        max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Sample autocorrelations at lags `0..=max_lag` (biased estimator, divisor `n`).
pub fn acf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let max_lag = max_lag.min(n - 1);
    if c0 == 0.0 {
        let mut out = vec![0.0; max_lag + 1];
        out[0] = 1.0;
        return out;
    }
    (0..=max_lag)
        .map(|l| c[..n - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect()
}

/// Parzen lag window at `x = lag / bandwidth`.
pub fn parzen(x: f64) -> f64 {
    let x = x.abs();
    if x <= 0.5 {
        1.0 - 6.0 * x * x + 6.0 * x * x * x
    } else if x <= 1.0 {
        2.0 * (1.0 - x).powi(3)
    } else {
        0.0
    }
}

/// Inefficiency factor `1 + 2 sum_l w(l / L) rho(l)` with the Parzen window.
pub fn inefficiency_factor(x: &[f64], bandwidth: usize) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::Dimension("inefficiency factor needs a chain of length >= 2".into()));
    }
    if bandwidth == 0 {
        return Ok(1.0);
    }
    let rho = acf(x, bandwidth);
    let mut f = 1.0;
    for (l, r) in rho.iter().enumerate().skip(1) {
        f += 2.0 * parzen(l as f64 / bandwidth as f64) * r;
    }
    Ok(f)
}

/// Relative inefficiency of sampler `a` against `b`: the ratio of time
/// needed for equal Monte Carlo precision.
pub fn relative_inefficiency(time_a: f64, time_b: f64, if_a: f64, if_b: f64) -> f64 {
    (time_a / time_b) * (if_a / if_b)
}

/// Mean squared error of estimates against reference values.
pub fn mse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Dimension("estimate and truth lengths".into()));
    }
    Ok(estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / estimates.len() as f64)
}

/// Two-regime classification: period `t` goes to the second regime when its
/// posterior probability exceeds 1/2 (ties stay in the first). Returns the
/// share of periods matching `truth`.
pub fn classify_regimes(prob_second: &[f64], truth: &[usize]) -> Result<f64> {
    if prob_second.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension("classification lengths".into()));
    }
    if truth.iter().any(|s| *s > 1) {
        return Err(Error::InvalidParameter(
            "classification is defined for two regimes".into(),
        ));
    }
    let hits = prob_second
        .iter()
        .zip(truth)
        .filter(|(p, s)| usize::from(**p > 0.5) == **s)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Gaussian kernel density on an even grid spanning the data +- 3 bandwidths.
pub fn kde(x: &[f64], grid_points: usize) -> Result<Vec<(f64, f64)>> {
    let stats = summary_stats(x)?;
    if grid_points < 2 {
        return Err(Error::Dimension("KDE grid needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mut h = 1.06 * stats.sd * n.powf(-0.2);
    if !(h > 0.0) {
        h = 1e-6 * stats.mean.abs().max(1.0);
    }
    let lo = stats.min - 3.0 * h;
    let hi = stats.max + 3.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..grid_points)
        .map(|i| {
            let g = lo + i as f64 * step;
            let d: f64 = x
                .iter()
                .map(|v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            (g, d * norm)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::RandomStream;

    #[test]
    fn parzen_is_continuous_at_half() {
        assert!((parzen(0.5) - 0.25).abs() < 1e-15);
        assert!((2.0 * 0.5f64.powi(3) - 0.25).abs() < 1e-15);
        assert_eq!(parzen(1.2), 0.0);
        assert_eq!(parzen(0.0), 1.0);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut r = RandomStream::new(4, 0);
        let x: Vec<f64> = (0..2000).map(|_| r.std_normal()).collect();
        let d = kde(&x, 2048).unwrap();
        let step = d[1].0 - d[0].0;
        let total: f64 = d.iter().map(|(_, v)| v * step).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn ar1_inefficiency_is_large() {
        let mut r = RandomStream::new(6, 0);
        let mut x = vec![0.0; 20_000];
        for t in 1..x.len() {
            x[t] = 0.9 * x[t - 1] + r.std_normal();
        }
        // Theoretical value (1 + 0.9) / (1 - 0.9) = 19.
        let f = inefficiency_factor(&x, 500).unwrap();
        assert!(f > 12.0 && f < 26.0, "{f}");
    }

    #[test]
    fn summary_of_small_sample() {
        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.kurtosis - 1.64).abs() < 1e-12);
    }

    #[test]
    fn classification_counts_ties_as_first() {
        let c = classify_regimes(&[0.5, 0.9, 0.1], &[0, 1, 1]).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15);
    }
}
