//! Seeded random streams and the draws built on them.
//!
//! Every chain owns one [`RandomStream`]: a ChaCha8 generator keyed by the
//! run seed with a distinct stream id, so results do not depend on thread
//! scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::numeric::inverse_cdf_index;

#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            rng,
            seed,
            stream_id,
        }
    }

    /// Fresh stream sharing this stream's seed.
    pub fn sibling(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `(0, 1)`; never returns zero, safe for logs and quantiles.
    #[inline]
    pub fn open_uniform(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Index drawn from normalized probabilities by inverse CDF.
    pub fn categorical(&mut self, probs: &[f64]) -> Result<usize> {
        check_probabilities(probs)?;
        Ok(inverse_cdf_index(probs, self.uniform()))
    }

    pub fn dirichlet(&mut self, alpha: &[f64]) -> Result<Vec<f64>> {
        if alpha.is_empty() {
            return Err(Error::Dimension("empty Dirichlet parameter".into()));
        }
        let mut draws = Vec::with_capacity(alpha.len());
        for &a in alpha {
            let g = Gamma::new(a, 1.0).map_err(|e| {
                Error::InvalidParameter(format!("Dirichlet parameter {a}: {e}"))
            })?;
            draws.push(g.sample(&mut self.rng));
        }
        let sum: f64 = draws.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Numeric("Dirichlet gamma draws sum to zero".into()));
        }
        for d in draws.iter_mut() {
            *d /= sum;
        }
        Ok(draws)
    }

    /// Normal(mean, sd^2) truncated to `[lo, hi]`, by inverse CDF.
    pub fn truncated_normal(&mut self, mean: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
        let u = self.uniform();
        truncated_normal_quantile(mean, sd, lo, hi, u)
    }

    /// Uniformly random permutation of `0..k`.
    pub fn permutation(&mut self, k: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            let j = self.rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub(crate) fn check_probabilities(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Dimension("empty probability vector".into()));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {sum}"
        )));
    }
    Ok(())
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`, accurate for large `x`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

#[inline]
fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with one Newton step.
pub fn norm_quantile(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let d = norm_pdf(x);
    if x.is_finite() && d > 0.0 {
        let resid = if x <= 0.0 {
            norm_cdf(x) - p
        } else {
            (1.0 - p) - norm_sf(x)
        };
        x - resid / d
    } else {
        x
    }
}

// Upper-tail quantile: x with 1 - Phi(x) = s.
fn norm_sf_quantile(s: f64) -> f64 {
    let x = SQRT_2 * erfc_inv(2.0 * s);
    let d = norm_pdf(x);
    if x.is_finite() && d > 0.0 {
        x + (norm_sf(x) - s) / d
    } else {
        x
    }
}

/// Log of `P(lo <= Z <= hi)` for `Z ~ N(0, 1)`, stable in both tails.
pub fn log_norm_interval(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let p = if lo >= 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else if hi <= 0.0 {
        norm_cdf(hi) - norm_cdf(lo)
    } else {
        1.0 - norm_cdf(lo) - norm_sf(hi)
    };
    if p > 0.0 {
        return p.ln();
    }
    // Far tail: Mills-ratio approximation of the upper-tail mass.
    let (a, b) = if lo >= 0.0 { (lo, hi) } else { (-hi, -lo) };
    let log_sf_a = -0.5 * a * a - a.ln() - 0.5 * crate::numeric::LN_2PI;
    log_sf_a + (-(b - a) * a).exp().mul_add(-1.0, 1.0).max(f64::MIN_POSITIVE).ln()
}

/// Quantile `u` of `N(mean, sd^2)` truncated to `[lo, hi]`.
pub fn truncated_normal_quantile(mean: f64, sd: f64, lo: f64, hi: f64, u: f64) -> Result<f64> {
    if !(sd > 0.0) || !(lo < hi) || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "truncated normal mean {mean}, sd {sd}, support [{lo}, {hi}]"
        )));
    }
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = if a >= 0.0 {
        upper_tail_quantile(a, b, u)
    } else if b <= 0.0 {
        -upper_tail_quantile(-b, -a, 1.0 - u)
    } else {
        let pa = norm_cdf(a);
        let pb = norm_cdf(b);
        norm_quantile(pa + u * (pb - pa))
    };
    Ok((mean + sd * z).clamp(lo, hi))
}

// Quantile on [a, b] with 0 <= a, measured through the upper tail.
fn upper_tail_quantile(a: f64, b: f64, u: f64) -> f64 {
    let sa = norm_sf(a);
    let sb = norm_sf(b);
    if sa - sb > 0.0 && sa > 1e-300 {
        let s = sa - u * (sa - sb);
        norm_sf_quantile(s)
    } else {
        // Beyond double range the truncated law is an exponential with rate a.
        let span = b - a;
        let t = -(1.0 - u * (1.0 - (-a * span).exp())).ln() / a;
        a + t.min(span)
    }
}

/// Log density of `N(mean, sd^2)` truncated to `[lo, hi]` at `x`.
pub fn truncated_normal_logpdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if x < lo || x > hi {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * z * z - 0.5 * crate::numeric::LN_2PI - sd.ln()
        - log_norm_interval((lo - mean) / sd, (hi - mean) / sd)
}
