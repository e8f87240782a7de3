//! Small log-domain helpers shared by the filters and samplers.

use std::f64::consts::PI;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln sum exp(x_i)`; `-inf` when every term is `-inf` or the slice is empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let e = x - mean;
    -0.5 * (LN_2PI + var.ln() + e * e / var)
}

/// Normal density with standard deviation `sd`.
#[inline]
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Exponentiates log weights in place relative to their maximum and returns
/// the normalizing log constant. Returns `None` when all weights are `-inf`.
pub fn normalize_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> Option<f64> {
    out.clear();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > f64::NEG_INFINITY) {
        return None;
    }
    if max == f64::INFINITY {
        // Degenerate: put all mass on the infinite entries.
        let n = log_w.iter().filter(|w| **w == f64::INFINITY).count() as f64;
        out.extend(
            log_w
                .iter()
                .map(|w| if *w == f64::INFINITY { 1.0 / n } else { 0.0 }),
        );
        return Some(f64::INFINITY);
    }
    let mut sum = 0.0;
    for w in log_w {
        let e = (w - max).exp();
        sum += e;
        out.push(e);
    }
    for e in out.iter_mut() {
        *e /= sum;
    }
    Some(max + sum.ln())
}

/// Index chosen by inverse CDF from normalized probabilities with `u` in
/// `[0, 1)`. Ties at cell boundaries go to the lower index; rounding slack
/// at the top goes to the last positive entry.
pub fn inverse_cdf_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_pos = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_pos = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_pos
}
