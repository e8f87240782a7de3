//! Forward filtering under an auxiliary model and backward sampling of
//! regime paths, including antithetic (permuted displacement) draws.

use crate::auxiliary::{aux_init, AuxKind};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ObservationSeries, StatePath, TransitionMatrix, VarianceInit};
use crate::numeric::{log_normal_pdf, log_sum_exp};
use crate::stochastics::RandomStream;

/// Filtered and predictive probabilities of one forward pass.
#[derive(Clone, Debug)]
pub struct FilterOutput {
    kind: AuxKind,
    m: usize,
    t: usize,
    filtered: Vec<f64>,
    predictive: Vec<f64>,
    regime_var: Vec<f64>,
    log_marginal: f64,
}

impl FilterOutput {
    pub fn kind(&self) -> AuxKind {
        self.kind
    }

    pub fn num_regimes(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    /// `q(s_t | y_{1:t})`, `t` 0-based.
    pub fn filtered(&self, t: usize) -> &[f64] {
        &self.filtered[t * self.m..(t + 1) * self.m]
    }

    /// `q(s_t | y_{1:t-1})`, `t` 0-based.
    pub fn predictive(&self, t: usize) -> &[f64] {
        &self.predictive[t * self.m..(t + 1) * self.m]
    }

    /// Proxy variances `h_t(m)` used for observation `t`.
    pub fn regime_variances(&self, t: usize) -> &[f64] {
        &self.regime_var[t * self.m..(t + 1) * self.m]
    }

    /// `ln q(y_{1:T})` under the auxiliary model.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }
}

/// Forward filter with the stationary law as the initial distribution.
pub fn forward_filter(
    y: &ObservationSeries,
    theta: &ModelParams,
    kind: AuxKind,
    init: VarianceInit,
) -> Result<FilterOutput> {
    let pi0 = theta.transition.stationary();
    forward_filter_from(y, theta, kind, init, &pi0)
}

pub fn forward_filter_from(
    y: &ObservationSeries,
    theta: &ModelParams,
    kind: AuxKind,
    init: VarianceInit,
    pi0: &[f64],
) -> Result<FilterOutput> {
    theta.validate()?;
    let m = theta.num_regimes();
    let t_len = y.len();
    let ys = y.values();
    let mut aux = aux_init(kind, theta, init, pi0)?;
    let mut out = FilterOutput {
        kind,
        m,
        t: t_len,
        filtered: vec![0.0; t_len * m],
        predictive: vec![0.0; t_len * m],
        regime_var: vec![0.0; t_len * m],
        log_marginal: 0.0,
    };
    let mut log_joint = vec![0.0; m];
    let mut pred = pi0.to_vec();
    for t in 0..t_len {
        if t > 0 {
            let (done, _) = out.filtered.split_at(t * m);
            let filt_prev = &done[(t - 1) * m..];
            theta.transition.propagate(filt_prev, &mut pred);
            aux.step(theta, ys[t - 1], filt_prev, &pred)?;
        }
        let h = aux.regime_variances();
        for j in 0..m {
            log_joint[j] = pred[j].ln() + log_normal_pdf(ys[t], theta.regimes[j].mu, h[j]);
        }
        let norm = log_sum_exp(&log_joint);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                index: t + 1,
                what: "forward-filter normalizer",
            });
        }
        out.log_marginal += norm;
        let base = t * m;
        for j in 0..m {
            out.filtered[base + j] = (log_joint[j] - norm).exp();
            out.predictive[base + j] = pred[j];
            out.regime_var[base + j] = h[j];
        }
    }
    Ok(out)
}

/// A proposed path with its log proposal probability.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPath {
    pub path: StatePath,
    pub log_q: f64,
}

// Normalized backward probabilities q(s_t = . | s_{t+1} = next, y_{1:t}),
// written as cumulative sums with the top of the last positive cell set to 1.
fn backward_cells(
    fo: &FilterOutput,
    trans: &TransitionMatrix,
    t: usize,
    next: Option<usize>,
    probs: &mut [f64],
    upper: &mut [f64],
) -> Result<()> {
    let f = fo.filtered(t);
    let mut sum = 0.0;
    for m in 0..probs.len() {
        let w = match next {
            Some(n) => trans.prob(n, m) * f[m],
            None => f[m],
        };
        probs[m] = w;
        sum += w;
    }
    if !(sum > 0.0) {
        return Err(Error::Numeric(format!(
            "backward probabilities vanish at t = {}",
            t + 1
        )));
    }
    let mut cum = 0.0;
    let mut last_pos = 0;
    for m in 0..probs.len() {
        probs[m] /= sum;
        cum += probs[m];
        upper[m] = cum;
        if probs[m] > 0.0 {
            last_pos = m;
        }
    }
    for u in upper[last_pos..].iter_mut() {
        *u = 1.0;
    }
    Ok(())
}

#[inline]
fn pick(upper: &[f64], u: f64) -> usize {
    upper.iter().position(|c| u < *c).unwrap_or(upper.len() - 1)
}

fn check_filter(fo: &FilterOutput, trans: &TransitionMatrix) -> Result<()> {
    if fo.m != trans.num_regimes() {
        return Err(Error::Dimension("filter and transition matrix regimes".into()));
    }
    if fo.t == 0 {
        return Err(Error::Dimension("empty filter output".into()));
    }
    Ok(())
}

/// Backward sampling driven by a uniform per period (`u[t]` decides `s_t`).
pub fn backward_sample(
    fo: &FilterOutput,
    trans: &TransitionMatrix,
    u: &[f64],
) -> Result<SampledPath> {
    check_filter(fo, trans)?;
    if u.len() != fo.t {
        return Err(Error::Dimension(format!(
            "{} uniforms for {} periods",
            u.len(),
            fo.t
        )));
    }
    let m = fo.m;
    let mut probs = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut states = vec![0usize; fo.t];
    let mut log_q = 0.0;
    let mut next = None;
    for t in (0..fo.t).rev() {
        backward_cells(fo, trans, t, next, &mut probs, &mut upper)?;
        let s = pick(&upper, u[t]);
        log_q += probs[s].ln();
        states[t] = s;
        next = Some(s);
    }
    Ok(SampledPath {
        path: StatePath::new(states, m)?,
        log_q,
    })
}

/// One independent FFBS draw.
pub fn sample_path(
    fo: &FilterOutput,
    trans: &TransitionMatrix,
    rng: &mut RandomStream,
) -> Result<SampledPath> {
    let u: Vec<f64> = (0..fo.t).map(|_| rng.uniform()).collect();
    backward_sample(fo, trans, &u)
}

/// `ln q(path)` under the backward-sampling law; `-inf` for paths the
/// proposal cannot produce.
pub fn proposal_logdensity(
    path: &StatePath,
    fo: &FilterOutput,
    trans: &TransitionMatrix,
) -> Result<f64> {
    check_filter(fo, trans)?;
    if path.len() != fo.t || path.num_regimes() != fo.m {
        return Err(Error::Dimension("path does not match the filter".into()));
    }
    let mut probs = vec![0.0; fo.m];
    let mut upper = vec![0.0; fo.m];
    let mut log_q = 0.0;
    let mut next = None;
    for t in (0..fo.t).rev() {
        backward_cells(fo, trans, t, next, &mut probs, &mut upper)?;
        let s = path.regime(t);
        log_q += probs[s].ln();
        next = Some(s);
    }
    Ok(log_q)
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Permuted displacement of `r1` for `K` in `{2, 3}` trials.
///
/// Returns `(r_{perm[0]+1}, ..., r_{perm[K-1]+1})` with
/// `r_k = frac(2^{k-2} r_1 + 1/2)` for `2 <= k < K` and
/// `r_K = 1 - frac(2^{K-2} r_1)`.
pub fn permuted_displacement(k: usize, r1: f64, perm: &[usize]) -> Result<Vec<f64>> {
    if !(2..=3).contains(&k) {
        return Err(Error::UnsupportedTrials(k));
    }
    if perm.len() != k {
        return Err(Error::Dimension("permutation length".into()));
    }
    let mut seen = [false; 3];
    for &p in perm {
        if p >= k || seen[p] {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    let r = displacement_values(k, r1);
    Ok(perm.iter().map(|&p| r[p]).collect())
}

fn displacement_values(k: usize, r1: f64) -> [f64; 3] {
    let mut r = [r1, 0.0, 0.0];
    for (idx, v) in r.iter_mut().enumerate().take(k - 1).skip(1) {
        *v = frac(2f64.powi(idx as i32 - 1) * r1 + 0.5);
    }
    r[k - 1] = 1.0 - frac(2f64.powi(k as i32 - 2) * r1);
    // 1 - frac(.) is 1 when r1 hits a dyadic point; keep uniforms in [0, 1).
    if r[k - 1] >= 1.0 {
        r[k - 1] = 0.0;
    }
    r
}

/// `K x T` uniforms; each column is an antithetic tuple, rows are marginally iid.
#[derive(Clone, Debug)]
pub struct UniformBlock {
    k: usize,
    t: usize,
    u: Vec<f64>,
}

impl UniformBlock {
    pub fn trial(&self, j: usize) -> &[f64] {
        &self.u[j * self.t..(j + 1) * self.t]
    }

    pub fn num_trials(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }
}

/// Fresh `r_1` and permutation per period.
pub fn antithetic_uniforms(k: usize, t: usize, rng: &mut RandomStream) -> Result<UniformBlock> {
    if !(2..=3).contains(&k) {
        return Err(Error::UnsupportedTrials(k));
    }
    let mut u = vec![0.0; k * t];
    for s in 0..t {
        let r1 = rng.uniform();
        let perm = rng.permutation(k);
        let r = displacement_values(k, r1);
        for j in 0..k {
            u[j * t + s] = r[perm[j]];
        }
    }
    Ok(UniformBlock { k, t, u })
}

/// `K` antithetic FFBS paths.
pub fn backward_antithetic_sample(
    fo: &FilterOutput,
    trans: &TransitionMatrix,
    k: usize,
    rng: &mut RandomStream,
) -> Result<Vec<SampledPath>> {
    let block = antithetic_uniforms(k, fo.t, rng)?;
    (0..k).map(|j| backward_sample(fo, trans, block.trial(j))).collect()
}

/// `K` antithetic paths drawn conditionally on trial `slot` equalling `fixed`.
///
/// For each period the uniform of `slot` is drawn uniformly on the inverse-CDF
/// cell that reproduces `fixed`; the base value `r_1` and the permutation are
/// then drawn from their conditional law given that uniform, and the other
/// trials are backward-sampled from the implied uniforms.
pub fn conditional_antithetic_sample(
    fo: &FilterOutput,
    trans: &TransitionMatrix,
    k: usize,
    slot: usize,
    fixed: &StatePath,
    rng: &mut RandomStream,
) -> Result<Vec<SampledPath>> {
    if !(2..=3).contains(&k) {
        return Err(Error::UnsupportedTrials(k));
    }
    if slot >= k {
        return Err(Error::Dimension(format!("slot {slot} of {k} trials")));
    }
    check_filter(fo, trans)?;
    if fixed.len() != fo.t || fixed.num_regimes() != fo.m {
        return Err(Error::Dimension("fixed path does not match the filter".into()));
    }
    let t_len = fo.t;
    let m = fo.m;
    let mut probs = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut u = vec![0.0; k * t_len];
    let mut log_q = 0.0;
    let mut next = None;
    for t in (0..t_len).rev() {
        backward_cells(fo, trans, t, next, &mut probs, &mut upper)?;
        let s = fixed.regime(t);
        log_q += probs[s].ln();
        let lo = if s == 0 { 0.0 } else { upper[s - 1] };
        let hi = upper[s];
        let us = if hi > lo { lo + (hi - lo) * rng.uniform() } else { lo };
        // Which displacement index does the fixed slot carry, and what r_1 gives it.
        let pos = rng.index(k);
        let r1 = invert_displacement(k, pos, us, rng);
        let r = displacement_values(k, r1);
        let mut others: Vec<usize> = (0..k).filter(|i| *i != pos).collect();
        if others.len() == 2 && rng.uniform() < 0.5 {
            others.swap(0, 1);
        }
        let mut it = others.into_iter();
        for j in 0..k {
            u[j * t_len + t] = if j == slot {
                us
            } else {
                r[it.next().expect("k - 1 remaining values")]
            };
        }
        next = Some(s);
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        if j == slot {
            out.push(SampledPath {
                path: fixed.clone(),
                log_q,
            });
        } else {
            out.push(backward_sample(fo, trans, &u[j * t_len..(j + 1) * t_len])?);
        }
    }
    Ok(out)
}

// r_1 such that displacement index `pos` equals `u`, drawn from its
// conditional law (uniform over the preimages).
fn invert_displacement(k: usize, pos: usize, u: f64, rng: &mut RandomStream) -> f64 {
    if pos == 0 {
        return u;
    }
    if pos == k - 1 {
        // u = 1 - frac(2^{k-2} r1).
        let base = if u == 0.0 { 0.0 } else { 1.0 - u };
        return match k {
            2 => base,
            _ => {
                let half = if rng.uniform() < 0.5 { 0.0 } else { 0.5 };
                base / 2.0 + half
            }
        };
    }
    // K = 3, middle value: u = frac(r1 + 1/2).
    frac(u + 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegimeParams;

    fn setup(t: usize) -> (ObservationSeries, ModelParams, VarianceInit) {
        let theta = ModelParams::new(
            vec![
                RegimeParams::new(0.1, 0.3, 0.3, 0.2),
                RegimeParams::new(-0.2, 1.5, 0.1, 0.6),
            ],
            TransitionMatrix::two_state(0.9, 0.85).unwrap(),
        )
        .unwrap();
        let sim = crate::model::simulate_dgp(&theta, t, 11).unwrap();
        let init = VarianceInit::from_sample_variance(&sim.y).unwrap();
        (sim.y, theta, init)
    }

    #[test]
    fn displacement_examples() {
        let r = permuted_displacement(2, 0.3, &[0, 1]).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-15 && (r[1] - 0.7).abs() < 1e-15);
        let r = permuted_displacement(3, 0.3, &[0, 1, 2]).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-15);
        assert!((r[1] - 0.8).abs() < 1e-15);
        assert!((r[2] - 0.4).abs() < 1e-15);
        let r = permuted_displacement(3, 0.3, &[2, 0, 1]).unwrap();
        assert!((r[0] - 0.4).abs() < 1e-15);
        assert!(matches!(
            permuted_displacement(4, 0.3, &[0, 1, 2, 3]),
            Err(Error::UnsupportedTrials(4))
        ));
    }

    #[test]
    fn filter_rows_normalize() {
        let (y, theta, init) = setup(50);
        for kind in AuxKind::ALL {
            let fo = forward_filter(&y, &theta, kind, init).unwrap();
            for t in 0..50 {
                assert!((fo.filtered(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!((fo.predictive(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_log_q_matches_density() {
        let (y, theta, init) = setup(40);
        let fo = forward_filter(&y, &theta, AuxKind::Klaassen, init).unwrap();
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..20 {
            let s = sample_path(&fo, &theta.transition, &mut rng).unwrap();
            let d = proposal_logdensity(&s.path, &fo, &theta.transition).unwrap();
            assert_eq!(s.log_q, d);
        }
    }

    #[test]
    fn conditional_slot_is_reproduced() {
        let (y, theta, init) = setup(30);
        let fo = forward_filter(&y, &theta, AuxKind::Gray, init).unwrap();
        let mut rng = RandomStream::new(9, 0);
        let x = sample_path(&fo, &theta.transition, &mut rng).unwrap();
        for k in [2, 3] {
            for slot in 0..k {
                let set =
                    conditional_antithetic_sample(&fo, &theta.transition, k, slot, &x.path, &mut rng)
                        .unwrap();
                assert_eq!(set[slot].path, x.path);
                assert_eq!(set[slot].log_q, x.log_q);
            }
        }
    }

    #[test]
    fn inversion_reproduces_value() {
        let mut rng = RandomStream::new(2, 0);
        for k in [2usize, 3] {
            for pos in 0..k {
                for &u in &[0.0, 0.1, 0.37, 0.5, 0.93] {
                    let r1 = invert_displacement(k, pos, u, &mut rng);
                    let r = displacement_values(k, r1);
                    assert!((r[pos] - u).abs() < 1e-12, "k={k} pos={pos} u={u} got {}", r[pos]);
                }
            }
        }
    }
}
