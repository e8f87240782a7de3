//! Regime-path updates: multiple-try Metropolis variants built on FFBS
//! proposals and the exact single-move Gibbs sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auxiliary::AuxKind;
use crate::error::{Error, Result};
use crate::ffbs::{
    backward_antithetic_sample, conditional_antithetic_sample, forward_filter, proposal_logdensity,
    sample_path, FilterOutput, SampledPath,
};
use crate::model::{
    fill_variance_path, loglik_along, path_log_prior_from, ModelParams, ObservationSeries,
    StatePath, VarianceInit,
};
use crate::numeric::{inverse_cdf_index, log_normal_pdf, log_sum_exp, normalize_log_weights};
use crate::stochastics::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    SingleMove,
    Mtm,
    Mtmis,
    Mctm,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::SingleMove => "single-move",
            SamplerKind::Mtm => "mtm",
            SamplerKind::Mtmis => "mtmis",
            SamplerKind::Mctm => "mctm",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SamplerKind::SingleMove,
            SamplerKind::Mtm,
            SamplerKind::Mtmis,
            SamplerKind::Mctm,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown sampler {s:?}; expected single-move, mtm, mtmis or mctm"
            ))
        })
    }
}

/// Trial weighting for the antithetic multiple-try sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MctmWeights {
    /// Products of importance weights over the first `k` trials. Two trials only.
    Cumulative,
    /// Each trial weighted by its own importance weight; the reference set is
    /// drawn from the antithetic law conditional on the current path.
    Individual,
}

impl MctmWeights {
    pub fn default_for(trials: usize) -> Self {
        if trials == 2 {
            MctmWeights::Cumulative
        } else {
            MctmWeights::Individual
        }
    }
}

/// Everything one chain updates in place.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub theta: ModelParams,
    pub path: StatePath,
    pub init: VarianceInit,
    pub rng: RandomStream,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateUpdateReport {
    pub accepted: bool,
    /// Trial chosen for the Metropolis step (`None` for single-move or when
    /// every trial had zero weight).
    pub selected: Option<usize>,
    pub log_accept_ratio: f64,
    /// Periods whose regime changed.
    pub changed: usize,
}

/// Path sampler configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSampler {
    pub kind: SamplerKind,
    pub trials: usize,
    pub aux: AuxKind,
    pub mctm_weights: Option<MctmWeights>,
}

impl StateSampler {
    pub fn new(kind: SamplerKind, trials: usize, aux: AuxKind) -> Self {
        Self {
            kind,
            trials,
            aux,
            mctm_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != SamplerKind::SingleMove && self.trials == 0 {
            return Err(Error::Config("number of trials must be at least 1".into()));
        }
        if self.kind == SamplerKind::Mctm {
            if !(2..=3).contains(&self.trials) {
                return Err(Error::UnsupportedTrials(self.trials));
            }
            if self.weights() == MctmWeights::Cumulative && self.trials != 2 {
                return Err(Error::Config(
                    "cumulative antithetic weights are only valid with two trials".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> MctmWeights {
        self.mctm_weights
            .unwrap_or_else(|| MctmWeights::default_for(self.trials))
    }

    /// One update of the regime path.
    pub fn update(&self, chain: &mut ChainState, y: &ObservationSeries) -> Result<StateUpdateReport> {
        if self.kind == SamplerKind::SingleMove {
            let changed = single_move_sweep(chain, y)?;
            return Ok(StateUpdateReport {
                accepted: true,
                selected: None,
                log_accept_ratio: 0.0,
                changed,
            });
        }
        let fo = forward_filter(y, &chain.theta, self.aux, chain.init)?;
        match self.kind {
            SamplerKind::Mtm => mtm_update(chain, y, &fo, self.trials),
            SamplerKind::Mtmis => mtmis_update(chain, y, &fo, self.trials),
            SamplerKind::Mctm => mctm_update(chain, y, &fo, self.trials, self.weights()),
            SamplerKind::SingleMove => unreachable!(),
        }
    }
}

// Target log density with a precomputed initial law.
struct Target<'a> {
    y: &'a [f64],
    theta: &'a ModelParams,
    init: f64,
    pi0: Vec<f64>,
}

impl<'a> Target<'a> {
    fn new(
        theta: &'a ModelParams,
        init: VarianceInit,
        y: &'a ObservationSeries,
        path: &StatePath,
    ) -> Result<Self> {
        if y.len() != path.len() {
            return Err(Error::Dimension("series and path lengths differ".into()));
        }
        Ok(Self {
            y: y.values(),
            theta,
            init: init.value(),
            pi0: theta.transition.stationary(),
        })
    }

    fn log_density(&self, path: &StatePath) -> Result<f64> {
        let lp = path_log_prior_from(path, &self.theta.transition, &self.pi0);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(loglik_along(self.y, path.as_slice(), &self.theta.regimes, self.init)? + lp)
    }

    fn log_weight(&self, s: &SampledPath) -> Result<f64> {
        let lp = self.log_density(&s.path)?;
        Ok(importance(lp, s.log_q))
    }

    fn current_weight(&self, path: &StatePath, fo: &FilterOutput) -> Result<f64> {
        let log_q = proposal_logdensity(path, fo, &self.theta.transition)?;
        Ok(importance(self.log_density(path)?, log_q))
    }
}

#[inline]
fn importance(log_p: f64, log_q: f64) -> f64 {
    if log_p == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if log_q == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        log_p - log_q
    }
}

/// `ln p(path, y | theta) - ln q(path)` for a path under a filter's proposal.
pub fn importance_log_weight(
    path: &StatePath,
    theta: &ModelParams,
    y: &ObservationSeries,
    fo: &FilterOutput,
    init: VarianceInit,
) -> Result<f64> {
    let log_q = proposal_logdensity(path, fo, &theta.transition)?;
    let lp = crate::model::path_conditional_logdensity(y, path, theta, init)?;
    Ok(importance(lp, log_q))
}

fn select(log_w: &[f64], u: f64) -> Option<usize> {
    let mut probs = Vec::with_capacity(log_w.len());
    normalize_log_weights(log_w, &mut probs)?;
    Some(inverse_cdf_index(&probs, u))
}

fn metropolis(
    path: &mut StatePath,
    rng: &mut RandomStream,
    log_ratio: f64,
    selected: Option<usize>,
    proposal: Option<StatePath>,
) -> StateUpdateReport {
    let u = rng.uniform();
    let accepted = proposal.is_some()
        && !log_ratio.is_nan()
        && (u.ln() < log_ratio || log_ratio == f64::INFINITY);
    let mut changed = 0;
    if accepted {
        let new = proposal.expect("accepted proposal");
        changed = new
            .as_slice()
            .iter()
            .zip(path.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        *path = new;
    }
    StateUpdateReport {
        accepted,
        selected,
        log_accept_ratio: log_ratio,
        changed,
    }
}

/// Independent multiple-try Metropolis: `K` FFBS trials, reference set of
/// `K - 1` fresh draws plus the current path.
pub fn mtm_update(
    chain: &mut ChainState,
    y: &ObservationSeries,
    fo: &FilterOutput,
    k: usize,
) -> Result<StateUpdateReport> {
    if k == 0 {
        return Err(Error::Config("number of trials must be at least 1".into()));
    }
    let ChainState {
        theta,
        path,
        init,
        rng,
    } = chain;
    let target = Target::new(theta, *init, y, path)?;
    let trans = &theta.transition;
    let mut trials = Vec::with_capacity(k);
    let mut log_w = Vec::with_capacity(k);
    for _ in 0..k {
        let s = sample_path(fo, trans, rng)?;
        log_w.push(target.log_weight(&s)?);
        trials.push(s);
    }
    let current_w = target.current_weight(path, fo)?;
    let u = rng.uniform();
    let Some(sel) = select(&log_w, u) else {
        return Ok(metropolis(path, rng, f64::NEG_INFINITY, None, None));
    };
    let mut ref_w = Vec::with_capacity(k);
    for _ in 1..k {
        let s = sample_path(fo, trans, rng)?;
        ref_w.push(target.log_weight(&s)?);
    }
    ref_w.push(current_w);
    let log_ratio = log_sum_exp(&log_w) - log_sum_exp(&ref_w);
    let proposal = trials.into_iter().nth(sel).map(|s| s.path);
    Ok(metropolis(path, rng, log_ratio, Some(sel), proposal))
}

/// Importance-sampling multiple-try: accept with
/// `W / (W - w(selected) + w(current))`.
pub fn mtmis_update(
    chain: &mut ChainState,
    y: &ObservationSeries,
    fo: &FilterOutput,
    k: usize,
) -> Result<StateUpdateReport> {
    if k == 0 {
        return Err(Error::Config("number of trials must be at least 1".into()));
    }
    let ChainState {
        theta,
        path,
        init,
        rng,
    } = chain;
    let target = Target::new(theta, *init, y, path)?;
    let trans = &theta.transition;
    let mut trials = Vec::with_capacity(k);
    let mut log_w = Vec::with_capacity(k);
    for _ in 0..k {
        let s = sample_path(fo, trans, rng)?;
        log_w.push(target.log_weight(&s)?);
        trials.push(s);
    }
    let current_w = target.current_weight(path, fo)?;
    let u = rng.uniform();
    let Some(sel) = select(&log_w, u) else {
        return Ok(metropolis(path, rng, f64::NEG_INFINITY, None, None));
    };
    let mut denom: Vec<f64> = log_w
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != sel)
        .map(|(_, w)| *w)
        .collect();
    denom.push(current_w);
    let log_ratio = log_sum_exp(&log_w) - log_sum_exp(&denom);
    let proposal = trials.into_iter().nth(sel).map(|s| s.path);
    Ok(metropolis(path, rng, log_ratio, Some(sel), proposal))
}

/// Antithetic multiple-try Metropolis with `K` in `{2, 3}` correlated trials.
///
/// Weights are divided by the auxiliary marginal likelihood, which leaves the
/// chain unchanged and keeps cumulative products on a usable scale.
pub fn mctm_update(
    chain: &mut ChainState,
    y: &ObservationSeries,
    fo: &FilterOutput,
    k: usize,
    weights: MctmWeights,
) -> Result<StateUpdateReport> {
    if !(2..=3).contains(&k) {
        return Err(Error::UnsupportedTrials(k));
    }
    if weights == MctmWeights::Cumulative && k != 2 {
        return Err(Error::Config(
            "cumulative antithetic weights are only valid with two trials".into(),
        ));
    }
    let ChainState {
        theta,
        path,
        init,
        rng,
    } = chain;
    let scale = fo.log_marginal();
    let target = Target::new(theta, *init, y, path)?;
    let trans = &theta.transition;
    let trials = backward_antithetic_sample(fo, trans, k, rng)?;
    let omega = trials
        .iter()
        .map(|s| target.log_weight(s).map(|w| w - scale))
        .collect::<Result<Vec<_>>>()?;
    let forward = match weights {
        MctmWeights::Cumulative => cumulative(&omega),
        MctmWeights::Individual => omega.clone(),
    };
    let u = rng.uniform();
    let Some(sel) = select(&forward, u) else {
        return Ok(metropolis(path, rng, f64::NEG_INFINITY, None, None));
    };
    let set = conditional_antithetic_sample(fo, trans, k, sel, path, rng)?;
    let mut ref_omega = Vec::with_capacity(k);
    for (j, s) in set.iter().enumerate() {
        // Cumulative weighting keeps the earlier trials as the earlier reference slots.
        let s = if weights == MctmWeights::Cumulative && j < sel {
            &trials[j]
        } else {
            s
        };
        ref_omega.push(target.log_weight(s)? - scale);
    }
    let reference = match weights {
        MctmWeights::Cumulative => cumulative(&ref_omega),
        MctmWeights::Individual => ref_omega,
    };
    let log_ratio = log_sum_exp(&forward) - log_sum_exp(&reference);
    let proposal = trials.into_iter().nth(sel).map(|s| s.path);
    Ok(metropolis(path, rng, log_ratio, Some(sel), proposal))
}

fn cumulative(omega: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    omega
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// One exact single-move Gibbs sweep over `t = 1..T`; returns the number of
/// periods whose regime changed.
///
/// Changing `s_t` alters the variances from `t` on. The alternative variance
/// recursion is followed only until it coincides bitwise with the current
/// one; every later term is identical and cancels from the full conditional.
pub fn single_move_sweep(chain: &mut ChainState, y: &ObservationSeries) -> Result<usize> {
    let t_len = y.len();
    if chain.path.len() != t_len {
        return Err(Error::Dimension("series and path lengths differ".into()));
    }
    let ys = y.values();
    let theta = &chain.theta;
    let regimes = &theta.regimes;
    let trans = &theta.transition;
    let m = theta.num_regimes();
    let pi0 = trans.stationary();
    let sigma1 = chain.init.value();

    let mut var = vec![0.0; t_len];
    fill_variance_path(ys, chain.path.as_slice(), regimes, sigma1, &mut var)?;
    let mut cur_logn: Vec<f64> = (0..t_len)
        .map(|t| log_normal_pdf(ys[t], regimes[chain.path.regime(t)].mu, var[t]))
        .collect();

    let mut log_cond = vec![0.0; m];
    let mut probs = Vec::with_capacity(m);
    let mut changed = 0;
    for t in 0..t_len {
        let cur = chain.path.regime(t);
        let path = chain.path.as_slice();
        for (alt, lc) in log_cond.iter_mut().enumerate() {
            let mut v = if t == 0 {
                pi0[alt].ln()
            } else {
                trans.log_prob(alt, path[t - 1])
            };
            if t + 1 < t_len {
                v += trans.log_prob(path[t + 1], alt);
            }
            if v > f64::NEG_INFINITY && alt != cur {
                v += delta_loglik(ys, path, regimes, &var, &cur_logn, sigma1, t, alt)?;
            }
            *lc = v;
        }
        if normalize_log_weights(&log_cond, &mut probs).is_none() {
            return Err(Error::Numeric(format!(
                "single-move full conditional vanishes at t = {}",
                t + 1
            )));
        }
        let new = inverse_cdf_index(&probs, chain.rng.uniform());
        if new != cur {
            chain.path.set(t, new);
            changed += 1;
            refresh_from(ys, chain.path.as_slice(), regimes, sigma1, t, &mut var, &mut cur_logn)?;
        }
    }
    Ok(changed)
}

// ln f(y | path with s_t = alt) - ln f(y | path), stopping at coalescence.
#[allow(clippy::too_many_arguments)]
fn delta_loglik(
    ys: &[f64],
    path: &[usize],
    regimes: &[crate::model::RegimeParams],
    var: &[f64],
    cur_logn: &[f64],
    sigma1: f64,
    t: usize,
    alt: usize,
) -> Result<f64> {
    let regime_at = |j: usize| if j == t { alt } else { path[j] };
    let mut v = if t == 0 {
        sigma1
    } else {
        regimes[alt].next_variance(ys[t - 1] - regimes[path[t - 1]].mu, var[t - 1])
    };
    let mut delta = log_normal_pdf(ys[t], regimes[alt].mu, v) - cur_logn[t];
    for j in t + 1..ys.len() {
        let r = &regimes[path[j]];
        v = r.next_variance(ys[j - 1] - regimes[regime_at(j - 1)].mu, v);
        if v == var[j] {
            break;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonFinite {
                index: j + 1,
                what: "conditional variance",
            });
        }
        delta += log_normal_pdf(ys[j], r.mu, v) - cur_logn[j];
    }
    Ok(delta)
}

// Recomputes cached variances and log densities from t until they coalesce.
fn refresh_from(
    ys: &[f64],
    path: &[usize],
    regimes: &[crate::model::RegimeParams],
    sigma1: f64,
    t: usize,
    var: &mut [f64],
    cur_logn: &mut [f64],
) -> Result<()> {
    var[t] = if t > 0 {
        regimes[path[t]].next_variance(ys[t - 1] - regimes[path[t - 1]].mu, var[t - 1])
    } else {
        sigma1
    };
    cur_logn[t] = log_normal_pdf(ys[t], regimes[path[t]].mu, var[t]);
    for j in t + 1..ys.len() {
        let r = &regimes[path[j]];
        let v = r.next_variance(ys[j - 1] - regimes[path[j - 1]].mu, var[j - 1]);
        if v == var[j] {
            break;
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonFinite {
                index: j + 1,
                what: "conditional variance",
            });
        }
        var[j] = v;
        cur_logn[j] = log_normal_pdf(ys[j], r.mu, v);
    }
    Ok(())
}
