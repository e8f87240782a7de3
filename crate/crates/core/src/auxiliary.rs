//! Collapsed auxiliary models whose filters drive the path proposals.
//!
//! Each auxiliary model replaces the path-dependent GARCH variance with a
//! proxy that depends only on filtered or predictive regime probabilities,
//! so the forward filter runs in `O(T M^2)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, TransitionMatrix, VarianceInit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxKind {
    /// Predictive-weighted mean and variance.
    Basic,
    /// As `Basic`, plus the dispersion of the regime means.
    Gray,
    /// Weights are one-step smoothed probabilities of the regime two periods back.
    Dueker,
    /// Weights are the filtered probabilities of the previous period.
    KlaassenSimple,
    /// Separate proxy per current regime, conditioning on it.
    Klaassen,
}

impl AuxKind {
    pub const ALL: [AuxKind; 5] = [
        AuxKind::Basic,
        AuxKind::Gray,
        AuxKind::Dueker,
        AuxKind::KlaassenSimple,
        AuxKind::Klaassen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AuxKind::Basic => "basic",
            AuxKind::Gray => "gray",
            AuxKind::Dueker => "dueker",
            AuxKind::KlaassenSimple => "klaassen-simple",
            AuxKind::Klaassen => "klaassen",
        }
    }
}

impl fmt::Display for AuxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AuxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AuxKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown auxiliary model {s:?}; expected one of basic, gray, dueker, \
                     klaassen-simple, klaassen"
                ))
            })
    }
}

/// Running state of an auxiliary model's variance proxy.
#[derive(Clone, Debug)]
pub struct AuxState {
    kind: AuxKind,
    m: usize,
    // h_t(m) for the most recent step.
    regime_var: Vec<f64>,
    // Proxy means/variances used in the latest step (length M for Klaassen, 1 otherwise).
    proxy_mu: Vec<f64>,
    proxy_var: Vec<f64>,
    // predictive_{t-1} and filtered_{t-2} carried for the next step.
    pred_prev: Vec<f64>,
    filt_prevprev: Vec<f64>,
    smoothed: Vec<f64>,
    steps: usize,
    scratch: Vec<f64>,
}

impl AuxState {
    pub fn kind(&self) -> AuxKind {
        self.kind
    }

    /// Per-regime proxy variances `h_t(m)` after the latest step.
    pub fn regime_variances(&self) -> &[f64] {
        &self.regime_var
    }

    pub fn proxy_mu(&self) -> &[f64] {
        &self.proxy_mu
    }

    pub fn proxy_var(&self) -> &[f64] {
        &self.proxy_var
    }

    /// Weights used by the Dueker proxy in the latest step.
    pub fn smoothed_probs(&self) -> &[f64] {
        &self.smoothed
    }

    /// Advances from `t - 1` to `t`.
    ///
    /// `y_prev` is `y_{t-1}`, `filtered_prev` is `q(s_{t-1} | y_{1:t-1})` and
    /// `predictive_curr` is `q(s_t | y_{1:t-1})`.
    pub fn step(
        &mut self,
        theta: &ModelParams,
        y_prev: f64,
        filtered_prev: &[f64],
        predictive_curr: &[f64],
    ) -> Result<()> {
        let m = self.m;
        if filtered_prev.len() != m || predictive_curr.len() != m || theta.num_regimes() != m {
            return Err(Error::Dimension("auxiliary step dimension mismatch".into()));
        }
        let regimes = &theta.regimes;
        match self.kind {
            AuxKind::Klaassen => {
                let mut next = std::mem::take(&mut self.scratch);
                next.resize(m, 0.0);
                for i in 0..m {
                    let mut mu = 0.0;
                    let mut wsum = 0.0;
                    for j in 0..m {
                        let w = theta.transition.prob(i, j) * filtered_prev[j];
                        mu += w * regimes[j].mu;
                        wsum += w;
                    }
                    let (mu, var) = if wsum > 0.0 {
                        let mu = mu / wsum;
                        let mut var = 0.0;
                        for j in 0..m {
                            let w = theta.transition.prob(i, j) * filtered_prev[j] / wsum;
                            let d = regimes[j].mu - mu;
                            var += w * (d * d + self.regime_var[j]);
                        }
                        (mu, var)
                    } else {
                        // Regime i is unreachable; its proxy carries no weight.
                        weighted_moments(regimes, &self.regime_var, filtered_prev, true)
                    };
                    self.proxy_mu[i] = mu;
                    self.proxy_var[i] = var;
                    next[i] = regimes[i].next_variance(y_prev - mu, var);
                }
                std::mem::swap(&mut self.regime_var, &mut next);
                self.scratch = next;
            }
            kind => {
                let (mu, var) = match kind {
                    AuxKind::Basic => {
                        weighted_moments(regimes, &self.regime_var, &self.pred_prev, false)
                    }
                    AuxKind::Gray => {
                        weighted_moments(regimes, &self.regime_var, &self.pred_prev, true)
                    }
                    AuxKind::Dueker => {
                        if self.steps > 0 {
                            self.smoothed = one_step_smoothed(
                                &self.filt_prevprev,
                                filtered_prev,
                                &self.pred_prev,
                                &theta.transition,
                            )?;
                        }
                        weighted_moments(regimes, &self.regime_var, &self.smoothed, false)
                    }
                    AuxKind::KlaassenSimple => {
                        weighted_moments(regimes, &self.regime_var, filtered_prev, false)
                    }
                    AuxKind::Klaassen => unreachable!(),
                };
                self.proxy_mu[0] = mu;
                self.proxy_var[0] = var;
                let e = y_prev - mu;
                for (h, r) in self.regime_var.iter_mut().zip(regimes) {
                    *h = r.next_variance(e, var);
                }
            }
        }
        if let Some(i) = self.regime_var.iter().position(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::Numeric(format!(
                "auxiliary {} proxy variance {} for regime {}",
                self.kind,
                self.regime_var[i],
                i + 1
            )));
        }
        self.filt_prevprev.copy_from_slice(filtered_prev);
        self.pred_prev.copy_from_slice(predictive_curr);
        self.steps += 1;
        Ok(())
    }
}

// Weighted mean of the regime means and weighted proxy variance; with
// `dispersion` the spread of the regime means around that mean is added.
fn weighted_moments(
    regimes: &[crate::model::RegimeParams],
    h: &[f64],
    w: &[f64],
    dispersion: bool,
) -> (f64, f64) {
    let mu: f64 = regimes.iter().zip(w).map(|(r, w)| r.mu * w).sum();
    let mut var: f64 = h.iter().zip(w).map(|(h, w)| h * w).sum();
    if dispersion {
        var += regimes
            .iter()
            .zip(w)
            .map(|(r, w)| w * (r.mu - mu) * (r.mu - mu))
            .sum::<f64>();
    }
    (mu, var)
}

/// Initial auxiliary state at `t = 1`: every proxy variance equals `sigma_1^2`.
pub fn aux_init(
    kind: AuxKind,
    theta: &ModelParams,
    init: VarianceInit,
    pi0: &[f64],
) -> Result<AuxState> {
    let m = theta.num_regimes();
    if pi0.len() != m {
        return Err(Error::Dimension("initial distribution length".into()));
    }
    let width = if kind == AuxKind::Klaassen { m } else { 1 };
    Ok(AuxState {
        kind,
        m,
        regime_var: vec![init.value(); m],
        proxy_mu: vec![0.0; width],
        proxy_var: vec![init.value(); width],
        pred_prev: pi0.to_vec(),
        filt_prevprev: pi0.to_vec(),
        smoothed: pi0.to_vec(),
        steps: 0,
        scratch: Vec::with_capacity(m),
    })
}

/// `q(s_{t-1} = m | y_{1:t})` from filtered probabilities at `t - 1` and `t`
/// and the predictive at `t`.
pub fn one_step_smoothed(
    filtered_prev: &[f64],
    filtered_curr: &[f64],
    predictive_curr: &[f64],
    trans: &TransitionMatrix,
) -> Result<Vec<f64>> {
    let m = filtered_prev.len();
    if filtered_curr.len() != m || predictive_curr.len() != m || trans.num_regimes() != m {
        return Err(Error::Dimension("smoothing dimension mismatch".into()));
    }
    let mut out = vec![0.0; m];
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..m {
            if predictive_curr[i] > 0.0 {
                acc += filtered_curr[i] * trans.prob(i, j) / predictive_curr[i];
            }
        }
        out[j] = filtered_prev[j] * acc;
    }
    let s: f64 = out.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Numeric("one-step smoothed probabilities vanish".into()));
    }
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}

/// `q(s_{t-1} = m | s_t = i, y_{1:t-1})` for every `m`.
pub fn prob_prev_given_curr(
    filtered_prev: &[f64],
    predictive_curr: &[f64],
    trans: &TransitionMatrix,
    i: usize,
) -> Result<Vec<f64>> {
    let m = filtered_prev.len();
    if i >= m || predictive_curr.len() != m {
        return Err(Error::Dimension("regime index or predictive length".into()));
    }
    if !(predictive_curr[i] > 0.0) {
        return Err(Error::Numeric(format!(
            "predictive probability of regime {} is zero",
            i + 1
        )));
    }
    let mut out: Vec<f64> = (0..m)
        .map(|j| trans.prob(i, j) * filtered_prev[j] / predictive_curr[i])
        .collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(out)
}
