//! Model types, the path-conditional likelihood, enumeration oracles and
//! simulation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_normal_pdf, log_sum_exp};
use crate::stochastics::RandomStream;

/// Largest number of paths the enumeration oracle will visit.
pub const ENUMERATION_LIMIT: f64 = (1u64 << 20) as f64;

/// Mean and GARCH(1,1) coefficients of one regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub mu: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl RegimeParams {
    pub fn new(mu: f64, gamma: f64, alpha: f64, beta: f64) -> Self {
        Self {
            mu,
            gamma,
            alpha,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite()
            && self.gamma.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite())
        {
            return Err(Error::InvalidParameter(format!("non-finite regime {self:?}")));
        }
        if !(self.gamma > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need gamma > 0, alpha >= 0, beta >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `gamma / (1 - alpha - beta)` when the regime is covariance stationary.
    pub fn unconditional_variance(&self) -> Option<f64> {
        let persistence = self.alpha + self.beta;
        (persistence < 1.0).then(|| self.gamma / (1.0 - persistence))
    }

    /// Next conditional variance given the previous residual and variance.
    #[inline]
    pub fn next_variance(&self, prev_resid: f64, prev_var: f64) -> f64 {
        self.gamma + self.alpha * prev_resid * prev_resid + self.beta * prev_var
    }
}

/// Column-stochastic transition matrix: `prob(to, from) = Pr(s_t = to | s_{t-1} = from)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    m: usize,
    // Row-major: p[to * m + from].
    p: Vec<f64>,
    log_p: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from rows indexed by destination, columns by origin.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Dimension("transition matrix has no rows".into()));
        }
        let mut p = Vec::with_capacity(m * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "transition matrix row of length {} in a {m}-regime model",
                    row.len()
                )));
            }
            p.extend_from_slice(row);
        }
        Self::from_flat(m, p)
    }

    fn from_flat(m: usize, p: Vec<f64>) -> Result<Self> {
        for from in 0..m {
            let mut sum = 0.0;
            for to in 0..m {
                let v = p[to * m + from];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "transition probability ({to},{from}) = {v}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "transition column {from} sums to {sum}"
                )));
            }
        }
        let log_p = p.iter().map(|v| v.ln()).collect();
        Ok(Self { m, p, log_p })
    }

    /// Builds from per-origin columns (each a distribution over destinations).
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let m = cols.len();
        let mut rows = vec![vec![0.0; m]; m];
        for (from, col) in cols.iter().enumerate() {
            if col.len() != m {
                return Err(Error::Dimension("ragged transition columns".into()));
            }
            for (to, v) in col.iter().enumerate() {
                rows[to][from] = *v;
            }
        }
        Self::from_rows(&rows)
    }

    /// Two-regime matrix from the staying probabilities.
    pub fn two_state(p11: f64, p22: f64) -> Result<Self> {
        Self::from_rows(&[vec![p11, 1.0 - p22], vec![1.0 - p11, p22]])
    }

    pub fn identity(m: usize) -> Self {
        let mut p = vec![0.0; m * m];
        for i in 0..m {
            p[i * m + i] = 1.0;
        }
        Self::from_flat(m, p).expect("identity is stochastic")
    }

    pub fn uniform(m: usize) -> Self {
        Self::from_flat(m, vec![1.0 / m as f64; m * m]).expect("uniform is stochastic")
    }

    pub fn num_regimes(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.p[to * self.m + from]
    }

    #[inline]
    pub fn log_prob(&self, to: usize, from: usize) -> f64 {
        self.log_p[to * self.m + from]
    }

    pub fn column(&self, from: usize) -> Vec<f64> {
        (0..self.m).map(|to| self.prob(to, from)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    /// `out = P * v`.
    pub fn propagate(&self, v: &[f64], out: &mut [f64]) {
        for (to, o) in out.iter_mut().enumerate() {
            let row = &self.p[to * self.m..(to + 1) * self.m];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// Stationary distribution. Solves `(P - I) pi = 0, sum(pi) = 1`; when that
    /// system is singular (reducible chains such as the identity) it falls
    /// back to the Cesaro average of `P^n u` from the uniform vector `u`.
    pub fn stationary(&self) -> Vec<f64> {
        let m = self.m;
        if m == 1 {
            return vec![1.0];
        }
        let mut a = DMatrix::from_fn(m, m, |i, j| self.prob(i, j) - f64::from(i == j));
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(m);
        rhs[m - 1] = 1.0;
        if let Some(sol) = a.lu().solve(&rhs) {
            let ok = sol.iter().all(|v| v.is_finite() && *v > -1e-12);
            let resid = {
                let mut pv = vec![0.0; m];
                self.propagate(sol.as_slice(), &mut pv);
                pv.iter().zip(sol.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            };
            if ok && resid < 1e-9 {
                let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
                let s: f64 = pi.iter().sum();
                pi.iter_mut().for_each(|v| *v /= s);
                return pi;
            }
        }
        self.cesaro_average(4096)
    }

    fn cesaro_average(&self, steps: usize) -> Vec<f64> {
        let m = self.m;
        let mut v = vec![1.0 / m as f64; m];
        let mut next = vec![0.0; m];
        let mut acc = vec![0.0; m];
        for _ in 0..steps {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
            self.propagate(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        let s: f64 = acc.iter().sum();
        acc.iter().map(|a| a / s).collect()
    }
}

impl Serialize for TransitionMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        TransitionMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Full parameter vector: per-regime mean/GARCH coefficients and transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub regimes: Vec<RegimeParams>,
    pub transition: TransitionMatrix,
}

impl ModelParams {
    pub fn new(regimes: Vec<RegimeParams>, transition: TransitionMatrix) -> Result<Self> {
        let p = Self {
            regimes,
            transition,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.regimes.is_empty() {
            return Err(Error::Dimension("no regimes".into()));
        }
        if self.transition.num_regimes() != self.regimes.len() {
            return Err(Error::Dimension(format!(
                "{} regimes but a {}x{} transition matrix",
                self.regimes.len(),
                self.transition.num_regimes(),
                self.transition.num_regimes()
            )));
        }
        self.regimes.iter().try_for_each(RegimeParams::validate)
    }

    /// Data-generating values used throughout the examples and tests.
    pub fn reference_dgp() -> Self {
        Self::new(
            vec![
                RegimeParams::new(0.06, 0.30, 0.35, 0.20),
                RegimeParams::new(-0.09, 2.00, 0.10, 0.60),
            ],
            TransitionMatrix::two_state(0.98, 0.96).expect("valid"),
        )
        .expect("valid")
    }
}

/// Observed returns; finite and non-empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSeries(Vec<f64>);

impl ObservationSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("empty observation series".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: i + 1,
                what: "observation",
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sample variance with divisor `n - 1` (population variance when `n = 1`).
    pub fn sample_variance(&self) -> f64 {
        let n = self.0.len() as f64;
        let mean = self.0.iter().sum::<f64>() / n;
        let ss: f64 = self.0.iter().map(|x| (x - mean) * (x - mean)).sum();
        if self.0.len() > 1 {
            ss / (n - 1.0)
        } else {
            ss
        }
    }
}

/// Regime path, 0-based labels in `0..num_regimes`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StatePath {
    regimes: Vec<usize>,
    m: usize,
}

impl StatePath {
    pub fn new(regimes: Vec<usize>, m: usize) -> Result<Self> {
        if let Some((t, s)) = regimes.iter().enumerate().find(|(_, s)| **s >= m) {
            return Err(Error::InvalidParameter(format!(
                "regime {s} at t = {} outside 0..{m}",
                t + 1
            )));
        }
        Ok(Self { regimes, m })
    }

    pub fn constant(len: usize, regime: usize, m: usize) -> Result<Self> {
        Self::new(vec![regime; len], m)
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn num_regimes(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn regime(&self, t: usize) -> usize {
        self.regimes[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.regimes
    }

    pub(crate) fn set(&mut self, t: usize, regime: usize) {
        debug_assert!(regime < self.m);
        self.regimes[t] = regime;
    }

    /// Number of periods in each regime.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut n = vec![0; self.m];
        for s in &self.regimes {
            n[*s] += 1;
        }
        n
    }
}

/// Starting conditional variance `sigma_1^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceInit(f64);

impl VarianceInit {
    pub fn new(sigma1_sq: f64) -> Result<Self> {
        if !(sigma1_sq > 0.0 && sigma1_sq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "initial variance must be positive, got {sigma1_sq}"
            )));
        }
        Ok(Self(sigma1_sq))
    }

    /// The sample variance of the data, the default for estimation.
    pub fn from_sample_variance(y: &ObservationSeries) -> Result<Self> {
        Self::new(y.sample_variance())
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

fn check_lengths(y: &ObservationSeries, path: &StatePath, theta: &ModelParams) -> Result<()> {
    if y.len() != path.len() {
        return Err(Error::Dimension(format!(
            "series has {} observations, path has {}",
            y.len(),
            path.len()
        )));
    }
    if path.num_regimes() != theta.num_regimes() {
        return Err(Error::Dimension(format!(
            "path over {} regimes, parameters for {}",
            path.num_regimes(),
            theta.num_regimes()
        )));
    }
    Ok(())
}

/// Conditional variances `sigma_t^2` implied by a fixed regime path.
pub fn variance_path(
    y: &ObservationSeries,
    path: &StatePath,
    theta: &ModelParams,
    init: VarianceInit,
) -> Result<Vec<f64>> {
    check_lengths(y, path, theta)?;
    let mut out = vec![0.0; y.len()];
    fill_variance_path(y.values(), path.as_slice(), &theta.regimes, init.value(), &mut out)?;
    Ok(out)
}

pub(crate) fn fill_variance_path(
    y: &[f64],
    path: &[usize],
    regimes: &[RegimeParams],
    sigma1_sq: f64,
    out: &mut [f64],
) -> Result<()> {
    let mut var = sigma1_sq;
    out[0] = var;
    for t in 1..y.len() {
        let prev = &regimes[path[t - 1]];
        var = regimes[path[t]].next_variance(y[t - 1] - prev.mu, var);
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::NonFinite {
                index: t + 1,
                what: "conditional variance",
            });
        }
        out[t] = var;
    }
    Ok(())
}

/// `ln f(y | path, theta)`: the Gaussian log likelihood along a fixed path.
pub fn path_loglik(
    y: &ObservationSeries,
    path: &StatePath,
    theta: &ModelParams,
    init: VarianceInit,
) -> Result<f64> {
    check_lengths(y, path, theta)?;
    loglik_along(y.values(), path.as_slice(), &theta.regimes, init.value())
}

pub(crate) fn loglik_along(
    y: &[f64],
    path: &[usize],
    regimes: &[RegimeParams],
    sigma1_sq: f64,
) -> Result<f64> {
    let mut var = sigma1_sq;
    let mut ll = log_normal_pdf(y[0], regimes[path[0]].mu, var);
    for t in 1..y.len() {
        let prev = &regimes[path[t - 1]];
        let cur = &regimes[path[t]];
        var = cur.next_variance(y[t - 1] - prev.mu, var);
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::NonFinite {
                index: t + 1,
                what: "conditional variance",
            });
        }
        ll += log_normal_pdf(y[t], cur.mu, var);
    }
    Ok(ll)
}

/// `ln Pr(path | theta)` with the first regime drawn from the stationary law.
pub fn path_log_prior(path: &StatePath, trans: &TransitionMatrix) -> f64 {
    path_log_prior_from(path, trans, &trans.stationary())
}

pub(crate) fn path_log_prior_from(path: &StatePath, trans: &TransitionMatrix, pi0: &[f64]) -> f64 {
    let s = path.as_slice();
    let mut lp = pi0[s[0]].ln();
    for t in 1..s.len() {
        lp += trans.log_prob(s[t], s[t - 1]);
    }
    lp
}

/// `ln f(y, path | theta) = ln f(y | path, theta) + ln Pr(path | theta)`.
pub fn path_conditional_logdensity(
    y: &ObservationSeries,
    path: &StatePath,
    theta: &ModelParams,
    init: VarianceInit,
) -> Result<f64> {
    let lp = path_log_prior(path, &theta.transition);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(path_loglik(y, path, theta, init)? + lp)
}

/// Number of paths `m^t`, as a float to avoid overflow.
pub fn path_count(m: usize, t: usize) -> f64 {
    (m as f64).powi(t as i32)
}

/// Every path of length `t` over `m` regimes, in lexicographic order.
pub fn enumerate_paths(m: usize, t: usize) -> Result<Vec<StatePath>> {
    let count = path_count(m, t);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { paths: count });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0usize; t];
    loop {
        out.push(StatePath {
            regimes: cur.clone(),
            m,
        });
        let mut i = t;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < m {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Exact `ln f(y | theta)` by summing over all regime paths. Oracle only.
pub fn exact_likelihood_enumerate(
    y: &ObservationSeries,
    theta: &ModelParams,
    init: VarianceInit,
) -> Result<f64> {
    theta.validate()?;
    let paths = enumerate_paths(theta.num_regimes(), y.len())?;
    let terms = paths
        .iter()
        .map(|p| path_conditional_logdensity(y, p, theta, init))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

/// Exact posterior `Pr(path | y, theta)` over all paths, in
/// [`enumerate_paths`] order. Oracle only.
pub fn exact_path_posterior(
    y: &ObservationSeries,
    theta: &ModelParams,
    init: VarianceInit,
) -> Result<Vec<(StatePath, f64)>> {
    let paths = enumerate_paths(theta.num_regimes(), y.len())?;
    let logs = paths
        .iter()
        .map(|p| path_conditional_logdensity(y, p, theta, init))
        .collect::<Result<Vec<_>>>()?;
    let z = log_sum_exp(&logs);
    Ok(paths
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (p, (l - z).exp()))
        .collect())
}

/// Output of [`simulate_dgp`].
#[derive(Clone, Debug)]
pub struct Simulated {
    pub y: ObservationSeries,
    pub path: StatePath,
    pub variances: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimulationOptions {
    /// Presample periods discarded before the returned window.
    pub burn_in: usize,
    /// Start the presample in this regime instead of a stationary draw.
    pub initial_regime: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            burn_in: 500,
            initial_regime: None,
        }
    }
}

/// Simulates `t` observations with the default presample.
pub fn simulate_dgp(theta: &ModelParams, t: usize, seed: u64) -> Result<Simulated> {
    let mut rng = RandomStream::new(seed, 0);
    simulate_with(theta, t, &SimulationOptions::default(), &mut rng)
}

pub fn simulate_with(
    theta: &ModelParams,
    t: usize,
    opts: &SimulationOptions,
    rng: &mut RandomStream,
) -> Result<Simulated> {
    theta.validate()?;
    if t == 0 {
        return Err(Error::Dimension("cannot simulate zero observations".into()));
    }
    let m = theta.num_regimes();
    let trans = &theta.transition;
    let mut s = match opts.initial_regime {
        Some(r) if r < m => r,
        Some(r) => {
            return Err(Error::InvalidParameter(format!(
                "initial regime {r} outside 0..{m}"
            )))
        }
        None => rng.categorical(&trans.stationary())?,
    };
    let first = &theta.regimes[s];
    let mut var = first.unconditional_variance().unwrap_or(1.0);
    let mut y_prev = first.mu + var.sqrt() * rng.std_normal();
    let total = opts.burn_in + t;
    let mut ys = Vec::with_capacity(t);
    let mut states = Vec::with_capacity(t);
    let mut vars = Vec::with_capacity(t);
    if opts.burn_in == 0 {
        ys.push(y_prev);
        states.push(s);
        vars.push(var);
    }
    let mut col = vec![0.0; m];
    for step in 1..total {
        for (to, c) in col.iter_mut().enumerate() {
            *c = trans.prob(to, s);
        }
        let next = rng.categorical(&col)?;
        let prev_mu = theta.regimes[s].mu;
        let r = &theta.regimes[next];
        var = r.next_variance(y_prev - prev_mu, var);
        if !var.is_finite() {
            return Err(Error::NonFinite {
                index: step + 1,
                what: "simulated variance",
            });
        }
        y_prev = r.mu + var.sqrt() * rng.std_normal();
        s = next;
        if step >= opts.burn_in {
            ys.push(y_prev);
            states.push(s);
            vars.push(var);
        }
    }
    Ok(Simulated {
        y: ObservationSeries::new(ys)?,
        path: StatePath::new(states, m)?,
        variances: vars,
    })
}
