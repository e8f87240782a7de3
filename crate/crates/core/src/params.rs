//! Parameter updates given the regime path: Dirichlet transition columns,
//! independence Metropolis for the regime means and a linearized-regression
//! Metropolis-Hastings proposal for each regime's GARCH coefficients.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{
    fill_variance_path, loglik_along, ModelParams, ObservationSeries, RegimeParams, StatePath,
    TransitionMatrix, VarianceInit,
};
use crate::mvn::{box_probability3, mvn3_logpdf, truncated_mvn3_rejection, truncated_mvn_gibbs};
use crate::numeric::{log_sum_exp, normalize_log_weights, inverse_cdf_index};
use crate::samplers::ChainState;
use crate::stochastics::{truncated_normal_logpdf, RandomStream};

/// Closed interval `[lo, hi]` with `lo < hi`; serialized as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Uniform box priors on the regime parameters and Dirichlet priors on the
/// transition columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Dirichlet parameters laid out like the transition matrix
    /// (row = destination, column = origin).
    pub dirichlet: Vec<Vec<f64>>,
    pub mu: Vec<Interval>,
    pub gamma: Vec<Interval>,
    pub alpha: Vec<Interval>,
    pub beta: Vec<Interval>,
}

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).expect("static interval")
}

impl PriorSpec {
    /// Two-regime supports used for the reference data set, flat Dirichlet.
    pub fn reference() -> Self {
        Self {
            dirichlet: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            mu: vec![iv(0.02, 0.15), iv(-0.35, 0.18)],
            gamma: vec![iv(0.15, 0.45), iv(0.50, 4.00)],
            alpha: vec![iv(0.10, 0.50), iv(0.02, 0.35)],
            beta: vec![iv(0.05, 0.40), iv(0.35, 0.85)],
        }
    }

    pub fn num_regimes(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mu.len();
        if m == 0 {
            return Err(Error::Config("prior has no regimes".into()));
        }
        if self.gamma.len() != m || self.alpha.len() != m || self.beta.len() != m {
            return Err(Error::Config("prior supports have different lengths".into()));
        }
        if self.dirichlet.len() != m || self.dirichlet.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!("Dirichlet prior must be {m}x{m}")));
        }
        if self.dirichlet.iter().flatten().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("Dirichlet parameters must be positive".into()));
        }
        for k in 0..m {
            if self.gamma[k].hi() <= 0.0 {
                return Err(Error::Config(format!("gamma support of regime {} is not positive", k + 1)));
            }
            if self.alpha[k].hi() < 0.0 || self.beta[k].hi() < 0.0 {
                return Err(Error::Config(format!(
                    "alpha/beta support of regime {} is negative",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Box for `(gamma, alpha, beta)` of regime `k`, intersected with positivity.
    pub fn garch_box(&self, k: usize) -> ([f64; 3], [f64; 3]) {
        (
            [
                self.gamma[k].lo().max(1e-10),
                self.alpha[k].lo().max(0.0),
                self.beta[k].lo().max(0.0),
            ],
            [self.gamma[k].hi(), self.alpha[k].hi(), self.beta[k].hi()],
        )
    }

    /// Support midpoints and the Dirichlet prior mean of each column.
    pub fn midpoint_params(&self) -> Result<ModelParams> {
        self.validate()?;
        let m = self.num_regimes();
        let regimes = (0..m)
            .map(|k| {
                let (lo, hi) = self.garch_box(k);
                RegimeParams::new(
                    self.mu[k].midpoint(),
                    0.5 * (lo[0] + hi[0]),
                    0.5 * (lo[1] + hi[1]),
                    0.5 * (lo[2] + hi[2]),
                )
            })
            .collect();
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let s: f64 = (0..m).map(|i| self.dirichlet[i][j]).sum();
                (0..m).map(|i| self.dirichlet[i][j] / s).collect()
            })
            .collect();
        ModelParams::new(regimes, TransitionMatrix::from_columns(&cols)?)
    }

    /// Default chain start: support midpoints for the regime parameters and
    /// a persistent transition matrix (0.9 on the diagonal).
    pub fn default_start(&self) -> Result<ModelParams> {
        let mut theta = self.midpoint_params()?;
        let m = self.num_regimes();
        if m > 1 {
            let off = 0.1 / (m - 1) as f64;
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..m).map(|j| if i == j { 0.9 } else { off }).collect())
                .collect();
            theta.transition = TransitionMatrix::from_rows(&rows)?;
        }
        Ok(theta)
    }

    /// `ln p(theta)`; `-inf` outside the supports.
    pub fn log_density(&self, theta: &ModelParams) -> f64 {
        let m = self.num_regimes();
        if theta.num_regimes() != m {
            return f64::NEG_INFINITY;
        }
        let mut lp = 0.0;
        for (k, r) in theta.regimes.iter().enumerate() {
            let (lo, hi) = self.garch_box(k);
            let inside = self.mu[k].contains(r.mu)
                && [r.gamma, r.alpha, r.beta]
                    .iter()
                    .enumerate()
                    .all(|(i, v)| *v >= lo[i] && *v <= hi[i]);
            if !inside {
                return f64::NEG_INFINITY;
            }
            lp -= self.mu[k].width().ln();
            lp -= (0..3).map(|i| (hi[i] - lo[i]).ln()).sum::<f64>();
        }
        for j in 0..m {
            let a: Vec<f64> = (0..m).map(|i| self.dirichlet[i][j]).collect();
            let x: Vec<f64> = (0..m).map(|i| theta.transition.prob(i, j)).collect();
            lp += dirichlet_logpdf(&x, &a);
        }
        lp
    }
}

pub fn dirichlet_logpdf(x: &[f64], a: &[f64]) -> f64 {
    let sum_a: f64 = a.iter().sum();
    let mut lp = ln_gamma(sum_a);
    for (xi, ai) in x.iter().zip(a) {
        lp -= ln_gamma(*ai);
        if *ai != 1.0 {
            lp += (ai - 1.0) * xi.ln();
        }
    }
    lp
}

/// Transition counts `n(to, from)` along a path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionCounts {
    m: usize,
    n: Vec<u64>,
}

impl TransitionCounts {
    pub fn get(&self, to: usize, from: usize) -> u64 {
        self.n[to * self.m + from]
    }

    pub fn num_regimes(&self) -> usize {
        self.m
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }
}

pub fn count_transitions(path: &StatePath) -> TransitionCounts {
    let m = path.num_regimes();
    let mut n = vec![0u64; m * m];
    let s = path.as_slice();
    for w in s.windows(2) {
        n[w[1] * m + w[0]] += 1;
    }
    TransitionCounts { m, n }
}

/// Draws each column of the transition matrix from its Dirichlet posterior.
pub fn sample_transition(
    counts: &TransitionCounts,
    prior: &PriorSpec,
    rng: &mut RandomStream,
) -> Result<TransitionMatrix> {
    let m = counts.m;
    if prior.num_regimes() != m {
        return Err(Error::Dimension("prior and path regimes differ".into()));
    }
    let mut cols = Vec::with_capacity(m);
    for j in 0..m {
        let a: Vec<f64> = (0..m)
            .map(|i| prior.dirichlet[i][j] + counts.get(i, j) as f64)
            .collect();
        cols.push(rng.dirichlet(&a)?);
    }
    TransitionMatrix::from_columns(&cols)
}

/// Outcome of a scalar or block Metropolis step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParamUpdate {
    pub accepted: bool,
    /// The regime was empty and the draw came straight from the prior.
    pub from_prior: bool,
    /// The linearized proposal was unusable and the local proposal ran.
    pub local_proposal: bool,
    /// The truncated proposal needed the Gibbs fallback (approximate draw).
    pub approximate: bool,
}

/// Independence Metropolis (multiple-try with `trials > 1`) for `mu_k`.
///
/// The proposal is a truncated normal from a weighted regression of the
/// observations in regime `k` on a constant, with weights from the variance
/// path evaluated at the regime sample means.
pub fn update_mu(
    chain: &mut ChainState,
    y: &ObservationSeries,
    prior: &PriorSpec,
    k: usize,
    trials: usize,
) -> Result<ParamUpdate> {
    let m = chain.theta.num_regimes();
    if k >= m {
        return Err(Error::Dimension(format!("regime {k} of {m}")));
    }
    let trials = trials.max(1);
    let ys = y.values();
    let path = chain.path.as_slice();
    let support = prior.mu[k];
    let occupancy = chain.path.occupancy();
    if occupancy[k] == 0 {
        let u = chain.rng.uniform();
        chain.theta.regimes[k].mu = support.lo() + u * support.width();
        return Ok(ParamUpdate {
            accepted: true,
            from_prior: true,
            ..Default::default()
        });
    }

    let mut sums = vec![0.0; m];
    for (t, s) in path.iter().enumerate() {
        sums[*s] += ys[t];
    }
    let mut plug = chain.theta.regimes.clone();
    for j in 0..m {
        if occupancy[j] > 0 {
            plug[j].mu = sums[j] / occupancy[j] as f64;
        }
    }
    let mut var = vec![0.0; ys.len()];
    fill_variance_path(ys, path, &plug, chain.init.value(), &mut var)?;
    let mut prec = 0.0;
    let mut wy = 0.0;
    for (t, s) in path.iter().enumerate() {
        if *s == k {
            prec += 1.0 / var[t];
            wy += ys[t] / var[t];
        }
    }
    let s2 = 1.0 / prec;
    let centre = s2 * wy;
    let sd = s2.sqrt();
    let (lo, hi) = (support.lo(), support.hi());

    let mut regimes = chain.theta.regimes.clone();
    let init = chain.init.value();
    let mut log_target = |x: f64| -> Result<f64> {
        regimes[k].mu = x;
        loglik_along(ys, path, &regimes, init)
    };
    let log_prop = |x: f64| truncated_normal_logpdf(x, centre, sd, lo, hi);

    let current = chain.theta.regimes[k].mu;
    let current_w = if support.contains(current) {
        log_target(current)? - log_prop(current)
    } else {
        f64::NEG_INFINITY
    };
    let mut xs = Vec::with_capacity(trials);
    let mut ws = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = chain.rng.truncated_normal(centre, sd, lo, hi)?;
        ws.push(log_target(x)? - log_prop(x));
        xs.push(x);
    }
    let mut probs = Vec::with_capacity(trials);
    let u_sel = chain.rng.uniform();
    let sel = match normalize_log_weights(&ws, &mut probs) {
        Some(_) => inverse_cdf_index(&probs, u_sel),
        None => return Ok(ParamUpdate::default()),
    };
    let mut ref_w = Vec::with_capacity(trials);
    for _ in 1..trials {
        let x = chain.rng.truncated_normal(centre, sd, lo, hi)?;
        ref_w.push(log_target(x)? - log_prop(x));
    }
    ref_w.push(current_w);
    let log_ratio = log_sum_exp(&ws) - log_sum_exp(&ref_w);
    let accepted = chain.rng.uniform().ln() < log_ratio || log_ratio == f64::INFINITY;
    if accepted {
        chain.theta.regimes[k].mu = xs[sel];
    }
    Ok(ParamUpdate {
        accepted,
        ..Default::default()
    })
}

/// Ingredients of the linearized regression for one regime's GARCH block.
#[derive(Clone, Debug)]
pub struct Linearization {
    /// `w_t = eps_t^2 - sigma_t^2`.
    pub residual: Vec<f64>,
    /// `-d w_t / d(gamma_k, alpha_k, beta_k)`.
    pub gradient: Vec<[f64; 3]>,
    /// `w_t + theta_k . gradient_t`, the regression response.
    pub response: Vec<f64>,
    /// `2 sigma_t^4`, the response variance.
    pub variance: Vec<f64>,
}

/// Linearizes the squared-residual recursion around the current `(gamma_k, alpha_k, beta_k)`.
pub fn garch_linearization(
    y: &ObservationSeries,
    path: &StatePath,
    theta: &ModelParams,
    init: VarianceInit,
    k: usize,
) -> Result<Linearization> {
    if y.len() != path.len() || k >= theta.num_regimes() {
        return Err(Error::Dimension("linearization inputs".into()));
    }
    let ys = y.values();
    let s = path.as_slice();
    let r = &theta.regimes;
    let n = ys.len();
    let mut residual = Vec::with_capacity(n);
    let mut gradient = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let here = [r[k].gamma, r[k].alpha, r[k].beta];

    let mut var = init.value();
    let mut eps = ys[0] - r[s[0]].mu;
    let mut w = eps * eps - var;
    // Derivatives of w_t; zero at t = 1 because sigma_1^2 is fixed.
    let mut dw = [0.0; 3];
    let push = |w: f64, dw: &[f64; 3], var: f64,
                residual: &mut Vec<f64>,
                gradient: &mut Vec<[f64; 3]>,
                response: &mut Vec<f64>,
                variance: &mut Vec<f64>| {
        let g = [-dw[0], -dw[1], -dw[2]];
        residual.push(w);
        response.push(w + here[0] * g[0] + here[1] * g[1] + here[2] * g[2]);
        gradient.push(g);
        variance.push(2.0 * var * var);
    };
    push(w, &dw, var, &mut residual, &mut gradient, &mut response, &mut variance);
    for t in 1..n {
        let cur = &r[s[t]];
        let e2_prev = eps * eps;
        let w_prev = w;
        var = cur.next_variance(eps, var);
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::NonFinite {
                index: t + 1,
                what: "conditional variance",
            });
        }
        eps = ys[t] - cur.mu;
        w = eps * eps - var;
        let ind = if s[t] == k { 1.0 } else { 0.0 };
        let b = cur.beta;
        dw = [
            -ind + b * dw[0],
            -ind * e2_prev + b * dw[1],
            -ind * (e2_prev - w_prev) + b * dw[2],
        ];
        push(w, &dw, var, &mut residual, &mut gradient, &mut response, &mut variance);
    }
    Ok(Linearization {
        residual,
        gradient,
        response,
        variance,
    })
}

/// Tuning for the GARCH block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchOptions {
    /// Rejection attempts before falling back to Gibbs sweeps.
    pub max_rejection_tries: usize,
    /// Smallest box mass for which the linearized proposal is used.
    pub min_box_mass: f64,
    /// Gibbs sweeps for the (approximate) fallback draw.
    pub gibbs_sweeps: usize,
    /// Local proposal spread as a fraction of each support width.
    pub local_scale: f64,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self {
            max_rejection_tries: 20_000,
            min_box_mass: 1e-3,
            gibbs_sweeps: 10,
            local_scale: 0.1,
        }
    }
}

// The proposal used from a given state: the truncated regression normal when
// the regression is identified and puts enough mass on the box, otherwise a
// product of truncated normals centred at the state.
enum ProposalLaw {
    Linearized {
        mean: Vector3<f64>,
        cov: Matrix3<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::U3>,
        log_mass: f64,
    },
    Local {
        centre: [f64; 3],
        sd: [f64; 3],
    },
}

struct GarchBox {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl ProposalLaw {
    fn build(
        y: &ObservationSeries,
        path: &StatePath,
        theta: &ModelParams,
        init: VarianceInit,
        k: usize,
        bx: &GarchBox,
        opts: &GarchOptions,
    ) -> Result<Self> {
        let r = &theta.regimes[k];
        let local = ProposalLaw::Local {
            centre: [r.gamma, r.alpha, r.beta],
            sd: std::array::from_fn(|i| opts.local_scale * (bx.hi[i] - bx.lo[i])),
        };
        let lin = garch_linearization(y, path, theta, init, k)?;
        let mut info = Matrix3::zeros();
        let mut score = Vector3::zeros();
        for t in 0..lin.gradient.len() {
            let g = Vector3::from(lin.gradient[t]);
            let v = lin.variance[t];
            info += g * g.transpose() / v;
            score += g * (lin.response[t] / v);
        }
        let Some(info_chol) = info.cholesky() else {
            return Ok(local);
        };
        let diag_ratio = {
            let d = info_chol.l().diagonal();
            d.min() / d.max()
        };
        if !(diag_ratio > 1e-7) {
            return Ok(local);
        }
        let cov = info_chol.inverse();
        let cov = (cov + cov.transpose()) * 0.5;
        let mean = cov * score;
        let Some(chol) = cov.cholesky() else {
            return Ok(local);
        };
        if !mean.iter().all(|v| v.is_finite()) {
            return Ok(local);
        }
        let mass = box_probability3(&mean, &cov, &bx.lo, &bx.hi);
        if !(mass >= opts.min_box_mass) {
            return Ok(local);
        }
        Ok(ProposalLaw::Linearized {
            mean,
            cov,
            chol,
            log_mass: mass.ln(),
        })
    }

    fn sample(
        &self,
        current: [f64; 3],
        bx: &GarchBox,
        opts: &GarchOptions,
        rng: &mut RandomStream,
    ) -> Result<([f64; 3], bool)> {
        match self {
            ProposalLaw::Linearized {
                mean, cov, chol, ..
            } => {
                if let Some(x) = truncated_mvn3_rejection(
                    mean,
                    chol,
                    &bx.lo,
                    &bx.hi,
                    opts.max_rejection_tries,
                    rng,
                ) {
                    return Ok(([x[0], x[1], x[2]], false));
                }
                let cov_d = DMatrix::from_fn(3, 3, |i, j| cov[(i, j)]);
                let x = truncated_mvn_gibbs(
                    mean.as_slice(),
                    &cov_d,
                    &bx.lo,
                    &bx.hi,
                    opts.gibbs_sweeps,
                    Some(&current),
                    rng,
                )?;
                Ok(([x[0], x[1], x[2]], true))
            }
            ProposalLaw::Local { centre, sd } => {
                let mut x = [0.0; 3];
                for i in 0..3 {
                    x[i] = rng.truncated_normal(centre[i], sd[i], bx.lo[i], bx.hi[i])?;
                }
                Ok((x, false))
            }
        }
    }

    fn log_density(&self, x: [f64; 3], bx: &GarchBox) -> f64 {
        match self {
            ProposalLaw::Linearized {
                mean,
                chol,
                log_mass,
                ..
            } => mvn3_logpdf(&Vector3::from(x), mean, chol) - log_mass,
            ProposalLaw::Local { centre, sd } => (0..3)
                .map(|i| truncated_normal_logpdf(x[i], centre[i], sd[i], bx.lo[i], bx.hi[i]))
                .sum(),
        }
    }

    fn is_local(&self) -> bool {
        matches!(self, ProposalLaw::Local { .. })
    }
}

/// Metropolis-Hastings update of `(gamma_k, alpha_k, beta_k)`.
pub fn update_garch_block(
    chain: &mut ChainState,
    y: &ObservationSeries,
    prior: &PriorSpec,
    k: usize,
    opts: &GarchOptions,
) -> Result<ParamUpdate> {
    let m = chain.theta.num_regimes();
    if k >= m {
        return Err(Error::Dimension(format!("regime {k} of {m}")));
    }
    let (lo, hi) = prior.garch_box(k);
    let bx = GarchBox { lo, hi };
    if chain.path.occupancy()[k] == 0 {
        let r = &mut chain.theta.regimes[k];
        r.gamma = lo[0] + chain.rng.uniform() * (hi[0] - lo[0]);
        r.alpha = lo[1] + chain.rng.uniform() * (hi[1] - lo[1]);
        r.beta = lo[2] + chain.rng.uniform() * (hi[2] - lo[2]);
        return Ok(ParamUpdate {
            accepted: true,
            from_prior: true,
            ..Default::default()
        });
    }
    let r = chain.theta.regimes[k];
    let current = [r.gamma, r.alpha, r.beta];
    let forward = ProposalLaw::build(y, &chain.path, &chain.theta, chain.init, k, &bx, opts)?;
    let (prop, approximate) = forward.sample(current, &bx, opts, &mut chain.rng)?;

    let ys = y.values();
    let path = chain.path.as_slice();
    let ll_cur = loglik_along(ys, path, &chain.theta.regimes, chain.init.value())?;
    let mut proposed = chain.theta.clone();
    proposed.regimes[k].gamma = prop[0];
    proposed.regimes[k].alpha = prop[1];
    proposed.regimes[k].beta = prop[2];
    let ll_prop = loglik_along(ys, path, &proposed.regimes, chain.init.value())?;
    let reverse = ProposalLaw::build(y, &chain.path, &proposed, chain.init, k, &bx, opts)?;

    let inside = |x: [f64; 3]| (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i]);
    let log_ratio = if !inside(current) {
        f64::INFINITY
    } else {
        ll_prop - ll_cur + reverse.log_density(current, &bx) - forward.log_density(prop, &bx)
    };
    let u = chain.rng.uniform();
    let accepted = !log_ratio.is_nan() && (u.ln() < log_ratio || log_ratio == f64::INFINITY);
    if accepted {
        chain.theta = proposed;
    }
    Ok(ParamUpdate {
        accepted,
        from_prior: false,
        local_proposal: forward.is_local(),
        approximate,
    })
}
