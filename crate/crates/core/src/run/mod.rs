//! Full Gibbs runs, multi-chain execution and the file-producing modes.

mod compare;
mod config;
mod output;

pub use compare::{compare_samplers, run_compare, CompareInputs, CompareReport, SamplerResult};
pub use config::{RunConfig, RunMode, SamplerConfig};
pub use output::{diagnose_dir, fit, simulate, summarize, QuantitySummary};

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ffbs::{forward_filter, sample_path};
use crate::model::{fill_variance_path, ModelParams, ObservationSeries, VarianceInit};
use crate::params::{
    count_transitions, sample_transition, update_garch_block, update_mu, GarchOptions, PriorSpec,
};
use crate::samplers::{ChainState, SamplerKind, StateSampler};
use crate::stochastics::RandomStream;
use crate::AuxKind;

/// Names of the recorded quantities for `m` regimes: the largest
/// conditional variance, the staying probabilities, then the means, `gamma`,
/// `alpha` and `beta` of each regime.
pub fn monitored_names(m: usize) -> Vec<String> {
    let mut names = vec!["max_sigma2".to_string()];
    names.extend((1..=m).map(|k| format!("pi{k}{k}")));
    for p in ["mu", "gamma", "alpha", "beta"] {
        names.extend((1..=m).map(|k| format!("{p}{k}")));
    }
    names
}

/// Parameter values in [`monitored_names`] order, without `max_sigma2`.
pub fn parameter_vector(theta: &ModelParams) -> Vec<f64> {
    let m = theta.num_regimes();
    let mut v: Vec<f64> = (0..m).map(|k| theta.transition.prob(k, k)).collect();
    v.extend(theta.regimes.iter().map(|r| r.mu));
    v.extend(theta.regimes.iter().map(|r| r.gamma));
    v.extend(theta.regimes.iter().map(|r| r.alpha));
    v.extend(theta.regimes.iter().map(|r| r.beta));
    v
}

/// Settings of one Gibbs run.
#[derive(Clone, Debug)]
pub struct GibbsOptions {
    pub sweeps: usize,
    pub burn_in: usize,
    pub sampler: StateSampler,
    pub mu_trials: usize,
    pub garch: GarchOptions,
}

impl GibbsOptions {
    pub fn new(sampler: StateSampler, sweeps: usize, burn_in: usize) -> Self {
        Self {
            sweeps,
            burn_in,
            sampler,
            mu_trials: 1,
            garch: GarchOptions::default(),
        }
    }
}

/// Acceptance counts of one chain over the retained and burn-in sweeps.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Acceptance {
    pub sweeps: usize,
    pub state_accepted: usize,
    pub mu_accepted: Vec<usize>,
    pub garch_accepted: Vec<usize>,
    /// GARCH updates that used the local proposal.
    pub garch_local: usize,
    /// GARCH proposals drawn by the approximate Gibbs fallback.
    pub garch_approximate: usize,
    /// Parameter draws taken from the prior because a regime was empty.
    pub prior_draws: usize,
}

impl Acceptance {
    pub fn state_rate(&self) -> f64 {
        self.state_accepted as f64 / self.sweeps.max(1) as f64
    }
}

/// Draws and bookkeeping of one chain.
#[derive(Clone, Debug, Serialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub names: Vec<String>,
    /// One row per retained sweep, columns as in `names`.
    pub draws: Vec<Vec<f64>>,
    /// Posterior mean regime probabilities per period (`T x M`).
    pub regime_probs: Vec<Vec<f64>>,
    pub acceptance: Acceptance,
    #[serde(skip)]
    pub seconds: f64,
    pub final_params: ModelParams,
}

impl ChainTrace {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).collect()
    }
}

/// Runs one chain from `initial`.
pub fn gibbs_run(
    y: &ObservationSeries,
    prior: &PriorSpec,
    initial: &ModelParams,
    init: VarianceInit,
    opts: &GibbsOptions,
    rng: RandomStream,
    chain_id: usize,
) -> Result<ChainTrace> {
    prior.validate()?;
    opts.sampler.validate()?;
    let m = initial.num_regimes();
    if prior.num_regimes() != m {
        return Err(Error::Config("prior and initial parameters differ in regimes".into()));
    }
    if opts.burn_in >= opts.sweeps {
        return Err(Error::Config("burn-in must be shorter than the run".into()));
    }
    let start = Instant::now();
    let init_aux = match opts.sampler.kind {
        SamplerKind::SingleMove => AuxKind::Klaassen,
        _ => opts.sampler.aux,
    };
    let mut rng = rng;
    let fo = forward_filter(y, initial, init_aux, init)?;
    let path = sample_path(&fo, &initial.transition, &mut rng)?.path;
    let mut chain = ChainState {
        theta: initial.clone(),
        path,
        init,
        rng,
    };

    let t_len = y.len();
    let names = monitored_names(m);
    let mut draws = Vec::with_capacity(opts.sweeps - opts.burn_in);
    let mut occupancy = vec![0u64; t_len * m];
    let mut acc = Acceptance {
        mu_accepted: vec![0; m],
        garch_accepted: vec![0; m],
        ..Default::default()
    };
    let mut var = vec![0.0; t_len];
    for sweep in 0..opts.sweeps {
        let rep = opts
            .sampler
            .update(&mut chain, y)
            .map_err(|e| e.in_block(sweep, "regime path"))?;
        acc.state_accepted += usize::from(rep.accepted);

        let counts = count_transitions(&chain.path);
        chain.theta.transition = sample_transition(&counts, prior, &mut chain.rng)
            .map_err(|e| e.in_block(sweep, "transition"))?;

        for k in 0..m {
            let u = update_mu(&mut chain, y, prior, k, opts.mu_trials)
                .map_err(|e| e.in_block(sweep, format!("mu{}", k + 1)))?;
            acc.mu_accepted[k] += usize::from(u.accepted);
            acc.prior_draws += usize::from(u.from_prior);
        }
        for k in 0..m {
            let u = update_garch_block(&mut chain, y, prior, k, &opts.garch)
                .map_err(|e| e.in_block(sweep, format!("garch{}", k + 1)))?;
            acc.garch_accepted[k] += usize::from(u.accepted);
            acc.garch_local += usize::from(u.local_proposal);
            acc.garch_approximate += usize::from(u.approximate);
            acc.prior_draws += usize::from(u.from_prior);
        }
        acc.sweeps += 1;

        if sweep >= opts.burn_in {
            fill_variance_path(
                y.values(),
                chain.path.as_slice(),
                &chain.theta.regimes,
                init.value(),
                &mut var,
            )
            .map_err(|e| e.in_block(sweep, "variance path"))?;
            let max_var = var.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut row = Vec::with_capacity(names.len());
            row.push(max_var);
            row.extend(parameter_vector(&chain.theta));
            draws.push(row);
            for (t, s) in chain.path.as_slice().iter().enumerate() {
                occupancy[t * m + s] += 1;
            }
        }
    }
    let kept = (opts.sweeps - opts.burn_in) as f64;
    let regime_probs = occupancy
        .chunks(m)
        .map(|c| c.iter().map(|n| *n as f64 / kept).collect())
        .collect();
    Ok(ChainTrace {
        chain: chain_id,
        names,
        draws,
        regime_probs,
        acceptance: acc,
        seconds: start.elapsed().as_secs_f64(),
        final_params: chain.theta,
    })
}

/// Runs `chains` independent chains; chain `c` uses stream `stream_base + c`.
#[allow(clippy::too_many_arguments)]
pub fn run_chains(
    y: &ObservationSeries,
    prior: &PriorSpec,
    initial: &ModelParams,
    init: VarianceInit,
    opts: &GibbsOptions,
    seed: u64,
    stream_base: u64,
    chains: usize,
    parallel: bool,
) -> Result<Vec<ChainTrace>> {
    crate::par::map_indexed(chains, parallel, |c| {
        let rng = RandomStream::new(seed, stream_base + c as u64);
        gibbs_run(y, prior, initial, init, opts, rng, c)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_quantities_for_two_regimes() {
        let n = monitored_names(2);
        assert_eq!(
            n,
            vec![
                "max_sigma2", "pi11", "pi22", "mu1", "mu2", "gamma1", "gamma2", "alpha1",
                "alpha2", "beta1", "beta2"
            ]
        );
        assert_eq!(parameter_vector(&ModelParams::reference_dgp()).len(), 10);
    }

    #[test]
    fn short_run_is_reproducible() {
        let theta = ModelParams::reference_dgp();
        let sim = crate::model::simulate_dgp(&theta, 150, 1).unwrap();
        let init = VarianceInit::from_sample_variance(&sim.y).unwrap();
        let prior = PriorSpec::reference();
        let start = prior.default_start().unwrap();
        let opts = GibbsOptions::new(
            StateSampler::new(SamplerKind::Mtm, 2, AuxKind::Klaassen),
            40,
            10,
        );
        let a = run_chains(&sim.y, &prior, &start, init, &opts, 9, 0, 2, true).unwrap();
        let b = run_chains(&sim.y, &prior, &start, init, &opts, 9, 0, 2, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.draws, y.draws);
        }
        assert_eq!(a[0].draws.len(), 30);
    }
}
