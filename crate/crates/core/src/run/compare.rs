use serde::Serialize;

use super::config::{RunConfig, RunMode, SamplerConfig};
use super::output::{classification, load_data, pooled_regime_probs, summarize, variance_init, QuantitySummary};
use super::{monitored_names, parameter_vector, run_chains, GibbsOptions};
use crate::diagnostics::{mse, relative_inefficiency};
use crate::error::{Error, Result};
use crate::io::write_records;
use crate::model::{ModelParams, ObservationSeries, StatePath, VarianceInit};
use crate::params::PriorSpec;
use crate::samplers::SamplerKind;

#[derive(Clone, Debug, Serialize)]
pub struct SamplerResult {
    pub label: String,
    pub quantities: Vec<QuantitySummary>,
    /// Mean wall-clock seconds per chain.
    pub seconds: f64,
    pub state_acceptance: f64,
    /// Mean squared error of the parameter posterior means against `truth`.
    pub mse: Option<f64>,
    pub classification: Option<f64>,
    /// Relative inefficiency of the baseline against this sampler, per
    /// quantity; above 1 means this sampler is more efficient.
    pub relative_inefficiency: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub quantities: Vec<String>,
    pub truth: Option<Vec<f64>>,
    pub baseline: String,
    pub samplers: Vec<SamplerResult>,
}

/// Shared inputs of a sampler comparison.
pub struct CompareInputs<'a> {
    pub y: &'a ObservationSeries,
    pub states: Option<&'a StatePath>,
    pub prior: &'a PriorSpec,
    pub initial: &'a ModelParams,
    pub init: VarianceInit,
    pub truth: Option<&'a ModelParams>,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
    pub parallel: bool,
    pub if_lags: usize,
    pub garch: crate::params::GarchOptions,
}

/// Runs each sampler in turn (samplers never share the thread pool, so
/// timings are comparable) and tabulates efficiency against the baseline.
pub fn compare_samplers(
    inputs: &CompareInputs,
    samplers: &[SamplerConfig],
    baseline: Option<&str>,
) -> Result<CompareReport> {
    if samplers.is_empty() {
        return Err(Error::Config("no samplers to compare".into()));
    }
    let m = inputs.prior.num_regimes();
    let names = monitored_names(m);
    let truth = inputs.truth.map(parameter_vector);
    let mut results = Vec::with_capacity(samplers.len());
    for (i, sc) in samplers.iter().enumerate() {
        sc.validate()?;
        let mut opts = GibbsOptions::new(sc.state_sampler(), inputs.sweeps, inputs.burn_in);
        opts.mu_trials = sc.mu_trials;
        opts.garch = inputs.garch;
        let traces = run_chains(
            inputs.y,
            inputs.prior,
            inputs.initial,
            inputs.init,
            &opts,
            inputs.seed,
            (i as u64) << 32,
            inputs.chains,
            inputs.parallel,
        )?;
        let draws: Vec<Vec<Vec<f64>>> = traces.iter().map(|t| t.draws.clone()).collect();
        let quantities = summarize(&names, &draws, inputs.if_lags)?;
        let means: Vec<f64> = quantities[1..].iter().map(|q| q.mean).collect();
        let probs = pooled_regime_probs(&traces);
        results.push(SamplerResult {
            label: sc.label(),
            quantities,
            seconds: traces.iter().map(|t| t.seconds).sum::<f64>() / traces.len() as f64,
            state_acceptance: traces.iter().map(|t| t.acceptance.state_rate()).sum::<f64>()
                / traces.len() as f64,
            mse: truth.as_ref().map(|t| mse(&means, t)).transpose()?,
            classification: classification(&probs, inputs.states)?,
            relative_inefficiency: Vec::new(),
        });
    }
    let base_idx = match baseline {
        Some(b) => results
            .iter()
            .position(|r| r.label == b)
            .ok_or_else(|| Error::Config(format!("baseline {b:?} not among samplers")))?,
        None => samplers
            .iter()
            .position(|s| s.kind == SamplerKind::SingleMove)
            .unwrap_or(0),
    };
    let base_time = results[base_idx].seconds;
    let base_if: Vec<f64> = results[base_idx]
        .quantities
        .iter()
        .map(|q| q.inefficiency)
        .collect();
    for r in results.iter_mut() {
        r.relative_inefficiency = r
            .quantities
            .iter()
            .zip(&base_if)
            .map(|(q, b)| relative_inefficiency(base_time, r.seconds, *b, q.inefficiency))
            .collect();
    }
    Ok(CompareReport {
        quantities: names,
        truth,
        baseline: results[base_idx].label.clone(),
        samplers: results,
    })
}

fn support(prior: &PriorSpec, name: &str) -> Option<(f64, f64)> {
    let (param, idx) = name.split_at(name.find(|c: char| c.is_ascii_digit())?);
    if param == "pi" {
        return Some((0.0, 1.0));
    }
    let k: usize = idx.parse::<usize>().ok()?.checked_sub(1)?;
    let iv = match param {
        "mu" => prior.mu.get(k)?,
        "gamma" => prior.gamma.get(k)?,
        "alpha" => prior.alpha.get(k)?,
        "beta" => prior.beta.get(k)?,
        _ => return None,
    };
    Some((iv.lo(), iv.hi()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// `compare`: runs every configured sampler on the same data and writes the
/// comparison tables.
pub fn run_compare(cfg: &RunConfig) -> Result<CompareReport> {
    if cfg.mode != RunMode::Compare {
        return Err(Error::Config(format!("config mode is {:?}, not compare", cfg.mode)));
    }
    cfg.validate()?;
    let (y, states) = load_data(cfg)?;
    let prior = cfg.prior();
    let initial = match &cfg.initial {
        Some(p) => p.clone(),
        None => prior.default_start()?,
    };
    let inputs = CompareInputs {
        y: &y,
        states: states.as_ref(),
        prior: &prior,
        initial: &initial,
        init: variance_init(cfg, &y)?,
        truth: cfg.model.as_ref(),
        sweeps: cfg.sweeps,
        burn_in: cfg.burn_in(),
        seed: cfg.seed,
        chains: cfg.chains,
        parallel: cfg.parallel,
        if_lags: cfg.if_lags,
        garch: cfg.garch,
    };
    let report = compare_samplers(&inputs, &cfg.compare, cfg.baseline.as_deref())?;

    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let labels: Vec<&str> = report.samplers.iter().map(|s| s.label.as_str()).collect();

    let mut header = vec!["quantity".to_string(), "truth".into(), "support_lo".into(), "support_hi".into()];
    for l in &labels {
        header.push(format!("{l}_mean"));
        header.push(format!("{l}_sd"));
    }
    let mut rows = Vec::new();
    for (j, q) in report.quantities.iter().enumerate() {
        let truth = if j == 0 {
            None
        } else {
            report.truth.as_ref().map(|t| t[j - 1])
        };
        let sup = support(&prior, q);
        let mut row = vec![
            q.clone(),
            fmt_opt(truth),
            fmt_opt(sup.map(|s| s.0)),
            fmt_opt(sup.map(|s| s.1)),
        ];
        for s in &report.samplers {
            row.push(format!("{:?}", s.quantities[j].mean));
            row.push(format!("{:?}", s.quantities[j].sd));
        }
        rows.push(row);
    }
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_records(&dir.join("compare_summary.csv"), &header_ref, &rows)?;

    let per_quantity = |pick: &dyn Fn(&SamplerResult, usize) -> f64| -> Vec<Vec<String>> {
        report
            .quantities
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let mut row = vec![q.clone()];
                row.extend(report.samplers.iter().map(|s| format!("{:?}", pick(s, j))));
                row
            })
            .collect()
    };
    let mut qheader = vec!["quantity"];
    qheader.extend(labels.iter().copied());
    write_records(
        &dir.join("compare_if.csv"),
        &qheader,
        &per_quantity(&|s, j| s.quantities[j].inefficiency),
    )?;
    write_records(
        &dir.join("compare_ri.csv"),
        &qheader,
        &per_quantity(&|s, j| s.relative_inefficiency[j]),
    )?;
    let mse_rows: Vec<Vec<String>> = report
        .samplers
        .iter()
        .map(|s| vec![s.label.clone(), fmt_opt(s.mse), format!("{:?}", s.seconds)])
        .collect();
    write_records(&dir.join("compare_mse.csv"), &["sampler", "mse", "seconds"], &mse_rows)?;
    let class_rows: Vec<Vec<String>> = report
        .samplers
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                fmt_opt(s.classification),
                format!("{:?}", s.state_acceptance),
            ]
        })
        .collect();
    write_records(
        &dir.join("compare_classification.csv"),
        &["sampler", "classification", "state_acceptance"],
        &class_rows,
    )?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let p = dir.join("compare.json");
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("config_echo.json");
    std::fs::write(&p, serde_json::to_string_pretty(cfg)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(report)
}
