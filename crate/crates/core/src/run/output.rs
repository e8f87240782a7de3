use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{RunConfig, RunMode};
use super::{monitored_names, run_chains, ChainTrace, GibbsOptions};
use crate::diagnostics::{acf, classify_regimes, inefficiency_factor, kde, summary_stats};
use crate::error::{Error, Result};
use crate::io::{read_path, read_series, read_table, write_path, write_records, write_series, write_table};
use crate::model::{simulate_with, ObservationSeries, SimulationOptions, StatePath, VarianceInit};
use crate::stochastics::RandomStream;

/// Stream id reserved for simulating data inside `fit` and `compare`.
const DATA_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantitySummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Inefficiency factor averaged over chains.
    pub inefficiency: f64,
}

/// Pooled means and standard deviations with per-chain inefficiency factors.
pub fn summarize(
    names: &[String],
    chains: &[Vec<Vec<f64>>],
    if_lags: usize,
) -> Result<Vec<QuantitySummary>> {
    if chains.is_empty() {
        return Err(Error::Dimension("no chains to summarize".into()));
    }
    let mut out = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let mut pooled = Vec::new();
        let mut ifs = 0.0;
        for draws in chains {
            let col: Vec<f64> = draws.iter().map(|r| r[j]).collect();
            ifs += inefficiency_factor(&col, if_lags.min(col.len().saturating_sub(1)))?;
            pooled.extend(col);
        }
        let s = summary_stats(&pooled)?;
        out.push(QuantitySummary {
            name: name.clone(),
            mean: s.mean,
            sd: s.sd,
            inefficiency: ifs / chains.len() as f64,
        });
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Data for `fit`/`compare`: the configured file, or a simulation from `model`.
pub(super) fn load_data(cfg: &RunConfig) -> Result<(ObservationSeries, Option<StatePath>)> {
    let m = cfg.prior().num_regimes();
    if let Some(p) = &cfg.data {
        let y = read_series(p)?;
        let states = match &cfg.states {
            Some(s) => {
                let path = read_path(s, m)?;
                if path.len() != y.len() {
                    return Err(Error::Config(format!(
                        "states file has {} rows, data has {}",
                        path.len(),
                        y.len()
                    )));
                }
                Some(path)
            }
            None => None,
        };
        return Ok((y, states));
    }
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("need `data` or a `model` to simulate from".into()))?;
    let mut rng = RandomStream::new(cfg.seed, DATA_STREAM);
    let sim = simulate_with(model, cfg.length, &SimulationOptions::default(), &mut rng)?;
    Ok((sim.y, Some(sim.path)))
}

pub(super) fn variance_init(cfg: &RunConfig, y: &ObservationSeries) -> Result<VarianceInit> {
    match cfg.initial_variance {
        Some(v) => VarianceInit::new(v),
        None => VarianceInit::from_sample_variance(y),
    }
}

/// `simulate`: writes `data.csv`, `states.csv` and `config_echo.json`.
pub fn simulate(cfg: &RunConfig) -> Result<PathBuf> {
    check_mode(cfg, RunMode::Simulate)?;
    cfg.validate()?;
    let model = cfg.model.as_ref().expect("validated");
    let mut rng = RandomStream::new(cfg.seed, 0);
    let sim = simulate_with(model, cfg.length, &SimulationOptions::default(), &mut rng)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_series(&dir.join("data.csv"), &sim.y)?;
    write_path(&dir.join("states.csv"), &sim.path)?;
    write_table(
        &dir.join("variances.csv"),
        &["sigma2".to_string()],
        &sim.variances.iter().map(|v| vec![*v]).collect::<Vec<_>>(),
    )?;
    write_json(&dir.join("config_echo.json"), cfg)?;
    Ok(dir)
}

fn check_mode(cfg: &RunConfig, want: RunMode) -> Result<()> {
    if cfg.mode != want {
        return Err(Error::Config(format!(
            "config mode is {:?} but {:?} was requested",
            cfg.mode, want
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ChainDiagnostics<'a> {
    chain: usize,
    state_acceptance: f64,
    acceptance: &'a super::Acceptance,
}

#[derive(Debug, Serialize)]
struct FitDiagnostics<'a> {
    sampler: String,
    chains: usize,
    sweeps: usize,
    burn_in: usize,
    observations: usize,
    quantities: &'a [QuantitySummary],
    per_chain: Vec<ChainDiagnostics<'a>>,
    state_acceptance: f64,
    classification: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Provenance {
    version: &'static str,
    parallel: bool,
    worker_threads: usize,
    chain_seconds: Vec<f64>,
}

pub(super) fn pooled_regime_probs(traces: &[ChainTrace]) -> Vec<Vec<f64>> {
    let n = traces.len() as f64;
    let mut out = traces[0].regime_probs.clone();
    for tr in &traces[1..] {
        for (row, r) in out.iter_mut().zip(&tr.regime_probs) {
            for (a, b) in row.iter_mut().zip(r) {
                *a += b;
            }
        }
    }
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    out
}

pub(super) fn classification(probs: &[Vec<f64>], truth: Option<&StatePath>) -> Result<Option<f64>> {
    match truth {
        Some(t) if t.num_regimes() == 2 => {
            let p2: Vec<f64> = probs.iter().map(|r| r[1]).collect();
            Ok(Some(classify_regimes(&p2, t.as_slice())?))
        }
        _ => Ok(None),
    }
}

fn write_grids(dir: &Path, names: &[String], chains: &[Vec<Vec<f64>>], cfg: &RunConfig) -> Result<()> {
    let grids = dir.join("grids");
    create_dir(&grids)?;
    for (j, name) in names.iter().enumerate() {
        let pooled: Vec<f64> = chains.iter().flat_map(|d| d.iter().map(|r| r[j])).collect();
        let first: Vec<f64> = chains[0].iter().map(|r| r[j]).collect();
        let density = kde(&pooled, cfg.kde_points.max(2))?;
        write_table(
            &grids.join(format!("kde_{name}.csv")),
            &["x".to_string(), "density".to_string()],
            &density.iter().map(|(x, d)| vec![*x, *d]).collect::<Vec<_>>(),
        )?;
        let rho = acf(&first, cfg.if_lags);
        write_table(
            &grids.join(format!("acf_{name}.csv")),
            &["lag".to_string(), "acf".to_string()],
            &rho.iter().enumerate().map(|(l, r)| vec![l as f64, *r]).collect::<Vec<_>>(),
        )?;
    }
    Ok(())
}

/// `fit`: runs the configured sampler and writes traces, summaries and diagnostics.
pub fn fit(cfg: &RunConfig) -> Result<Vec<ChainTrace>> {
    check_mode(cfg, RunMode::Fit)?;
    cfg.validate()?;
    let (y, truth) = load_data(cfg)?;
    let prior = cfg.prior();
    let initial = match &cfg.initial {
        Some(p) => p.clone(),
        None => prior.default_start()?,
    };
    let init = variance_init(cfg, &y)?;
    let mut opts = GibbsOptions::new(cfg.sampler.state_sampler(), cfg.sweeps, cfg.burn_in());
    opts.mu_trials = cfg.sampler.mu_trials;
    opts.garch = cfg.garch;
    let traces = run_chains(&y, &prior, &initial, init, &opts, cfg.seed, 0, cfg.chains, cfg.parallel)?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let names = monitored_names(prior.num_regimes());
    for tr in &traces {
        write_table(&dir.join(format!("trace_{}.csv", tr.chain)), &names, &tr.draws)?;
    }
    let draws: Vec<Vec<Vec<f64>>> = traces.iter().map(|t| t.draws.clone()).collect();
    let summary = summarize(&names, &draws, cfg.if_lags)?;
    write_summary(&dir.join("summary.csv"), &summary)?;
    let probs = pooled_regime_probs(&traces);
    let prob_header: Vec<String> = (1..=prior.num_regimes()).map(|k| format!("p{k}")).collect();
    write_table(&dir.join("regime_probs.csv"), &prob_header, &probs)?;
    let state_acceptance =
        traces.iter().map(|t| t.acceptance.state_rate()).sum::<f64>() / traces.len() as f64;
    let diag = FitDiagnostics {
        sampler: cfg.sampler.label(),
        chains: traces.len(),
        sweeps: cfg.sweeps,
        burn_in: cfg.burn_in(),
        observations: y.len(),
        quantities: &summary,
        per_chain: traces
            .iter()
            .map(|t| ChainDiagnostics {
                chain: t.chain,
                state_acceptance: t.acceptance.state_rate(),
                acceptance: &t.acceptance,
            })
            .collect(),
        state_acceptance,
        classification: classification(&probs, truth.as_ref())?,
    };
    write_json(&dir.join("diagnostics.json"), &diag)?;
    write_grids(&dir, &names, &draws, cfg)?;
    write_json(&dir.join("config_echo.json"), cfg)?;
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            version: env!("CARGO_PKG_VERSION"),
            parallel: cfg.parallel && crate::par::parallel_available(),
            worker_threads: crate::par::worker_threads(),
            chain_seconds: traces.iter().map(|t| t.seconds).collect(),
        },
    )?;
    Ok(traces)
}

fn write_summary(path: &Path, summary: &[QuantitySummary]) -> Result<()> {
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|q| {
            vec![
                q.name.clone(),
                format!("{:?}", q.mean),
                format!("{:?}", q.sd),
                format!("{:?}", q.inefficiency),
            ]
        })
        .collect();
    write_records(path, &["quantity", "mean", "sd", "inefficiency"], &rows)
}

/// `diagnose`: summaries and grids from `trace_*.csv` files in `cfg.traces`.
pub fn diagnose_dir(cfg: &RunConfig) -> Result<Vec<QuantitySummary>> {
    check_mode(cfg, RunMode::Diagnose)?;
    cfg.validate()?;
    let src = cfg.traces.as_ref().expect("validated");
    let entries = std::fs::read_dir(src).map_err(|e| Error::io(src, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(src, err))?;
        let name = e.file_name().to_string_lossy().to_string();
        if let Some(idx) = name
            .strip_prefix("trace_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            files.push((idx, e.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::Config(format!("no trace_*.csv files in {}", src.display())));
    }
    files.sort();
    let mut names: Option<Vec<String>> = None;
    let mut chains = Vec::new();
    for (_, p) in &files {
        let (header, rows) = read_table(p)?;
        if rows.len() < 2 {
            return Err(Error::Config(format!("{} has fewer than two draws", p.display())));
        }
        match &names {
            Some(n) if *n != header => {
                return Err(Error::Config(format!("{} has different columns", p.display())))
            }
            _ => names = Some(header),
        }
        chains.push(rows);
    }
    let names = names.expect("at least one file");
    let summary = summarize(&names, &chains, cfg.if_lags)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    write_summary(&dir.join("summary.csv"), &summary)?;
    write_json(
        &dir.join("diagnostics.json"),
        &serde_json::json!({ "chains": chains.len(), "quantities": summary }),
    )?;
    write_grids(&dir, &names, &chains, cfg)?;
    write_json(&dir.join("config_echo.json"), cfg)?;
    Ok(summary)
}
