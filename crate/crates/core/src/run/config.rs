use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auxiliary::AuxKind;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::params::{GarchOptions, PriorSpec};
use crate::samplers::{MctmWeights, SamplerKind, StateSampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Simulate,
    Fit,
    Diagnose,
    Compare,
}

/// One path sampler as configured for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Column label in comparison tables; defaults to a name built from the settings.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_kind")]
    pub kind: SamplerKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_aux")]
    pub aux: AuxKind,
    #[serde(default)]
    pub mctm_weights: Option<MctmWeights>,
    /// Trials for the regime-mean update.
    #[serde(default = "one")]
    pub mu_trials: usize,
}

fn default_kind() -> SamplerKind {
    SamplerKind::Mtm
}
fn default_trials() -> usize {
    2
}
fn default_aux() -> AuxKind {
    AuxKind::Klaassen
}
fn one() -> usize {
    1
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            label: None,
            kind: default_kind(),
            trials: default_trials(),
            aux: default_aux(),
            mctm_weights: None,
            mu_trials: 1,
        }
    }
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, trials: usize, aux: AuxKind) -> Self {
        Self {
            kind,
            trials,
            aux,
            ..Self::default()
        }
    }

    pub fn state_sampler(&self) -> StateSampler {
        StateSampler {
            kind: self.kind,
            trials: self.trials,
            aux: self.aux,
            mctm_weights: self.mctm_weights,
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.kind {
            SamplerKind::SingleMove => "single-move".to_string(),
            k => format!("{}-k{}-{}", k, self.trials, self.aux),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.state_sampler().validate()?;
        if self.mu_trials == 0 {
            return Err(Error::Config("mu_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a CLI invocation needs; read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    /// Discarded sweeps; defaults to a fifth of `sweeps`, at most 2000.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Observations to simulate when no data file is given.
    #[serde(default = "default_length")]
    pub length: usize,
    /// Data-generating parameters: used to simulate and as reference values.
    #[serde(default)]
    pub model: Option<ModelParams>,
    /// Starting parameters; defaults to [`PriorSpec::default_start`].
    #[serde(default)]
    pub initial: Option<ModelParams>,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Samplers for `compare`.
    #[serde(default)]
    pub compare: Vec<SamplerConfig>,
    /// Label of the relative-inefficiency baseline in `compare`.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub garch: GarchOptions,
    /// Returns CSV (header `y`).
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// True regime path CSV (header `regime`), for classification.
    #[serde(default)]
    pub states: Option<PathBuf>,
    /// Directory holding `trace_*.csv` for `diagnose`.
    #[serde(default)]
    pub traces: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Overrides the sample-variance start of the variance recursion.
    #[serde(default)]
    pub initial_variance: Option<f64>,
    #[serde(default = "default_if_lags")]
    pub if_lags: usize,
    #[serde(default = "default_kde_points")]
    pub kde_points: usize,
    /// Run chains on the thread pool (ignored without the `parallel` feature).
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn default_sweeps() -> usize {
    10_000
}
fn default_length() -> usize {
    1500
}
fn default_if_lags() -> usize {
    crate::diagnostics::DEFAULT_IF_LAGS
}
fn default_kde_points() -> usize {
    256
}
fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(mode: RunMode) -> Self {
        serde_json::from_value(serde_json::json!({ "mode": mode }))
            .expect("defaults deserialize")
    }

    /// Parses a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in [&mut cfg.data, &mut cfg.states, &mut cfg.traces, &mut cfg.output]
            .into_iter()
            .flatten()
        {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
        Ok(cfg)
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or((self.sweeps / 5).min(2000))
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior.clone().unwrap_or_else(PriorSpec::reference)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        let prior = self.prior();
        prior.validate()?;
        let m = prior.num_regimes();
        for p in [&self.model, &self.initial].into_iter().flatten() {
            p.validate()?;
            if p.num_regimes() != m {
                return Err(Error::Config(format!(
                    "parameters have {} regimes, prior has {m}",
                    p.num_regimes()
                )));
            }
        }
        if let Some(v) = self.initial_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config("initial_variance must be positive".into()));
            }
        }
        match self.mode {
            RunMode::Simulate => {
                if self.model.is_none() {
                    return Err(Error::Config("simulate needs `model`".into()));
                }
                if self.length == 0 {
                    return Err(Error::Config("length must be positive".into()));
                }
            }
            RunMode::Fit | RunMode::Compare => {
                if self.sweeps <= self.burn_in() {
                    return Err(Error::Config(format!(
                        "sweeps ({}) must exceed burn_in ({})",
                        self.sweeps,
                        self.burn_in()
                    )));
                }
                if self.sweeps - self.burn_in() < 2 {
                    return Err(Error::Config("need at least two retained sweeps".into()));
                }
                if self.data.is_none() && self.model.is_none() {
                    return Err(Error::Config("need `data` or a `model` to simulate from".into()));
                }
                if self.mode == RunMode::Fit {
                    self.sampler.validate()?;
                } else {
                    if self.compare.is_empty() {
                        return Err(Error::Config("compare needs a non-empty `compare` list".into()));
                    }
                    for s in &self.compare {
                        s.validate()?;
                    }
                    let mut labels: Vec<String> = self.compare.iter().map(|s| s.label()).collect();
                    labels.sort();
                    labels.dedup();
                    if labels.len() != self.compare.len() {
                        return Err(Error::Config("compare labels must be distinct".into()));
                    }
                    if let Some(b) = &self.baseline {
                        if !self.compare.iter().any(|s| &s.label() == b) {
                            return Err(Error::Config(format!("baseline {b:?} is not in `compare`")));
                        }
                    }
                }
            }
            RunMode::Diagnose => {
                if self.traces.is_none() {
                    return Err(Error::Config("diagnose needs `traces`".into()));
                }
            }
        }
        Ok(())
    }
}
