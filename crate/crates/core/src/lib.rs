//! Bayesian estimation of Markov-switching GARCH models.
//!
//! The regime path is updated as a block with forward-filtering
//! backward-sampling proposals built from an auxiliary collapsed model,
//! combined with multiple-try Metropolis (independent, importance-weighted
//! or antithetic) or, for reference, the single-move Gibbs sampler.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod diagnostics;
pub mod error;
pub mod ffbs;
pub mod io;
pub mod model;
pub mod mvn;
pub mod numeric;
pub mod par;
pub mod params;
pub mod run;
pub mod samplers;
pub mod stochastics;

pub use auxiliary::{AuxKind, AuxState};
pub use error::{Error, Result};
pub use ffbs::{FilterOutput, SampledPath};
pub use model::{
    ModelParams, ObservationSeries, RegimeParams, StatePath, TransitionMatrix, VarianceInit,
};
pub use params::{Interval, PriorSpec};
pub use run::{ChainTrace, RunConfig, RunMode};
pub use samplers::{ChainState, MctmWeights, SamplerKind, StateSampler, StateUpdateReport};
pub use stochastics::RandomStream;
