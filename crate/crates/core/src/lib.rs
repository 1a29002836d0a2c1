//! Causal discovery with LiNGAM and approximately unbiased p-values for
//! signed causal hypotheses via the multiscale bootstrap.
//!
//! The pipeline is:
//!
//! 1. [`lingam::lingam_fit`] estimates a causal order and a connection matrix
//!    from a [`DataMatrix`].
//! 2. [`msboot::count_events`] resamples the data at several bootstrap scales
//!    and counts how often each signed hypothesis `x_j -> x_i` holds.
//! 3. [`psifit::analyze_table`] fits scaling laws to the counts and
//!    extrapolates them into multiscale-bootstrap p-values.
//!
//! [`simulate`] reproduces calibration studies on synthetic data and [`cli`]
//! exposes everything as the `mblingam` command.

pub mod cli;
pub mod error;
pub mod exec;
pub mod lingam;
pub mod model;
pub mod msboot;
pub mod psifit;
pub mod seed;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::Execution;
pub use lingam::{lingam_fit, IcaConfig, LingamEstimate, Nonlinearity};
pub use model::{
    total_effects, CausalOrder, ConnectionMatrix, DataMatrix, HypothesisId, Sign, TotalEffectMatrix,
};
pub use msboot::{build_scale_plan, count_events, BpCountTable, ScalePlan};
pub use psifit::{analyze_table, PsiFitResult, PsiKind, PsiModel, PvalueReport};
