//! Synthetic decoder used to exercise the control stack end to end.
//!
//! Attention is synthesised from a ground-truth alignment path rather than
//! computed through the mask; the mask is still built and checked against
//! the segment ids every step.

pub mod config;
pub mod decoder;
pub mod observe;
pub mod run;
pub mod suite;

use thiserror::Error;

use crate::duration::SteerError;
use crate::mask::MaskError;
use crate::msa::MsaError;
use crate::plan::PlanError;

pub use config::{NoiseModel, SimConfig, SteeringFlags, DURATION_SCALES};
pub use decoder::{gen_stream, StreamStep, SyntheticDecoder};
pub use run::{run_trace, run_trace_with, SimResult, Termination};
pub use suite::{
    alignment_orderings, baseline_worst_columns, default_plans, duration_orderings, run_suite,
    Comparison, SuiteSpec, SuiteTable,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error("no EOS after {tokens} tokens (safety cap {cap})")]
    NoTermination { tokens: usize, cap: usize },
    #[error("mask consistency check failed at step {step}: {detail}")]
    MaskMismatch { step: usize, detail: String },
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Msa(#[from] MsaError),
    #[error(transparent)]
    Steer(#[from] SteerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}
