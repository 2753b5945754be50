//! Segment-level control stack for autoregressive sequence decoding.
//!
//! The crate is organised the way a decode loop consumes it:
//!
//! * [`plan`] holds the segment layout shared by everything else.
//! * [`mask`] builds the segment-local 2D causal attention mask.
//! * [`msa`] is the monotonic stream alignment filter and its ablations.
//! * [`duration`] implements the proportional duration controller and the
//!   EOS bias schedule.
//! * [`sim`] is a synthetic decoder used to exercise the stack end to end.
//! * [`medqc`] validates, deduplicates and summarises multi-segment prompt
//!   records.

pub mod duration;
pub mod mask;
pub mod medqc;
pub mod msa;
pub mod plan;
pub mod sim;
pub mod trace;

pub use duration::{SteerConfig, SteeringState};
pub use mask::BiasMask;
pub use msa::{AlignmentBelief, AttentionObservation, MsaConfig};
pub use plan::SegmentPlan;
pub use trace::DecodeTrace;
