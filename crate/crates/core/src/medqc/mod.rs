//! Quality control for multi-segment prompt records.
//!
//! Records arrive as JSONL, are checked rule by rule, filtered for exact and
//! near duplicates, summarised and sampled for manual review.

pub mod client;
pub mod dedup;
pub mod record;
pub mod sample;
pub mod similarity;
pub mod stats;
pub mod validate;

pub use client::{ClientError, GenerationBackend, GenerationClient, RecordRequest, StubBackend};
pub use dedup::{dedup, DedupConfig, DedupResult, DropReason, Dropped};
pub use record::{
    parse_jsonl, to_jsonl, DatasetRecord, Language, ParseError, RecordSegment, TimeValue,
};
pub use sample::{sample_for_review, SampleError, SampleReport};
pub use similarity::{similarity, SimilarityError};
pub use stats::{stats, StatsReport};
pub use validate::{validate, validate_all, QcConfig, Rule, ValidationReport, Verdict, Violation};
