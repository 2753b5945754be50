//! Segment layout of a decode request.
//!
//! Text positions and segment indices are 1-based throughout the public API,
//! matching the way boundaries are written down: boundary `b_m` is the last
//! text position that belongs to segment `m`.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default codec token rate in semantic tokens per second.
pub const DEFAULT_TOKEN_RATE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("boundaries must be strictly increasing, got {0:?}")]
    BoundaryOrder(Vec<usize>),
    #[error("boundary {boundary} outside 1..{text_len}")]
    BoundaryRange { boundary: usize, text_len: usize },
    #[error("duration budget for segment {segment} must be >= 1")]
    EmptyBudget { segment: usize },
    #[error("expected {expected} duration budgets, got {got}")]
    BudgetCount { expected: usize, got: usize },
    #[error("text must contain at least one token")]
    EmptyText,
    #[error("condition block length must be >= 1")]
    EmptyConditionBlock,
    #[error("plan has no duration budgets")]
    MissingBudgets,
    #[error("position {position} outside 1..={limit}")]
    OutOfRange { position: usize, limit: usize },
    #[error("seconds and token rate must be positive (got {seconds}, {rate})")]
    NonPositive { seconds: f64, rate: f64 },
}

/// Wire form of a plan, validated into [`SegmentPlan`] on deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlanSpec {
    text_len: usize,
    #[serde(default)]
    boundaries: Vec<usize>,
    cond_block_len: usize,
    #[serde(default)]
    duration_budgets: Option<Vec<i64>>,
}

/// Text length, segment boundaries, condition block size and optional
/// per-segment token budgets. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlanSpec", into = "PlanSpec")]
pub struct SegmentPlan {
    text_len: usize,
    boundaries: Vec<usize>,
    cond_block_len: usize,
    duration_budgets: Option<Vec<usize>>,
}

impl TryFrom<PlanSpec> for SegmentPlan {
    type Error = PlanError;

    fn try_from(spec: PlanSpec) -> Result<Self, Self::Error> {
        build_plan(
            spec.text_len,
            &spec.boundaries,
            spec.cond_block_len,
            spec.duration_budgets.as_deref(),
        )
    }
}

impl From<SegmentPlan> for PlanSpec {
    fn from(plan: SegmentPlan) -> Self {
        PlanSpec {
            text_len: plan.text_len,
            boundaries: plan.boundaries,
            cond_block_len: plan.cond_block_len,
            duration_budgets: plan
                .duration_budgets
                .map(|b| b.into_iter().map(|d| d as i64).collect()),
        }
    }
}

/// Validates the arguments and assembles a plan.
///
/// Budgets are taken as signed integers so that zero or negative values
/// coming from config files are reported as [`PlanError::EmptyBudget`]
/// rather than failing to parse.
pub fn build_plan(
    text_len: usize,
    boundaries: &[usize],
    cond_block_len: usize,
    duration_budgets: Option<&[i64]>,
) -> Result<SegmentPlan, PlanError> {
    if text_len == 0 {
        return Err(PlanError::EmptyText);
    }
    if cond_block_len == 0 {
        return Err(PlanError::EmptyConditionBlock);
    }
    for &b in boundaries {
        if b < 1 || b >= text_len {
            return Err(PlanError::BoundaryRange {
                boundary: b,
                text_len,
            });
        }
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PlanError::BoundaryOrder(boundaries.to_vec()));
    }
    let num_segments = boundaries.len() + 1;
    let duration_budgets = match duration_budgets {
        None => None,
        Some(budgets) => {
            if budgets.len() != num_segments {
                return Err(PlanError::BudgetCount {
                    expected: num_segments,
                    got: budgets.len(),
                });
            }
            let mut out = Vec::with_capacity(budgets.len());
            for (k, &d) in budgets.iter().enumerate() {
                if d < 1 {
                    return Err(PlanError::EmptyBudget { segment: k + 1 });
                }
                out.push(d as usize);
            }
            Some(out)
        }
    };
    Ok(SegmentPlan {
        text_len,
        boundaries: boundaries.to_vec(),
        cond_block_len,
        duration_budgets,
    })
}

impl SegmentPlan {
    pub fn text_len(&self) -> usize {
        self.text_len
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn cond_block_len(&self) -> usize {
        self.cond_block_len
    }

    pub fn duration_budgets(&self) -> Option<&[usize]> {
        self.duration_budgets.as_deref()
    }

    /// Total number of condition tokens, `M * L_C`.
    pub fn cond_region_len(&self) -> usize {
        self.num_segments() * self.cond_block_len
    }

    /// Last text position of segment `m` (the final segment ends at `T`).
    pub fn segment_end(&self, m: usize) -> usize {
        debug_assert!(m >= 1 && m <= self.num_segments());
        self.boundaries.get(m - 1).copied().unwrap_or(self.text_len)
    }

    /// First text position of segment `m`.
    pub fn segment_start(&self, m: usize) -> usize {
        if m == 1 {
            1
        } else {
            self.boundaries[m - 2] + 1
        }
    }

    pub fn segment_span(&self, m: usize) -> RangeInclusive<usize> {
        self.segment_start(m)..=self.segment_end(m)
    }

    pub fn segment_text_len(&self, m: usize) -> usize {
        self.segment_end(m) + 1 - self.segment_start(m)
    }

    /// Segment containing text position `t`: `1 + #{r : t > b_r}`.
    pub fn segment_of_text(&self, t: usize) -> Result<usize, PlanError> {
        if t < 1 || t > self.text_len {
            return Err(PlanError::OutOfRange {
                position: t,
                limit: self.text_len,
            });
        }
        Ok(1 + self.boundaries.iter().filter(|&&b| t > b).count())
    }

    /// Prefix sums of the duration budgets.
    pub fn cumulative_budgets(&self) -> Result<Vec<usize>, PlanError> {
        let budgets = self.duration_budgets().ok_or(PlanError::MissingBudgets)?;
        Ok(budgets
            .iter()
            .scan(0usize, |acc, &d| {
                *acc += d;
                Some(*acc)
            })
            .collect())
    }

    /// Returns a copy with every budget multiplied by `factor` (rounded half
    /// away from zero, minimum 1).
    pub fn scaled_budgets(&self, factor: f64) -> Result<SegmentPlan, PlanError> {
        let budgets = self.duration_budgets().ok_or(PlanError::MissingBudgets)?;
        let scaled: Vec<i64> = budgets
            .iter()
            .map(|&d| (round_half_away(d as f64 * factor) as i64).max(1))
            .collect();
        build_plan(
            self.text_len,
            &self.boundaries,
            self.cond_block_len,
            Some(&scaled),
        )
    }

    /// One opaque condition block per segment.
    pub fn condition_blocks(&self) -> Vec<ConditionBlock> {
        (1..=self.num_segments())
            .map(|m| ConditionBlock {
                segment_index: m,
                length: self.cond_block_len,
                payload_id: 0,
            })
            .collect()
    }
}

/// Placeholder for the speaker/emotion/duration embeddings of one segment.
/// The payload is never inspected; duration steering only rewrites
/// `payload_id` to the index of the re-queried duration embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionBlock {
    pub segment_index: usize,
    pub length: usize,
    pub payload_id: u64,
}

/// Rounds half away from zero. This is the only rounding rule used in the
/// crate.
pub fn round_half_away(x: f64) -> f64 {
    // f64::round already rounds ties away from zero
    x.round()
}

/// Converts a duration in seconds to a semantic token count.
pub fn seconds_to_tokens(seconds: f64, token_rate: f64) -> Result<usize, PlanError> {
    if !(seconds > 0.0 && token_rate > 0.0) || !seconds.is_finite() || !token_rate.is_finite() {
        return Err(PlanError::NonPositive {
            seconds,
            rate: token_rate,
        });
    }
    Ok((round_half_away(seconds * token_rate) as usize).max(1))
}
