//! Per-step record of a decode run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duration::Regime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenClass {
    Ordinary,
    Eos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    /// Segment whose condition the token was generated under.
    pub segment: usize,
    pub token: TokenClass,
    pub prior: Vec<f64>,
    pub posterior: Vec<f64>,
    /// 1-based (layer, head) used as observation, when the aligner picks one.
    pub head: Option<(usize, usize)>,
    pub expected_pos: f64,
    /// Ground-truth text position of the synthetic decoder after this step.
    pub true_pos: f64,
    pub effective_target: Option<usize>,
    pub eos_bias: f64,
    pub r_text: f64,
    pub r_sem: f64,
    pub delta_r: f64,
    pub correction: i64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("segment index decreased at step {step}")]
    SegmentDecreased { step: usize },
    #[error("segment index skipped at step {step}")]
    SegmentSkipped { step: usize },
    #[error("EOS emitted before the final record (step {step})")]
    EarlyEos { step: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
}

impl DecodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.segment)
    }

    /// Checks ordering of segment ids and placement of EOS.
    pub fn validate(&self) -> Result<(), TraceError> {
        for w in self.steps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.segment < a.segment {
                return Err(TraceError::SegmentDecreased { step: b.step });
            }
            if b.segment > a.segment + 1 {
                return Err(TraceError::SegmentSkipped { step: b.step });
            }
        }
        let last = self.steps.len().saturating_sub(1);
        for (idx, s) in self.steps.iter().enumerate() {
            if s.token == TokenClass::Eos && idx != last {
                return Err(TraceError::EarlyEos { step: s.step });
            }
        }
        Ok(())
    }

    /// JSON lines with the alignment fields of each step.
    pub fn to_alignment_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let rec = serde_json::json!({
                "i": s.step,
                "prior": s.prior,
                "posterior": s.posterior,
                "head": s.head,
                "expected_pos": s.expected_pos,
                "segment": s.segment,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    /// Steering CSV: step, segment, r_text, r_sem, delta_r, correction,
    /// effective_target, regime, eos_bias.
    pub fn to_steering_csv(&self) -> String {
        let mut out = String::from(
            "step,segment,r_text,r_sem,delta_r,correction,effective_target,regime,eos_bias\n",
        );
        for s in &self.steps {
            let target = s
                .effective_target
                .map(|t| t.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{},{},{},{:.6}\n",
                s.step,
                s.segment,
                s.r_text,
                s.r_sem,
                s.delta_r,
                s.correction,
                target,
                s.regime.as_str(),
                s.eos_bias
            ));
        }
        out
    }
}
