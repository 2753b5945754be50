//! Synthetic autoregressive decoder.
//!
//! The decoder tracks a continuous true aligned position `p` that starts at
//! 0 and ends at `T`; text position `t` covers `(t - 1, t]`, so a semantic
//! token belongs to segment `1 + #{r : b_r < p}`, the same threshold rule the
//! switch trigger applies to the estimated position. Each token advances `p`
//! by the reciprocal of the current pace (semantic tokens per text token).
//!
//! The pace blends the segment's natural pace with the pace implied by the
//! duration target of the segment whose condition is being attended:
//! `natural^(1 - c) * target^c`, with `c` the duration compliance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::SimConfig;
use super::observe::ObservationModel;
use crate::msa::AttentionObservation;
use crate::plan::SegmentPlan;

/// Independent random streams derived from one seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const STREAM_LAYOUT: u64 = 1;
pub(crate) const STREAM_ATTENTION: u64 = 2;
pub(crate) const STREAM_PACE: u64 = 3;
pub(crate) const STREAM_EOS: u64 = 4;
pub(crate) const STREAM_SWITCH: u64 = 5;

#[derive(Debug, Clone)]
pub struct SyntheticDecoder {
    plan: SegmentPlan,
    natural: Vec<f64>,
    position: f64,
    observation: ObservationModel,
    att_rng: ChaCha8Rng,
    pace_rng: ChaCha8Rng,
    compliance: f64,
    step_jitter: f64,
}

impl SyntheticDecoder {
    /// `plan` supplies the text layout; its budgets, when present, define
    /// the nominal pace of each segment, otherwise the configured mean pace
    /// is used.
    pub fn new(plan: &SegmentPlan, cfg: &SimConfig) -> Self {
        let mut layout_rng = stream_rng(cfg.seed, STREAM_LAYOUT);
        let observation = ObservationModel::new(cfg, plan.text_len(), &mut layout_rng);
        let pace = &cfg.tokens_per_text_token;
        let natural = (1..=plan.num_segments())
            .map(|m| {
                let nominal = match plan.duration_budgets() {
                    Some(b) => b[m - 1] as f64 / plan.segment_text_len(m) as f64,
                    None => pace.mean,
                };
                let z: f64 = if pace.jitter > 0.0 {
                    StandardNormal.sample(&mut layout_rng)
                } else {
                    0.0
                };
                nominal * (pace.jitter * z).exp()
            })
            .collect();
        SyntheticDecoder {
            plan: plan.clone(),
            natural,
            position: 0.0,
            observation,
            att_rng: stream_rng(cfg.seed, STREAM_ATTENTION),
            pace_rng: stream_rng(cfg.seed, STREAM_PACE),
            compliance: cfg.duration_compliance,
            step_jitter: pace.step_jitter,
        }
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn text_done(&self) -> bool {
        self.position >= self.plan.text_len() as f64
    }

    /// Ground-truth segment of the current position.
    pub fn true_segment(&self) -> usize {
        segment_at(&self.plan, self.position)
    }

    pub fn natural_pace(&self, m: usize) -> f64 {
        self.natural[m - 1]
    }

    pub fn observation_model(&self) -> &ObservationModel {
        &self.observation
    }

    /// Emits one ordinary token. `target_pace` is the pace (tokens per text
    /// token) implied by the attended duration condition, if any.
    pub fn advance(&mut self, target_pace: Option<f64>) -> AttentionObservation {
        let natural = self.natural[self.true_segment() - 1];
        let mut pace = match target_pace {
            Some(target) if target > 0.0 => {
                natural.powf(1.0 - self.compliance) * target.powf(self.compliance)
            }
            _ => natural,
        };
        if self.step_jitter > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.pace_rng);
            pace *= (self.step_jitter * z).exp();
        }
        // keep the pace within a factor of four of natural
        let pace = pace.clamp(natural / 4.0, natural * 4.0);
        let end = self.plan.text_len() as f64;
        self.position = (self.position + 1.0 / pace).min(end);
        self.observation.sample(self.position, &mut self.att_rng)
    }
}

/// Segment of a continuous aligned position.
pub fn segment_at(plan: &SegmentPlan, position: f64) -> usize {
    1 + plan
        .boundaries()
        .iter()
        .filter(|&&b| (b as f64) < position)
        .count()
}

/// One step of an unsteered synthetic stream.
#[derive(Debug, Clone)]
pub struct StreamStep {
    pub observation: AttentionObservation,
    pub true_position: f64,
}

/// Runs the decoder at its natural pace until the text is fully rendered.
pub fn gen_stream(plan: &SegmentPlan, cfg: &SimConfig) -> Vec<StreamStep> {
    let mut dec = SyntheticDecoder::new(plan, cfg);
    let mut out = Vec::new();
    while !dec.text_done() {
        let observation = dec.advance(None);
        out.push(StreamStep {
            observation,
            true_position: dec.position(),
        });
    }
    out
}
