//! Alternative aligners used to ablate the filter.
//!
//! * `max_greedy`: pick the head with the largest mean raw attention and
//!   keep a hard position that can only stay or move one step forward,
//!   whichever of the two has more attention.
//! * `topk_greedy`: same hard update on the mean-attention-weighted average
//!   of the `top_k` heads.
//! * `maxhead_msa`: the full predict/update filter fed with the
//!   largest-mean-attention head, without smoothing.
//! * `random_switch`: ignores attention for segment switching and advances
//!   the segment with a fixed per-step probability.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    expected_position, fuse, init_belief, maybe_switch, msa_step, predict, AlignmentBelief,
    AttentionObservation, HeadChoice, MsaConfig, MsaError,
};
use crate::plan::SegmentPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignerVariant {
    Msa,
    MaxGreedy,
    TopkGreedy,
    MaxheadMsa,
    RandomSwitch,
}

impl AlignerVariant {
    pub const ALL: [AlignerVariant; 5] = [
        AlignerVariant::Msa,
        AlignerVariant::MaxGreedy,
        AlignerVariant::TopkGreedy,
        AlignerVariant::MaxheadMsa,
        AlignerVariant::RandomSwitch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlignerVariant::Msa => "msa",
            AlignerVariant::MaxGreedy => "max_greedy",
            AlignerVariant::TopkGreedy => "topk_greedy",
            AlignerVariant::MaxheadMsa => "maxhead_msa",
            AlignerVariant::RandomSwitch => "random_switch",
        }
    }
}

impl std::fmt::Display for AlignerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlignerVariant {
    type Err = MsaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AlignerVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| MsaError::BadVariant(s.to_string()))
    }
}

/// Per-variant aligner state.
#[derive(Debug, Clone)]
pub enum AblationState {
    /// `msa` and `maxhead_msa`.
    Belief(AlignmentBelief),
    /// Greedy variants: 1-based hard position.
    Hard { position: usize, text_len: usize },
    /// `random_switch`. `tracker` is an ordinary filter kept only to report
    /// progress to duration steering; it never drives switching.
    Random {
        switch_prob: f64,
        rng: ChaCha8Rng,
        tracker: AlignmentBelief,
    },
}

impl AblationState {
    pub fn new(
        variant: AlignerVariant,
        text_len: usize,
        switch_prob: f64,
        seed: u64,
    ) -> Result<Self, MsaError> {
        let belief = init_belief(text_len)?;
        Ok(match variant {
            AlignerVariant::Msa | AlignerVariant::MaxheadMsa => AblationState::Belief(belief),
            AlignerVariant::MaxGreedy | AlignerVariant::TopkGreedy => AblationState::Hard {
                position: 1,
                text_len,
            },
            AlignerVariant::RandomSwitch => AblationState::Random {
                switch_prob,
                rng: ChaCha8Rng::seed_from_u64(seed),
                tracker: belief,
            },
        })
    }

    pub fn posterior(&self) -> Vec<f64> {
        match self {
            AblationState::Belief(b) => b.posterior.clone(),
            AblationState::Hard { position, text_len } => {
                AlignmentBelief::one_hot(*text_len, *position).posterior
            }
            AblationState::Random { tracker, .. } => tracker.posterior.clone(),
        }
    }
}

/// What one aligner step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignOutcome {
    pub prior: Vec<f64>,
    pub posterior: Vec<f64>,
    pub head: Option<HeadChoice>,
    pub expected_pos: f64,
    /// Only set by `random_switch`: whether the coin said to switch.
    pub random_switch: Option<bool>,
}

/// Mean raw attention of each head, `(1/T) * sum_t mass * A[t]`.
pub fn mean_attention_scores(obs: &AttentionObservation) -> Vec<((usize, usize), f64)> {
    let t = obs.text_len() as f64;
    obs.head_indices()
        .map(|(l, h)| {
            let mass = obs.text_mass(l, h);
            let f = obs.slice(l, h).iter().map(|a| mass * a).sum::<f64>() / t;
            ((l, h), f)
        })
        .collect()
}

/// Heads ranked by mean attention, best first; ties keep (layer, head) order.
fn ranked_heads(obs: &AttentionObservation) -> Vec<((usize, usize), f64)> {
    let mut scores = mean_attention_scores(obs);
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    scores
}

fn max_mean_head(obs: &AttentionObservation) -> HeadChoice {
    let ((l, h), f) = ranked_heads(obs)[0];
    HeadChoice {
        layer: l + 1,
        head: h + 1,
        score: f,
    }
}

fn topk_average(obs: &AttentionObservation, k: usize) -> Vec<f64> {
    let ranked = ranked_heads(obs);
    let chosen = &ranked[..k.min(ranked.len())];
    let wsum: f64 = chosen.iter().map(|(_, f)| f).sum();
    let mut avg = vec![0.0; obs.text_len()];
    for &((l, h), f) in chosen {
        let w = if wsum > 0.0 {
            f / wsum
        } else {
            1.0 / chosen.len() as f64
        };
        for (a, v) in avg.iter_mut().zip(obs.slice(l, h)) {
            *a += w * v;
        }
    }
    avg
}

/// Stay at `k` unless position `k + 1` has strictly more attention.
pub fn greedy_move(position: usize, att: &[f64]) -> usize {
    if position < att.len() && att[position] > att[position - 1] {
        position + 1
    } else {
        position
    }
}

/// Runs one step of the named aligner on `state`.
pub fn align_step_ablation(
    variant: AlignerVariant,
    state: &mut AblationState,
    obs: &AttentionObservation,
    cfg: &MsaConfig,
) -> Result<AlignOutcome, MsaError> {
    match (variant, state) {
        (AlignerVariant::Msa, AblationState::Belief(belief)) => {
            let (next, choice) = msa_step(belief, obs, cfg)?;
            *belief = next;
            Ok(AlignOutcome {
                prior: belief.prior.clone(),
                posterior: belief.posterior.clone(),
                head: Some(choice),
                expected_pos: expected_position(&belief.posterior),
                random_switch: None,
            })
        }
        (AlignerVariant::MaxheadMsa, AblationState::Belief(belief)) => {
            check_len(belief.text_len(), obs)?;
            let predicted = predict(belief, cfg);
            let choice = max_mean_head(obs);
            let evidence = obs.slice(choice.layer - 1, choice.head - 1);
            let posterior = fuse(&predicted.prior, evidence);
            *belief = AlignmentBelief {
                prior: predicted.prior,
                posterior,
            };
            Ok(AlignOutcome {
                prior: belief.prior.clone(),
                posterior: belief.posterior.clone(),
                head: Some(choice),
                expected_pos: expected_position(&belief.posterior),
                random_switch: None,
            })
        }
        (
            AlignerVariant::MaxGreedy | AlignerVariant::TopkGreedy,
            AblationState::Hard { position, text_len },
        ) => {
            check_len(*text_len, obs)?;
            let prior = AlignmentBelief::one_hot(*text_len, *position).posterior;
            let (att, head) = if variant == AlignerVariant::MaxGreedy {
                let choice = max_mean_head(obs);
                (
                    obs.slice(choice.layer - 1, choice.head - 1).to_vec(),
                    Some(choice),
                )
            } else {
                (topk_average(obs, cfg.top_k), None)
            };
            *position = greedy_move(*position, &att);
            Ok(AlignOutcome {
                prior,
                posterior: AlignmentBelief::one_hot(*text_len, *position).posterior,
                head,
                expected_pos: *position as f64,
                random_switch: None,
            })
        }
        (
            AlignerVariant::RandomSwitch,
            AblationState::Random {
                switch_prob,
                rng,
                tracker,
            },
        ) => {
            let (next, choice) = msa_step(tracker, obs, cfg)?;
            *tracker = next;
            let coin = *switch_prob > 0.0 && rng.random::<f64>() < *switch_prob;
            Ok(AlignOutcome {
                prior: tracker.prior.clone(),
                posterior: tracker.posterior.clone(),
                head: Some(choice),
                expected_pos: expected_position(&tracker.posterior),
                random_switch: Some(coin),
            })
        }
        (variant, _) => Err(MsaError::StateMismatch(variant)),
    }
}

fn check_len(text_len: usize, obs: &AttentionObservation) -> Result<(), MsaError> {
    if text_len != obs.text_len() {
        return Err(MsaError::LengthMismatch {
            belief: text_len,
            obs: obs.text_len(),
        });
    }
    Ok(())
}

/// An aligner plus the segment index it drives.
#[derive(Debug, Clone)]
pub struct Aligner {
    pub variant: AlignerVariant,
    pub state: AblationState,
    pub segment: usize,
}

impl Aligner {
    pub fn new(
        variant: AlignerVariant,
        text_len: usize,
        switch_prob: f64,
        seed: u64,
    ) -> Result<Self, MsaError> {
        Ok(Aligner {
            variant,
            state: AblationState::new(variant, text_len, switch_prob, seed)?,
            segment: 1,
        })
    }

    /// One alignment step followed by the segment-switch decision.
    pub fn step(
        &mut self,
        obs: &AttentionObservation,
        plan: &SegmentPlan,
        cfg: &MsaConfig,
    ) -> Result<AlignOutcome, MsaError> {
        let out = align_step_ablation(self.variant, &mut self.state, obs, cfg)?;
        self.segment = match out.random_switch {
            Some(true) if self.segment < plan.num_segments() => self.segment + 1,
            Some(_) => self.segment,
            None => maybe_switch(self.segment, &out.posterior, plan),
        };
        Ok(out)
    }

    /// Moves to the next segment regardless of alignment (used when a
    /// segment hits its hard length cap).
    pub fn force_switch(&mut self, plan: &SegmentPlan) {
        if self.segment < plan.num_segments() {
            self.segment += 1;
        }
    }
}
