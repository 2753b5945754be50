//! One synthetic decode run through the full control stack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SimConfig, SteeringFlags};
use super::decoder::{segment_at, stream_rng, SyntheticDecoder, STREAM_EOS, STREAM_SWITCH};
use super::SimError;
use crate::duration::{eos_bias, record_token, steer_step, SteerConfig, SteeringState};
use crate::mask::{build_mask, current_row};
use crate::msa::ablation::Aligner;
use crate::msa::{AlignerVariant, MsaConfig};
use crate::plan::SegmentPlan;
use crate::trace::{DecodeTrace, StepRecord, TokenClass};

/// Multiple of the total budget after which a run is declared stuck.
pub const SAFETY_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The EOS token was sampled.
    Eos,
    /// The final segment exceeded its emergency cap.
    HardCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Mean over boundaries of `|p_detected - b_k| / len_k`.
    pub boundary_mae: f64,
    /// Mean over segments of `|generated - target| / target`, in percent.
    pub token_error_rate: f64,
    pub termination: Termination,
    /// True position at which each boundary was detected, if it was.
    pub detections: Vec<Option<f64>>,
    /// Ordinary tokens attributed to each ground-truth segment.
    pub tokens_per_segment: Vec<usize>,
    /// Scaled per-segment targets.
    pub targets: Vec<usize>,
    pub trace: DecodeTrace,
}

/// Runs with the default filter and steering configuration.
pub fn run_trace(
    plan: &SegmentPlan,
    cfg: &SimConfig,
    variant: AlignerVariant,
    flags: SteeringFlags,
) -> Result<SimResult, SimError> {
    run_trace_with(
        plan,
        cfg,
        variant,
        flags,
        &MsaConfig::default(),
        &SteerConfig::default(),
    )
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn run_trace_with(
    plan: &SegmentPlan,
    cfg: &SimConfig,
    variant: AlignerVariant,
    flags: SteeringFlags,
    msa_cfg: &MsaConfig,
    steer_cfg: &SteerConfig,
) -> Result<SimResult, SimError> {
    cfg.validate()?;
    msa_cfg.validate()?;
    steer_cfg.validate()?;
    let scaled = plan.scaled_budgets(cfg.duration_scale)?;
    let targets = scaled
        .duration_budgets()
        .expect("scaled plan has budgets")
        .to_vec();
    let planned = scaled.cumulative_budgets()?;
    let total: usize = targets.iter().sum();
    let cap = SAFETY_FACTOR * total;
    let m_total = plan.num_segments();
    let t_len = plan.text_len() as f64;

    let mut decoder = SyntheticDecoder::new(plan, cfg);
    let switch_prob = cfg
        .random_switch_prob
        .unwrap_or(m_total as f64 / total as f64);
    let mut switch_rng = stream_rng(cfg.seed, STREAM_SWITCH);
    let mut aligner = Aligner::new(variant, plan.text_len(), switch_prob, switch_rng.random())?;
    let mut eos_rng = stream_rng(cfg.seed, STREAM_EOS);
    let mut state = SteeringState::new(&scaled)?;

    let mut seg_s: Vec<usize> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut detections: Vec<Option<f64>> = vec![None; m_total - 1];
    let mut tokens_per_segment = vec![0usize; m_total];
    let mut prev_posterior = aligner.state.posterior();
    let mut prev_expected = 1.0;
    let termination;

    loop {
        let n = seg_s.len() + 1;
        let active = aligner.segment;
        if n > cap {
            return Err(SimError::NoTermination { tokens: n - 1, cap });
        }
        check_mask(plan, &seg_s, active, n, cfg.full_mask_check_every)?;

        // EOS decision for this slot
        let bias = if flags.eos {
            eos_bias(&state, &scaled, steer_cfg)
        } else {
            0.0
        };
        let e = &cfg.eos;
        let consumed = (n - 1) as f64 / total as f64;
        let logit = e.base
            + e.slope * (decoder.position() - t_len).min(0.0)
            + e.drift * (consumed - e.drift_onset).max(0.0)
            + bias;
        let mut prob = sigmoid(logit);
        if prob < e.min_prob {
            prob = 0.0;
        }
        let u: f64 = eos_rng.random();
        let emit = if e.greedy { logit > 0.0 } else { u < prob };
        if emit {
            steps.push(eos_record(
                n,
                active,
                &prev_posterior,
                prev_expected,
                &decoder,
                &state,
                bias,
            ));
            termination = Termination::Eos;
            break;
        }

        // ordinary token
        let seg = &state.segments[active - 1];
        let prev_cum = if active > 1 { planned[active - 2] } else { 0 };
        let target_tokens = seg.effective_target.saturating_sub(prev_cum).max(1);
        let target_pace = target_tokens as f64 / plan.segment_text_len(active) as f64;
        let obs = decoder.advance(Some(target_pace));
        let true_seg = segment_at(plan, decoder.position());
        tokens_per_segment[true_seg - 1] += 1;

        let out = aligner.step(&obs, plan, msa_cfg)?;
        let (progress, correction, regime, force) = if flags.local {
            let r = steer_step(&mut state, &scaled, &out.posterior, n, steer_cfg);
            (r.progress, r.correction, r.regime, r.force_switch)
        } else {
            let regime = record_token(&mut state, steer_cfg);
            let p = crate::duration::progress(&scaled, &state, &out.posterior);
            (p, 0, regime, false)
        };
        let effective = state.segments[active - 1].effective_target;

        steps.push(StepRecord {
            step: n,
            segment: active,
            token: TokenClass::Ordinary,
            prior: out.prior.clone(),
            posterior: out.posterior.clone(),
            head: out.head.map(|h| (h.layer, h.head)),
            expected_pos: out.expected_pos,
            true_pos: decoder.position(),
            effective_target: Some(effective),
            eos_bias: bias,
            r_text: progress.r_text,
            r_sem: progress.r_sem,
            delta_r: progress.delta_r,
            correction,
            regime,
        });
        seg_s.push(active);
        prev_expected = out.expected_pos;
        prev_posterior = out.posterior;

        if force && aligner.segment == active {
            if active == m_total {
                let bias = if flags.eos {
                    eos_bias(&state, &scaled, steer_cfg)
                } else {
                    0.0
                };
                steps.push(eos_record(
                    n + 1,
                    active,
                    &prev_posterior,
                    prev_expected,
                    &decoder,
                    &state,
                    bias,
                ));
                termination = Termination::HardCap;
                break;
            }
            aligner.force_switch(plan);
        }
        if aligner.segment != active {
            state.switch_to(aligner.segment)?;
            detections[active - 1] = Some(decoder.position());
        }
    }

    let boundary_mae = if m_total > 1 {
        let final_pos = decoder.position();
        detections
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let b = plan.boundaries()[k] as f64;
                let len = plan.segment_text_len(k + 1) as f64;
                (d.unwrap_or(final_pos) - b).abs() / len
            })
            .sum::<f64>()
            / (m_total - 1) as f64
    } else {
        0.0
    };
    let token_error_rate = 100.0
        * tokens_per_segment
            .iter()
            .zip(&targets)
            .map(|(&g, &d)| (g as f64 - d as f64).abs() / d as f64)
            .sum::<f64>()
        / m_total as f64;

    Ok(SimResult {
        boundary_mae,
        token_error_rate,
        termination,
        detections,
        tokens_per_segment,
        targets,
        trace: DecodeTrace { steps },
    })
}

fn eos_record(
    step: usize,
    segment: usize,
    posterior: &[f64],
    expected: f64,
    decoder: &SyntheticDecoder,
    state: &SteeringState,
    bias: f64,
) -> StepRecord {
    StepRecord {
        step,
        segment,
        token: TokenClass::Eos,
        prior: posterior.to_vec(),
        posterior: posterior.to_vec(),
        head: None,
        expected_pos: expected,
        true_pos: decoder.position(),
        effective_target: Some(state.segments[segment - 1].effective_target),
        eos_bias: bias,
        r_text: 0.0,
        r_sem: 0.0,
        delta_r: 0.0,
        correction: 0,
        regime: state.segments[segment - 1].regime,
    }
}

/// Checks the current mask row against the segment ids, and every `every`
/// steps the full mask as well.
fn check_mask(
    plan: &SegmentPlan,
    seg_s: &[usize],
    active: usize,
    step: usize,
    every: usize,
) -> Result<(), SimError> {
    let row = current_row(plan, seg_s, active)?;
    let cond = plan.cond_region_len();
    let l = plan.cond_block_len();
    let visible: Vec<usize> = (0..cond).filter(|&c| row[c]).collect();
    let expected: Vec<usize> = ((active - 1) * l..active * l).collect();
    if visible != expected || !row[cond..].iter().all(|&v| v) {
        return Err(SimError::MaskMismatch {
            step,
            detail: format!("current row does not expose exactly block {active}"),
        });
    }
    if every > 0 && step.is_multiple_of(every) {
        let mask = build_mask(plan, seg_s, step, active)?;
        let soff = mask.layout().semantic_offset();
        if mask.row(soff + step - 1) != row.as_slice() {
            return Err(SimError::MaskMismatch {
                step,
                detail: "full mask disagrees with incremental row".into(),
            });
        }
        for (r, &m) in seg_s.iter().enumerate() {
            if mask.visible_blocks(soff + r) != vec![m] {
                return Err(SimError::MaskMismatch {
                    step,
                    detail: format!("semantic token {} sees the wrong condition", r + 1),
                });
            }
        }
    }
    Ok(())
}
