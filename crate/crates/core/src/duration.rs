//! Segment-aware duration steering.
//!
//! Two controllers act on token counts:
//!
//! * a proportional controller that compares text progress (from the
//!   alignment posterior) with semantic progress inside the active segment
//!   and nudges that segment's cumulative token target, and
//! * an EOS bias schedule that suppresses termination in every non-final
//!   segment and ramps the EOS logit with the budget ratio in the last one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msa::expected_position;
use crate::plan::{round_half_away, ConditionBlock, PlanError, SegmentPlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid steering configuration: {0}")]
    Config(&'static str),
    #[error("segment {0} is not the next segment")]
    BadSwitch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EosSchedule {
    /// Bias applied in non-final segments.
    pub suppress_bias: f64,
    pub bias_min: f64,
    pub bias_max: f64,
    pub rho_lo: f64,
    pub rho_neutral_lo: f64,
    pub rho_neutral_hi: f64,
    pub rho_hi: f64,
}

impl Default for EosSchedule {
    fn default() -> Self {
        EosSchedule {
            suppress_bias: -1e4,
            bias_min: -5.0,
            bias_max: 15.0,
            rho_lo: 0.5,
            rho_neutral_lo: 0.8,
            rho_neutral_hi: 1.1,
            rho_hi: 1.2,
        }
    }
}

impl EosSchedule {
    /// Final-segment bias as a function of the budget ratio.
    pub fn final_bias(&self, rho: f64) -> f64 {
        if rho <= self.rho_lo {
            self.bias_min
        } else if rho < self.rho_neutral_lo {
            let f = (rho - self.rho_lo) / (self.rho_neutral_lo - self.rho_lo);
            self.bias_min * (1.0 - f)
        } else if rho <= self.rho_neutral_hi {
            0.0
        } else if rho < self.rho_hi {
            let f = (rho - self.rho_neutral_hi) / (self.rho_hi - self.rho_neutral_hi);
            self.bias_max * f
        } else {
            self.bias_max
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteerConfig {
    pub gain: f64,
    pub deadband: f64,
    /// Largest absolute correction per update, in tokens.
    pub max_step: i64,
    pub update_period: usize,
    pub conservative_ratio: f64,
    pub emergency_ratio: f64,
    pub eos: EosSchedule,
}

impl Default for SteerConfig {
    fn default() -> Self {
        SteerConfig {
            gain: 25.0,
            deadband: 0.01,
            max_step: 10,
            update_period: 5,
            conservative_ratio: 1.2,
            emergency_ratio: 1.5,
            eos: EosSchedule::default(),
        }
    }
}

impl SteerConfig {
    pub fn validate(&self) -> Result<(), SteerError> {
        if !(self.gain > 0.0) {
            return Err(SteerError::Config("gain must be positive"));
        }
        if !(self.deadband >= 0.0) {
            return Err(SteerError::Config("deadband must be >= 0"));
        }
        if self.max_step < 1 {
            return Err(SteerError::Config("max_step must be >= 1"));
        }
        if self.update_period < 1 {
            return Err(SteerError::Config("update_period must be >= 1"));
        }
        if !(1.0 < self.conservative_ratio && self.conservative_ratio < self.emergency_ratio) {
            return Err(SteerError::Config(
                "need 1 < conservative_ratio < emergency_ratio",
            ));
        }
        let e = &self.eos;
        if !(e.bias_min < 0.0 && 0.0 < e.bias_max) {
            return Err(SteerError::Config("need bias_min < 0 < bias_max"));
        }
        if !(e.rho_lo < e.rho_neutral_lo
            && e.rho_neutral_lo < e.rho_neutral_hi
            && e.rho_neutral_hi < e.rho_hi)
        {
            return Err(SteerError::Config(
                "EOS ratio anchors must be strictly increasing",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Normal,
    Conservative,
    Emergency,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Conservative => "conservative",
            Regime::Emergency => "emergency",
        }
    }
}

/// Bookkeeping for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSteer {
    pub budget: usize,
    pub planned_target: usize,
    pub effective_target: usize,
    pub generated: usize,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringState {
    pub segments: Vec<SegmentSteer>,
    /// 1-based active segment.
    pub active: usize,
    /// Semantic tokens generated so far.
    pub cursor: usize,
    /// Duration-embedding lookups; `payload_id` is the target index last
    /// queried for each segment.
    pub conditions: Vec<ConditionBlock>,
}

impl SteeringState {
    pub fn new(plan: &SegmentPlan) -> Result<Self, SteerError> {
        let budgets = plan.duration_budgets().ok_or(PlanError::MissingBudgets)?;
        let cumulative = plan.cumulative_budgets()?;
        let segments = budgets
            .iter()
            .zip(&cumulative)
            .map(|(&budget, &target)| SegmentSteer {
                budget,
                planned_target: target,
                effective_target: target,
                generated: 0,
                regime: Regime::Normal,
            })
            .collect();
        let conditions = plan
            .condition_blocks()
            .into_iter()
            .zip(&cumulative)
            .map(|(mut c, &target)| {
                c.payload_id = target as u64;
                c
            })
            .collect();
        Ok(SteeringState {
            segments,
            active: 1,
            cursor: 0,
            conditions,
        })
    }

    pub fn active_segment(&self) -> &SegmentSteer {
        &self.segments[self.active - 1]
    }

    pub fn effective_targets(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.effective_target).collect()
    }

    /// Moves to segment `next`, which must be `active + 1`. The segment being
    /// left goes back to its planned target.
    pub fn switch_to(&mut self, next: usize) -> Result<(), SteerError> {
        if next == self.active {
            return Ok(());
        }
        if next != self.active + 1 || next > self.segments.len() {
            return Err(SteerError::BadSwitch(next));
        }
        let old = &mut self.segments[self.active - 1];
        old.effective_target = old.planned_target;
        self.conditions[self.active - 1].payload_id = old.planned_target as u64;
        self.active = next;
        self.apply_floor();
        Ok(())
    }

    fn apply_floor(&mut self) {
        let floor = self.cursor + 1;
        let seg = &mut self.segments[self.active - 1];
        if seg.effective_target < floor {
            seg.effective_target = floor;
            self.conditions[self.active - 1].payload_id = floor as u64;
        }
    }

    fn set_effective(&mut self, target: usize) {
        self.segments[self.active - 1].effective_target = target;
        self.conditions[self.active - 1].payload_id = target as u64;
        self.apply_floor();
    }

    /// Tokens generated in the final segment over its budget; only
    /// meaningful once the final segment is active.
    pub fn final_ratio(&self) -> f64 {
        let last = self.segments.last().expect("at least one segment");
        last.generated as f64 / last.budget as f64
    }
}

/// Text and semantic progress inside the active segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub r_text: f64,
    pub r_sem: f64,
    pub delta_r: f64,
}

pub fn progress(plan: &SegmentPlan, state: &SteeringState, posterior: &[f64]) -> Progress {
    let m = state.active;
    let start = plan.segment_start(m) as f64;
    let len = plan.segment_text_len(m) as f64;
    let r_text = ((expected_position(posterior) - start + 1.0) / len).clamp(0.0, 1.0);
    let seg = state.active_segment();
    let r_sem = (seg.generated as f64 / seg.budget as f64).max(0.0);
    Progress {
        r_text,
        r_sem,
        delta_r: r_text - r_sem,
    }
}

/// `clip(round(gain * delta_r), -max_step, max_step)`, zero inside the
/// deadband.
pub fn correction_with_gain(delta_r: f64, gain: f64, cfg: &SteerConfig) -> i64 {
    if delta_r.abs() <= cfg.deadband {
        return 0;
    }
    (round_half_away(gain * delta_r) as i64).clamp(-cfg.max_step, cfg.max_step)
}

pub fn correction(delta_r: f64, cfg: &SteerConfig) -> i64 {
    correction_with_gain(delta_r, cfg.gain, cfg)
}

/// What a steering step did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteerReport {
    pub progress: Progress,
    pub updated: bool,
    pub correction: i64,
    pub effective_target: usize,
    pub regime: Regime,
    /// The active segment reached its hard cap and must end now.
    pub force_switch: bool,
}

/// Records one generated token for the active segment and, every
/// `update_period` steps, applies a proportional correction to the active
/// segment's effective target.
///
/// Regimes are re-evaluated every step: past `conservative_ratio` of the
/// budget the gain is halved; past `emergency_ratio` the target is frozen
/// against upward corrections and the segment is reported as capped: the
/// caller must end it (switch, or terminate in the final segment).
pub fn steer_step(
    state: &mut SteeringState,
    plan: &SegmentPlan,
    posterior: &[f64],
    step_index: usize,
    cfg: &SteerConfig,
) -> SteerReport {
    state.cursor += 1;
    state.segments[state.active - 1].generated += 1;

    let regime = update_regime(state, cfg);

    let prog = progress(plan, state, posterior);
    let mut corr = 0;
    let updated = step_index.is_multiple_of(cfg.update_period);
    if updated {
        let gain = match regime {
            Regime::Normal => cfg.gain,
            Regime::Conservative | Regime::Emergency => cfg.gain / 2.0,
        };
        corr = correction_with_gain(prog.delta_r, gain, cfg);
        let seg = state.active_segment();
        let mut target = (seg.effective_target as i64 + corr).max(0) as usize;
        if regime == Regime::Emergency {
            target = target.min(seg.effective_target);
        }
        state.set_effective(target);
    } else {
        state.apply_floor();
    }

    SteerReport {
        progress: prog,
        updated,
        correction: corr,
        effective_target: state.active_segment().effective_target,
        regime,
        force_switch: regime == Regime::Emergency,
    }
}

/// Counts one generated token without steering: targets stay at plan and
/// the regime is tracked for reporting only.
pub fn record_token(state: &mut SteeringState, cfg: &SteerConfig) -> Regime {
    state.cursor += 1;
    state.segments[state.active - 1].generated += 1;
    update_regime(state, cfg)
}

fn update_regime(state: &mut SteeringState, cfg: &SteerConfig) -> Regime {
    let seg = &mut state.segments[state.active - 1];
    let g = seg.generated as f64;
    let d = seg.budget as f64;
    let computed = if g > cfg.emergency_ratio * d {
        Regime::Emergency
    } else if g > cfg.conservative_ratio * d {
        Regime::Conservative
    } else {
        Regime::Normal
    };
    seg.regime = computed.max_with(seg.regime);
    seg.regime
}

impl Regime {
    fn max_with(self, other: Regime) -> Regime {
        use Regime::*;
        match (self, other) {
            (Emergency, _) | (_, Emergency) => Emergency,
            (Conservative, _) | (_, Conservative) => Conservative,
            _ => Normal,
        }
    }
}

/// EOS logit bias for the current state.
pub fn eos_bias(state: &SteeringState, plan: &SegmentPlan, cfg: &SteerConfig) -> f64 {
    if state.active < plan.num_segments() {
        cfg.eos.suppress_bias
    } else {
        cfg.eos.final_bias(state.final_ratio())
    }
}
