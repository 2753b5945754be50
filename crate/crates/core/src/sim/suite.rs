//! Batches of simulator runs and their summary tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SimConfig, SteeringFlags, DURATION_SCALES};
use super::run::{run_trace_with, Termination};
use super::SimError;
use crate::duration::SteerConfig;
use crate::msa::{AlignerVariant, MsaConfig};
use crate::plan::{build_plan, SegmentPlan};
use crate::trace::TokenClass;

/// Semantic tokens per text token used by the default plans.
pub const DEFAULT_PACE: usize = 12;

/// Two- and three-segment plans with budgets at the default pace.
pub fn default_plans() -> Vec<SegmentPlan> {
    let make = |t: usize, bounds: &[usize]| {
        let mut lens = Vec::new();
        let mut prev = 0;
        for &b in bounds.iter().chain(std::iter::once(&t)) {
            lens.push(((b - prev) * DEFAULT_PACE) as i64);
            prev = b;
        }
        build_plan(t, bounds, 1, Some(&lens)).expect("default plan is valid")
    };
    vec![make(20, &[9]), make(30, &[8, 19]), make(28, &[12, 20])]
}

/// What to run: every plan, seed, variant, steering flag set and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub base: SimConfig,
    pub variants: Vec<AlignerVariant>,
    pub flags: Vec<SteeringFlags>,
    pub scales: Vec<f64>,
    pub msa: MsaConfig,
    pub steer: SteerConfig,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            base: SimConfig::default(),
            variants: vec![AlignerVariant::Msa],
            flags: vec![SteeringFlags::FULL],
            scales: vec![1.0],
            msa: MsaConfig::default(),
            steer: SteerConfig::default(),
        }
    }
}

impl SuiteSpec {
    /// Aligner comparison at scale 1 with full steering.
    pub fn alignment(base: SimConfig) -> Self {
        SuiteSpec {
            base,
            variants: vec![
                AlignerVariant::Msa,
                AlignerVariant::MaxGreedy,
                AlignerVariant::TopkGreedy,
                AlignerVariant::MaxheadMsa,
            ],
            ..SuiteSpec::default()
        }
    }

    /// Steering ablation over all duration scales with the MSA aligner.
    pub fn duration(base: SimConfig) -> Self {
        SuiteSpec {
            base,
            flags: SteeringFlags::ALL.to_vec(),
            scales: DURATION_SCALES.to_vec(),
            ..SuiteSpec::default()
        }
    }
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub plan: usize,
    pub seed: u64,
    pub variant: AlignerVariant,
    pub steering: SteeringFlags,
    pub scale: f64,
    pub boundary_mae: f64,
    pub token_error_rate: f64,
    pub termination: Termination,
    pub tokens: usize,
    /// Whether the run obeyed the structural invariants: segment ids
    /// nondecreasing without skips, EOS only as the last record and only
    /// in the final segment.
    pub trace_valid: bool,
    pub eos_in_final_segment: bool,
    /// Steps at which the expected aligned position went down.
    pub expected_pos_decreases: usize,
    /// Largest deviation of a posterior sum from 1.
    pub max_norm_error: f64,
}

/// Mean and sample standard deviation of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: AlignerVariant,
    pub steering: SteeringFlags,
    pub scale: f64,
    pub n: usize,
    pub mae_mean: f64,
    pub mae_sd: f64,
    pub error_mean: f64,
    pub error_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub traces: Vec<TraceMetrics>,
    pub cells: Vec<CellSummary>,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Paired difference `a - b`: mean and the half-width of its normal 95%
/// confidence interval.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    (mean, 1.96 * sd / (d.len() as f64).sqrt())
}

struct Job {
    plan: usize,
    seed: u64,
    variant: AlignerVariant,
    steering: SteeringFlags,
    scale: f64,
}

/// Runs every combination for seeds `base.seed .. base.seed + repeats`.
pub fn run_suite(
    plans: &[SegmentPlan],
    spec: &SuiteSpec,
    repeats: usize,
) -> Result<SuiteTable, SimError> {
    if repeats == 0 {
        return Err(SimError::Config("repeats must be >= 1".into()));
    }
    spec.base.validate()?;
    let mut jobs = Vec::new();
    for (plan, _) in plans.iter().enumerate() {
        for r in 0..repeats as u64 {
            for &variant in &spec.variants {
                for &steering in &spec.flags {
                    for &scale in &spec.scales {
                        jobs.push(Job {
                            plan,
                            seed: spec.base.seed + r,
                            variant,
                            steering,
                            scale,
                        });
                    }
                }
            }
        }
    }

    let mut traces = jobs
        .par_iter()
        .map(|job| {
            let cfg = SimConfig {
                seed: job.seed,
                duration_scale: job.scale,
                ..spec.base.clone()
            };
            let res = run_trace_with(
                &plans[job.plan],
                &cfg,
                job.variant,
                job.steering,
                &spec.msa,
                &spec.steer,
            )?;
            let steps = &res.trace.steps;
            let m_total = plans[job.plan].num_segments();
            let eos_in_final_segment = steps
                .iter()
                .filter(|s| s.token == TokenClass::Eos)
                .all(|s| s.segment == m_total);
            let ordinary: Vec<_> = steps
                .iter()
                .filter(|s| s.token == TokenClass::Ordinary)
                .collect();
            let expected_pos_decreases = ordinary
                .windows(2)
                .filter(|w| w[1].expected_pos < w[0].expected_pos)
                .count();
            let max_norm_error = ordinary
                .iter()
                .map(|s| (s.posterior.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max);
            Ok(TraceMetrics {
                plan: job.plan,
                seed: job.seed,
                variant: job.variant,
                steering: job.steering,
                scale: job.scale,
                boundary_mae: res.boundary_mae,
                token_error_rate: res.token_error_rate,
                termination: res.termination,
                tokens: ordinary.len(),
                trace_valid: res.trace.validate().is_ok() && eos_in_final_segment,
                eos_in_final_segment,
                expected_pos_decreases,
                max_norm_error,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    traces.sort_by(|a, b| {
        (a.plan, a.seed, a.variant, a.steering)
            .cmp(&(b.plan, b.seed, b.variant, b.steering))
            .then(a.scale.total_cmp(&b.scale))
    });

    let mut cells = Vec::new();
    for &variant in &spec.variants {
        for &steering in &spec.flags {
            for &scale in &spec.scales {
                let sel: Vec<&TraceMetrics> = traces
                    .iter()
                    .filter(|t| t.variant == variant && t.steering == steering && t.scale == scale)
                    .collect();
                let mae: Vec<f64> = sel.iter().map(|t| t.boundary_mae).collect();
                let err: Vec<f64> = sel.iter().map(|t| t.token_error_rate).collect();
                let (mae_mean, mae_sd) = mean_sd(&mae);
                let (error_mean, error_sd) = mean_sd(&err);
                cells.push(CellSummary {
                    variant,
                    steering,
                    scale,
                    n: sel.len(),
                    mae_mean,
                    mae_sd,
                    error_mean,
                    error_sd,
                });
            }
        }
    }
    Ok(SuiteTable { traces, cells })
}

impl SuiteTable {
    pub fn cell(
        &self,
        variant: AlignerVariant,
        steering: SteeringFlags,
        scale: f64,
    ) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.steering == steering && c.scale == scale)
    }

    /// Per-trace values of one cell in (plan, seed) order.
    pub fn values(
        &self,
        variant: AlignerVariant,
        steering: SteeringFlags,
        scale: f64,
        metric: fn(&TraceMetrics) -> f64,
    ) -> Vec<f64> {
        self.traces
            .iter()
            .filter(|t| t.variant == variant && t.steering == steering && t.scale == scale)
            .map(metric)
            .collect()
    }

    pub fn cells_csv(&self) -> String {
        let mut out =
            String::from("variant,steering,scale,n,mae_mean,mae_sd,error_mean,error_sd\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                c.variant,
                c.steering.label(),
                c.scale,
                c.n,
                c.mae_mean,
                c.mae_sd,
                c.error_mean,
                c.error_sd
            );
        }
        out
    }

    pub fn traces_csv(&self) -> String {
        let mut out = String::from(
            "plan,seed,variant,steering,scale,boundary_mae,token_error_rate,termination,tokens\n",
        );
        for t in &self.traces {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6},{},{}",
                t.plan,
                t.seed,
                t.variant,
                t.steering.label(),
                t.scale,
                t.boundary_mae,
                t.token_error_rate,
                match t.termination {
                    Termination::Eos => "eos",
                    Termination::HardCap => "hard_cap",
                },
                t.tokens
            );
        }
        out
    }

    /// Mean error table: one row per steering flag set, one column per scale.
    pub fn error_table(&self, variant: AlignerVariant) -> String {
        let mut scales: Vec<f64> = self.cells.iter().map(|c| c.scale).collect();
        scales.sort_by(f64::total_cmp);
        scales.dedup();
        let mut out = String::from("steering");
        for s in &scales {
            let _ = write!(out, ",x{s}");
        }
        out.push('\n');
        for flags in SteeringFlags::ALL {
            if !self
                .cells
                .iter()
                .any(|c| c.steering == flags && c.variant == variant)
            {
                continue;
            }
            out.push_str(flags.label());
            for &s in &scales {
                match self.cell(variant, flags, s) {
                    Some(c) => {
                        let _ = write!(out, ",{:.3}±{:.3}", c.error_mean, c.error_sd);
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Step-by-step aligned position of each variant on one seed, plus the
/// ground-truth path, as `step,series,position` rows.
pub fn alignment_plot_csv(
    plan: &SegmentPlan,
    cfg: &SimConfig,
    variants: &[AlignerVariant],
) -> Result<String, SimError> {
    let mut out = String::from("step,series,position\n");
    for (k, &variant) in variants.iter().enumerate() {
        let res = run_trace_with(
            plan,
            cfg,
            variant,
            SteeringFlags::FULL,
            &MsaConfig::default(),
            &SteerConfig::default(),
        )?;
        for s in res
            .trace
            .steps
            .iter()
            .filter(|s| s.token == TokenClass::Ordinary)
        {
            if k == 0 {
                let _ = writeln!(out, "{},ground_truth,{:.6}", s.step, s.true_pos);
            }
            let _ = writeln!(out, "{},{},{:.6}", s.step, variant, s.expected_pos);
        }
    }
    Ok(out)
}

/// One paired "lhs < rhs" comparison between two cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub lhs: String,
    pub rhs: String,
    pub scale: f64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    /// Mean of `rhs - lhs` over paired traces.
    pub diff: f64,
    pub ci: f64,
    /// The 95% interval of the difference lies above zero.
    pub separated: bool,
}

fn compare(
    table: &SuiteTable,
    lhs: (AlignerVariant, SteeringFlags),
    rhs: (AlignerVariant, SteeringFlags),
    scale: f64,
    metric: fn(&TraceMetrics) -> f64,
    name: fn(AlignerVariant, SteeringFlags) -> String,
) -> Option<Comparison> {
    let a = table.values(lhs.0, lhs.1, scale, metric);
    let b = table.values(rhs.0, rhs.1, scale, metric);
    if a.is_empty() || a.len() != b.len() {
        return None;
    }
    let (diff, ci) = paired_difference(&b, &a);
    Some(Comparison {
        lhs: name(lhs.0, lhs.1),
        rhs: name(rhs.0, rhs.1),
        scale,
        lhs_mean: mean_sd(&a).0,
        rhs_mean: mean_sd(&b).0,
        diff,
        ci,
        separated: diff - ci > 0.0,
    })
}

/// Boundary MAE orderings between aligners at scale 1 with full steering:
/// MSA below max-head MSA, max-head MSA below top-k greedy, MSA below
/// max-head greedy. Pairs with a missing variant are skipped.
pub fn alignment_orderings(table: &SuiteTable) -> Vec<Comparison> {
    use AlignerVariant::*;
    let f = SteeringFlags::FULL;
    [
        (Msa, MaxheadMsa),
        (MaxheadMsa, TopkGreedy),
        (Msa, MaxGreedy),
    ]
    .into_iter()
    .filter_map(|(a, b)| {
        compare(
            table,
            (a, f),
            (b, f),
            1.0,
            |t| t.boundary_mae,
            |v, _| v.to_string(),
        )
    })
    .collect()
}

/// Token-count error orderings of the full stack against each ablation,
/// per scale, with the MSA aligner.
pub fn duration_orderings(table: &SuiteTable) -> Vec<Comparison> {
    let mut scales: Vec<f64> = table.cells.iter().map(|c| c.scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    let v = AlignerVariant::Msa;
    let mut out = Vec::new();
    for s in scales {
        for other in [
            SteeringFlags::NO_LOCAL,
            SteeringFlags::NO_EOS,
            SteeringFlags::NONE,
        ] {
            out.extend(compare(
                table,
                (v, SteeringFlags::FULL),
                (v, other),
                s,
                |t| t.token_error_rate,
                |_, f| f.label().to_string(),
            ));
        }
    }
    out
}

/// Scales at which the baseline has the largest mean error of all flag sets.
pub fn baseline_worst_columns(table: &SuiteTable) -> Vec<f64> {
    let mut scales: Vec<f64> = table.cells.iter().map(|c| c.scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    scales
        .into_iter()
        .filter(|&s| {
            let cells: Vec<&CellSummary> = table
                .cells
                .iter()
                .filter(|c| c.scale == s && c.variant == AlignerVariant::Msa)
                .collect();
            let base = cells.iter().find(|c| c.steering == SteeringFlags::NONE);
            match base {
                Some(b) => cells
                    .iter()
                    .all(|c| c.steering == SteeringFlags::NONE || c.error_mean < b.error_mean),
                None => false,
            }
        })
        .collect()
}
