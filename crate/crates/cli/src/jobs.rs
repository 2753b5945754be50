//! Resolved jobs and the files each one writes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use segctl_core::duration::SteerConfig;
use segctl_core::mask::{build_mask, dump_mask, dump_stem};
use segctl_core::medqc::{
    dedup, parse_jsonl, sample_for_review, stats, to_jsonl, validate_all, DedupConfig, QcConfig,
};
use segctl_core::msa::{AlignerVariant, MsaConfig};
use segctl_core::plan::SegmentPlan;
use segctl_core::sim::suite::alignment_plot_csv;
use segctl_core::sim::{
    alignment_orderings, baseline_worst_columns, default_plans, duration_orderings, run_suite,
    Comparison, SimConfig, SteeringFlags, SuiteSpec, SuiteTable, DURATION_SCALES,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Job {
    MaskDump(MaskDumpJob),
    Simulate(ExperimentJob),
    AblateAlign(ExperimentJob),
    AblateDuration(ExperimentJob),
    Dataset(DatasetJob),
}

impl Job {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Job::MaskDump(_) => "mask-dump",
            Job::Simulate(_) => "simulate",
            Job::AblateAlign(_) => "ablate-align",
            Job::AblateDuration(_) => "ablate-duration",
            Job::Dataset(d) => match d.op {
                DatasetOp::Validate => "dataset validate",
                DatasetOp::Dedup => "dataset dedup",
                DatasetOp::Stats => "dataset stats",
                DatasetOp::Sample => "dataset sample",
            },
        }
    }

    pub fn seeds(&self) -> Option<[u64; 2]> {
        match self {
            Job::MaskDump(_) => None,
            Job::Simulate(e) | Job::AblateAlign(e) | Job::AblateDuration(e) => Some(e.seeds),
            Job::Dataset(d) => (d.op == DatasetOp::Sample).then_some([d.seed, d.seed]),
        }
    }

    /// Runs the job, writing its outputs into `out`. Returns the exit code.
    pub fn run(&self, out: &Path) -> Result<u8, CliError> {
        match self {
            Job::MaskDump(j) => j.run(out),
            Job::Simulate(e) => e.run(out, true, true),
            Job::AblateAlign(e) => e.run(out, true, false),
            Job::AblateDuration(e) => e.run(out, false, true),
            Job::Dataset(d) => d.run(out),
        }
    }
}

pub fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDumpJob {
    pub plan: SegmentPlan,
    pub step: usize,
    /// Segment ids of tokens `1..step`.
    pub seg_s: Vec<usize>,
    pub active: usize,
}

impl MaskDumpJob {
    /// Assigns the `step` generated tokens to segments: by cumulative budget
    /// when the plan has budgets, evenly otherwise.
    pub fn resolve(
        plan: SegmentPlan,
        step: usize,
        seg_s: Option<Vec<usize>>,
    ) -> Result<Self, CliError> {
        if step == 0 {
            return Err(CliError::Usage("--step must be >= 1".into()));
        }
        let ids = match seg_s {
            Some(ids) => ids,
            None => {
                let m = plan.num_segments();
                let cum = plan.cumulative_budgets().ok();
                (1..=step)
                    .map(|r| match &cum {
                        Some(c) => c.iter().position(|&b| r <= b).map_or(m, |k| k + 1),
                        None => ((r * m).div_ceil(step)).clamp(1, m),
                    })
                    .collect()
            }
        };
        if ids.len() != step {
            return Err(CliError::Usage(format!(
                "--seg-s needs {step} ids (the last one is the active segment), got {}",
                ids.len()
            )));
        }
        let active = ids[step - 1];
        Ok(MaskDumpJob {
            plan,
            step,
            seg_s: ids[..step - 1].to_vec(),
            active,
        })
    }

    fn run(&self, out: &Path) -> Result<u8, CliError> {
        let mask = build_mask(&self.plan, &self.seg_s, self.step, self.active)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let (txt, csv) = dump_mask(&mask);
        let stem = dump_stem(&mask);
        write(out, &format!("{stem}.txt"), &txt)?;
        write(out, &format!("{stem}.csv"), &csv)?;
        println!(
            "{stem}: {} rows, {} isolated condition blocks",
            mask.size(),
            mask.isolated_condition_blocks()
        );
        Ok(0)
    }
}

/// Simulator grid. The alignment suite runs every variant with full
/// steering at scale 1; the duration suite runs every flag set and scale
/// with the MSA aligner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentJob {
    pub plans: Vec<SegmentPlan>,
    /// Inclusive.
    pub seeds: [u64; 2],
    pub base: SimConfig,
    pub variants: Vec<AlignerVariant>,
    pub flags: Vec<SteeringFlags>,
    pub scales: Vec<f64>,
    pub msa: MsaConfig,
    pub steer: SteerConfig,
}

impl Default for ExperimentJob {
    fn default() -> Self {
        ExperimentJob {
            plans: default_plans(),
            seeds: [0, 99],
            base: SimConfig::default(),
            variants: SuiteSpec::alignment(SimConfig::default()).variants,
            flags: SteeringFlags::ALL.to_vec(),
            scales: DURATION_SCALES.to_vec(),
            msa: MsaConfig::default(),
            steer: SteerConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    traces: usize,
    invalid_traces: usize,
    eos_outside_final_segment: usize,
    expected_position_decreases: usize,
    max_norm_error: f64,
    alignment: &'a [Comparison],
    duration: &'a [Comparison],
    baseline_worst_scales: &'a [f64],
}

impl ExperimentJob {
    pub fn repeats(&self) -> Result<usize, CliError> {
        let [a, b] = self.seeds;
        if b < a {
            return Err(CliError::Usage(format!("empty seed range {a}..{b}")));
        }
        Ok((b - a + 1) as usize)
    }

    fn base(&self) -> SimConfig {
        SimConfig {
            seed: self.seeds[0],
            ..self.base.clone()
        }
    }

    pub fn alignment_spec(&self) -> SuiteSpec {
        SuiteSpec {
            base: self.base(),
            variants: self.variants.clone(),
            flags: vec![SteeringFlags::FULL],
            scales: vec![1.0],
            msa: self.msa,
            steer: self.steer,
        }
    }

    pub fn duration_spec(&self) -> SuiteSpec {
        SuiteSpec {
            base: self.base(),
            variants: vec![AlignerVariant::Msa],
            flags: self.flags.clone(),
            scales: self.scales.clone(),
            msa: self.msa,
            steer: self.steer,
        }
    }

    fn run(&self, out: &Path, align: bool, duration: bool) -> Result<u8, CliError> {
        let repeats = self.repeats()?;
        if self.plans.is_empty() {
            return Err(CliError::Usage("no plans configured".into()));
        }
        let mut tables: Vec<&SuiteTable> = Vec::new();
        let mut align_cmp = Vec::new();
        let mut dur_cmp = Vec::new();
        let mut worst = Vec::new();

        let a_table;
        if align && !self.variants.is_empty() {
            a_table = run_suite(&self.plans, &self.alignment_spec(), repeats)?;
            write(out, "alignment_cells.csv", &a_table.cells_csv())?;
            write(out, "alignment_traces.csv", &a_table.traces_csv())?;
            write(out, "alignment_mae.txt", &mae_table(&a_table))?;
            let plot = alignment_plot_csv(&self.plans[0], &self.base(), &self.variants)?;
            write(out, "alignment_plot.csv", &plot)?;
            print!("{}", mae_table(&a_table));
            align_cmp = alignment_orderings(&a_table);
            tables.push(&a_table);
        }
        let d_table;
        if duration && !self.flags.is_empty() && !self.scales.is_empty() {
            d_table = run_suite(&self.plans, &self.duration_spec(), repeats)?;
            let err = d_table.error_table(AlignerVariant::Msa);
            write(out, "duration_cells.csv", &d_table.cells_csv())?;
            write(out, "duration_traces.csv", &d_table.traces_csv())?;
            write(out, "duration_error.txt", &err)?;
            print!("{err}");
            dur_cmp = duration_orderings(&d_table);
            worst = baseline_worst_columns(&d_table);
            tables.push(&d_table);
        }

        let traces = tables.iter().flat_map(|t| &t.traces);
        let summary = Summary {
            traces: traces.clone().count(),
            invalid_traces: traces.clone().filter(|t| !t.trace_valid).count(),
            eos_outside_final_segment: traces.clone().filter(|t| !t.eos_in_final_segment).count(),
            expected_position_decreases: traces.clone().map(|t| t.expected_pos_decreases).sum(),
            max_norm_error: traces.map(|t| t.max_norm_error).fold(0.0, f64::max),
            alignment: &align_cmp,
            duration: &dur_cmp,
            baseline_worst_scales: &worst,
        };
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        write(out, "summary.json", &json)?;
        Ok(0)
    }
}

fn mae_table(table: &SuiteTable) -> String {
    let mut out = String::from("variant,boundary_mae\n");
    for c in &table.cells {
        let _ = writeln!(out, "{},{:.4}±{:.4}", c.variant, c.mae_mean, c.mae_sd);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetOp {
    Validate,
    Dedup,
    Stats,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetJob {
    pub op: DatasetOp,
    pub input: PathBuf,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub qc: QcConfig,
    #[serde(default)]
    pub dedup: DedupConfig,
}

impl DatasetJob {
    fn run(&self, out: &Path) -> Result<u8, CliError> {
        let text = fs::read_to_string(&self.input).map_err(|e| CliError::io(&self.input, e))?;
        let records = parse_jsonl(&text).map_err(|e| CliError::Parse {
            what: self.input.display().to_string(),
            message: e.to_string(),
        })?;
        match self.op {
            DatasetOp::Validate => {
                let reports = validate_all(&records, &self.qc);
                let mut jsonl = String::new();
                for r in &reports {
                    jsonl.push_str(&serde_json::to_string(r).expect("report serializes"));
                    jsonl.push('\n');
                }
                write(out, "reports.jsonl", &jsonl)?;
                let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
                for r in &failed {
                    let rules: Vec<&str> = r.rules().iter().map(|x| x.as_str()).collect();
                    println!("FAIL {} {}", r.id, rules.join(","));
                }
                let warnings: usize = reports.iter().map(|r| r.warnings.len()).sum();
                eprintln!(
                    "checked {}, passed {}, failed {}, warnings {}",
                    reports.len(),
                    reports.len() - failed.len(),
                    failed.len(),
                    warnings
                );
                if self.strict && !failed.is_empty() {
                    return Err(CliError::Strict(failed.len()));
                }
            }
            DatasetOp::Dedup => {
                let res = dedup(&records, &self.dedup);
                write(out, "kept.jsonl", &to_jsonl(&res.kept_records(&records)))?;
                write(out, "dropped.csv", &res.drop_csv(&records))?;
                println!("kept {}, dropped {}", res.kept.len(), res.dropped.len());
            }
            DatasetOp::Stats => {
                let st = stats(&records);
                let mut json = serde_json::to_string_pretty(&st).expect("stats serialize");
                json.push('\n');
                write(out, "stats.json", &json)?;
                write(out, "stats.txt", &st.to_table())?;
                print!("{}", st.to_table());
            }
            DatasetOp::Sample => {
                let rep = sample_for_review(&records, self.n, self.seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let picked: Vec<_> = rep.indices.iter().map(|&i| records[i].clone()).collect();
                write(out, "sample.jsonl", &to_jsonl(&picked))?;
                let mut json = serde_json::to_string_pretty(&rep).expect("report serializes");
                json.push('\n');
                write(out, "sample_report.json", &json)?;
                for (&i, r) in rep.indices.iter().zip(&picked) {
                    println!("{}", r.label(i));
                }
            }
        }
        Ok(0)
    }
}
