//! `segctl`: mask dumps, simulator experiments and dataset QC.
//!
//! Exit codes: 0 ok, 1 strict validation failure, 2 usage or parse error,
//! 3 runtime failure (including a trace that never terminates).

mod jobs;
mod manifest;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;

use segctl_core::medqc::{DedupConfig, QcConfig};
use segctl_core::msa::AlignerVariant;
use segctl_core::plan::SegmentPlan;
use segctl_core::sim::SimError;

use jobs::{DatasetJob, DatasetOp, ExperimentJob, Job, MaskDumpJob};
use manifest::{RunManifest, MANIFEST_FILE};

pub const OUT_DIR_ENV: &str = "SEGCTL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "segctl-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0} record(s) failed validation")]
    Strict(usize),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Strict(_) => 1,
            CliError::Usage(_) | CliError::Parse { .. } => 2,
            CliError::Sim(SimError::Config(_)) => 2,
            CliError::Io { .. } | CliError::Sim(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "segctl",
    version,
    about = "Segment-level decoding control toolkit"
)]
struct Cli {
    /// Output directory [default: $SEGCTL_OUT_DIR, else ./segctl-out]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the attention mask at one decoding step as text and CSV.
    MaskDump {
        /// Plan JSON: {text_len, boundaries, cond_block_len, duration_budgets}
        #[arg(long)]
        plan: PathBuf,
        /// Decoding step i (number of semantic tokens, including the current one).
        #[arg(long)]
        step: usize,
        /// Segment id of each of the i tokens, comma separated. Defaults to
        /// the plan's budgets, or an even split.
        #[arg(long, value_delimiter = ',')]
        seg_s: Option<Vec<usize>>,
    },
    /// Alignment and duration experiments on the synthetic decoder.
    Simulate(ExperimentArgs),
    /// Aligner comparison only.
    AblateAlign(ExperimentArgs),
    /// Steering ablation over duration scales only.
    AblateDuration(ExperimentArgs),
    /// Dataset quality control on a JSONL file.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Re-run the job recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inclusive seed range, e.g. 0..99.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<[u64; 2]>,
    /// Aligner variants for the alignment suite.
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<AlignerVariant>>,
    /// Attention noise level; 0 selects the noise-free decoder.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    input: PathBuf,
    /// JSON object with optional `qc` and `dedup` sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Check every record against the QC rules.
    Validate {
        #[command(flatten)]
        args: DatasetArgs,
        /// Exit 1 when any record fails.
        #[arg(long)]
        strict: bool,
    },
    /// Drop exact and near duplicates.
    Dedup {
        #[command(flatten)]
        args: DatasetArgs,
    },
    /// Corpus statistics.
    Stats {
        #[command(flatten)]
        args: DatasetArgs,
    },
    /// Stratified sample for manual review.
    Sample {
        #[command(flatten)]
        args: DatasetArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(default)]
struct DatasetConfig {
    qc: QcConfig,
    dedup: DedupConfig,
}

fn parse_seeds(s: &str) -> Result<[u64; 2], String> {
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("{x:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b) = (parse(a)?, parse(b)?);
            if b < a {
                return Err(format!("empty seed range {s}"));
            }
            Ok([a, b])
        }
        None => parse(s).map(|a| [a, a]),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}

fn experiment(args: ExperimentArgs) -> Result<ExperimentJob, CliError> {
    let mut job: ExperimentJob = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentJob::default(),
    };
    if let Some(s) = args.seeds {
        job.seeds = s;
    }
    if let Some(v) = args.variant {
        job.variants = v;
    }
    match args.noise {
        Some(0.0) => job.base = job.base.noise_free(),
        Some(x) => job.base.attention_noise = x,
        None => {}
    }
    job.repeats()?;
    Ok(job)
}

fn dataset(op: DatasetOp, args: DatasetArgs) -> Result<DatasetJob, CliError> {
    let cfg: DatasetConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => DatasetConfig::default(),
    };
    let input = fs::canonicalize(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    Ok(DatasetJob {
        op,
        input,
        strict: false,
        n: 0,
        seed: 0,
        qc: cfg.qc,
        dedup: cfg.dedup,
    })
}

fn resolve(command: Command) -> Result<Job, CliError> {
    Ok(match command {
        Command::MaskDump { plan, step, seg_s } => {
            let plan: SegmentPlan = read_json(&plan)?;
            Job::MaskDump(MaskDumpJob::resolve(plan, step, seg_s)?)
        }
        Command::Simulate(a) => Job::Simulate(experiment(a)?),
        Command::AblateAlign(a) => Job::AblateAlign(experiment(a)?),
        Command::AblateDuration(a) => Job::AblateDuration(experiment(a)?),
        Command::Dataset(d) => Job::Dataset(match d {
            DatasetCommand::Validate { args, strict } => DatasetJob {
                strict,
                ..dataset(DatasetOp::Validate, args)?
            },
            DatasetCommand::Dedup { args } => dataset(DatasetOp::Dedup, args)?,
            DatasetCommand::Stats { args } => dataset(DatasetOp::Stats, args)?,
            DatasetCommand::Sample { args, n, seed } => DatasetJob {
                n,
                seed,
                ..dataset(DatasetOp::Sample, args)?
            },
        }),
        Command::Replay { .. } => unreachable!("replay is handled before resolve"),
    })
}

fn prepare(out: &Path, manifest_text: &str) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    jobs::write(out, MANIFEST_FILE, manifest_text)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (job, out, text) = match cli.command {
        Command::Replay { manifest } => {
            let (m, text) = RunManifest::load(&manifest)?;
            let out = cli.out_dir.unwrap_or(m.out_dir);
            (m.config, out, text)
        }
        command => {
            let out = cli
                .out_dir
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            let job = resolve(command)?;
            let text = RunManifest::new(job.clone(), &out).to_json();
            (job, out, text)
        }
    };
    prepare(&out, &text)?;
    job.run(&out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("segctl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
