//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criterion 3 asks for a nondecreasing expected aligned position in every
//! trace. The filter does not guarantee that (see the counterexample in the
//! core msa tests), so it is reported as FAIL and listed in `KNOWN_FAILURES`.
//! The run exits nonzero if any other criterion fails or if criterion 3
//! starts passing.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segctl_core::duration::{correction, SteerConfig};
use segctl_core::medqc::{dedup, parse_jsonl, validate_all, DedupConfig, QcConfig};
use segctl_core::msa::{
    msa_step, AlignerVariant, AlignmentBelief, AttentionObservation, MsaConfig,
};
use segctl_core::plan::{build_plan, SegmentPlan};
use segctl_core::sim::suite::TraceMetrics;
use segctl_core::sim::{
    alignment_orderings, baseline_worst_columns, default_plans, duration_orderings, run_suite,
    run_trace, SimConfig, SteeringFlags, SuiteSpec, SuiteTable,
};

const KNOWN_FAILURES: &[usize] = &[3];

const SEEDS: usize = 100;
const MONOTONE_TRACES: usize = 1000;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, pass: bool, detail: String) -> Outcome {
    println!(
        "{} {id}. {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    Outcome { id, pass, detail }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn random_mask_case(rng: &mut ChaCha8Rng) -> (SegmentPlan, Vec<usize>, usize) {
    let m = rng.random_range(1..=5);
    let l = rng.random_range(1..=2);
    let t = m + rng.random_range(0..=10);
    let mut bounds: Vec<usize> = rand::seq::index::sample(rng, t - 1, m - 1)
        .into_iter()
        .map(|b| b + 1)
        .collect();
    bounds.sort_unstable();
    let i = rng.random_range(1..=10);
    let mut ids: Vec<usize> = (0..i).map(|_| rng.random_range(1..=m)).collect();
    ids.sort_unstable();
    let plan = build_plan(t, &bounds, l, None).unwrap();
    let active = ids[i - 1];
    ids.pop();
    (plan, ids, active)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let grid = support::exhaustive_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut structural_failures = Vec::new();
    for _ in 0..1000 {
        let (plan, seg_s, active) = random_mask_case(&mut rng);
        if let Err(e) = support::structural(&plan, &seg_s, active) {
            structural_failures.push(e);
        }
    }
    let elapsed = start.elapsed();
    let pass = grid.is_ok() && structural_failures.is_empty() && elapsed < Duration::from_secs(10);
    let detail = match &grid {
        Ok(n) => format!(
            "{n} grid masks equal the oracle, {} of 1000 random plans violate structure, {:.2}s (limit 10s)",
            structural_failures.len(),
            elapsed.as_secs_f64()
        ),
        Err(e) => format!("oracle mismatch: {e}"),
    };
    report(1, "mask oracle equivalence", pass, detail)
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = v.iter().sum::<f64>().max(1e-9);
    v.into_iter().map(|x| x / s).collect()
}

fn criterion_2(traces: &[&TraceMetrics]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = MsaConfig::default();
    let mut worst: f64 = 0.0;
    let mut head_mismatch = 0;
    for _ in 0..500 {
        let t = rng.random_range(1..=6);
        let post = simplex(&mut rng, t);
        let att: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..2).map(|_| simplex(&mut rng, t)).collect())
            .collect();
        let flat: Vec<f64> = att.iter().flatten().flatten().copied().collect();
        let obs = AttentionObservation::new(2, 2, t, flat).unwrap();
        let belief = AlignmentBelief {
            prior: vec![0.0; t],
            posterior: post.clone(),
        };
        let (got, head) = msa_step(&belief, &obs, &cfg).unwrap();
        let want = support::brute_msa_step(&post, &att, 0.1, 1.2, 4, 1e-8);
        if (head.layer, head.head) != want.head {
            head_mismatch += 1;
        }
        for (a, b) in got
            .prior
            .iter()
            .zip(&want.prior)
            .chain(got.posterior.iter().zip(&want.posterior))
        {
            worst = worst.max((a - b).abs());
        }
    }
    let norm = traces.iter().map(|t| t.max_norm_error).fold(0.0, f64::max);
    let pass = worst <= 1e-12 && head_mismatch == 0 && norm <= 1e-9;
    report(
        2,
        "MSA numerical oracle",
        pass,
        format!(
            "500 steps, max deviation {worst:.1e} (tol 1e-12), {head_mismatch} head mismatches; \
             max posterior normalisation error {norm:.1e} over {} traces (tol 1e-9)",
            traces.len()
        ),
    )
}

fn criterion_3(table: &SuiteTable) -> Outcome {
    let n = table.traces.len();
    let bad_segments = table.traces.iter().filter(|t| !t.trace_valid).count();
    let with_decrease = table
        .traces
        .iter()
        .filter(|t| t.expected_pos_decreases > 0)
        .count();
    let decreases: usize = table.traces.iter().map(|t| t.expected_pos_decreases).sum();
    let pass = n >= MONOTONE_TRACES && bad_segments == 0 && with_decrease == 0;
    report(
        3,
        "monotonic switching",
        pass,
        format!(
            "{n} traces: {bad_segments} with segment regressions or skips; \
             {with_decrease} with a decrease of the expected position ({decreases} steps)"
        ),
    )
}

fn criterion_4(table: &SuiteTable, elapsed: Duration) -> Outcome {
    let cmp = alignment_orderings(table);
    let all = cmp.len() == 3 && cmp.iter().all(|c| c.separated);
    let parts: Vec<String> = cmp
        .iter()
        .map(|c| {
            format!(
                "{} {:.4} < {} {:.4} (diff {:.4} ± {:.4})",
                c.lhs, c.lhs_mean, c.rhs, c.rhs_mean, c.diff, c.ci
            )
        })
        .collect();
    let pass = all && elapsed < Duration::from_secs(120);
    report(
        4,
        "alignment ordering",
        pass,
        format!(
            "{SEEDS} seeds x 3 plans; {}; {:.1}s (limit 120s)",
            parts.join("; "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5(table: &SuiteTable) -> Outcome {
    let cmp = duration_orderings(table);
    let failed: Vec<String> = cmp
        .iter()
        .filter(|c| !c.separated)
        .map(|c| format!("full !< {} at x{}", c.rhs, c.scale))
        .collect();
    let worst = baseline_worst_columns(table);
    let base = SimConfig::default().noise_free();
    let noise_free: Vec<f64> = default_plans()
        .iter()
        .map(|p| {
            run_trace(p, &base, AlignerVariant::Msa, SteeringFlags::FULL)
                .unwrap()
                .token_error_rate
        })
        .collect();
    let nf_max = noise_free.iter().copied().fold(0.0, f64::max);
    let pass = cmp.len() == 15 && failed.is_empty() && worst.len() >= 4 && nf_max < 2.0;
    report(
        5,
        "duration ordering",
        pass,
        format!(
            "{SEEDS} seeds x 3 plans x 5 scales; {} of 15 full-stack comparisons separated{}; \
             baseline worst in {}/5 columns; noise-free full-stack error max {nf_max:.3}% (limit 2%)",
            cmp.len() - failed.len(),
            if failed.is_empty() { String::new() } else { format!(" (missing: {})", failed.join(", ")) },
            worst.len()
        ),
    )
}

fn criterion_6(traces: &[&TraceMetrics]) -> Outcome {
    let leaks = traces.iter().filter(|t| !t.eos_in_final_segment).count();
    let eos = SteerConfig::default().eos;
    let mut prev = f64::NEG_INFINITY;
    let mut grid_errors = Vec::new();
    for k in 0..=150 {
        let rho = k as f64 / 100.0;
        let b = eos.final_bias(rho);
        if !(-5.0..=15.0).contains(&b) {
            grid_errors.push(format!("out of range at {rho}"));
        }
        if (0.8..=1.1).contains(&rho) && b != 0.0 {
            grid_errors.push(format!("nonzero at {rho}"));
        }
        if b < prev {
            grid_errors.push(format!("decreasing at {rho}"));
        }
        prev = b;
    }
    let pass = leaks == 0 && grid_errors.is_empty();
    report(
        6,
        "EOS safety",
        pass,
        format!(
            "{leaks} of {} traces emit EOS outside the final segment; bias grid issues: {}",
            traces.len(),
            if grid_errors.is_empty() {
                "none".into()
            } else {
                grid_errors.join(", ")
            }
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = SteerConfig::default();
    let mismatches: Vec<f64> = (-1000..=1000)
        .map(|k| k as f64 / 1000.0)
        .filter(|&dr| correction(dr, &cfg) != support::correction_oracle(dr, 25.0, 0.01, 10))
        .collect();
    report(
        7,
        "controller algebra",
        mismatches.is_empty(),
        format!("2001 grid points, {} mismatches", mismatches.len()),
    )
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn criterion_8() -> Outcome {
    let dir = fixtures();
    let records = parse_jsonl(&fs::read_to_string(dir.join("qc_40.jsonl")).unwrap()).unwrap();
    let expected = read_csv(&dir.join("qc_40_expected.csv"));
    let reports = validate_all(&records, &QcConfig::default());
    let mut wrong = Vec::new();
    for (row, rep) in expected.iter().zip(&reports) {
        let verdict = if rep.passed() { "pass" } else { "fail" };
        let rules: Vec<&str> = rep.rules().iter().map(|r| r.as_str()).collect();
        let want_rules: Vec<&str> = if row[2].is_empty() {
            vec![]
        } else {
            vec![row[2].as_str()]
        };
        if rep.id != row[0] || verdict != row[1] || rules != want_rules {
            wrong.push(row[0].clone());
        }
    }
    let qc_ok = wrong.is_empty() && expected.len() == 40 && reports.len() == 40;

    let drecs = parse_jsonl(&fs::read_to_string(dir.join("dedup_10.jsonl")).unwrap()).unwrap();
    let dexp = read_csv(&dir.join("dedup_10_expected.csv"));
    let want: BTreeSet<&str> = dexp
        .iter()
        .filter(|r| r[1] == "dropped")
        .map(|r| r[0].as_str())
        .collect();
    let cfg = DedupConfig::default();
    let res = dedup(&drecs, &cfg);
    let got: BTreeSet<&str> = res.dropped.iter().map(|d| d.id.as_str()).collect();
    let kept = res.kept_records(&drecs);
    let again = dedup(&kept, &cfg);
    let dedup_ok = want.len() == 3 && got == want && again.dropped.is_empty();
    report(
        8,
        "dataset QC fixtures",
        qc_ok && dedup_ok,
        format!(
            "{} of 40 verdicts match{}; dedup dropped {:?} (expected {:?}); second pass drops {}",
            40 - wrong.len(),
            if wrong.is_empty() {
                String::new()
            } else {
                format!(" (wrong: {})", wrong.join(","))
            },
            got,
            want,
            again.dropped.len()
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_segctl");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let run = |args: &[&str]| {
        Command::new(bin)
            .current_dir(tmp.path())
            .env_remove("SEGCTL_OUT_DIR")
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
    };
    let first = run(&[
        "--out-dir",
        out.to_str().unwrap(),
        "simulate",
        "--seeds",
        "0..9",
    ]);
    let original = snapshot(&out);
    let manifest = tmp.path().join("manifest.json");
    fs::copy(out.join("manifest.json"), &manifest).unwrap();

    let mut runs = Vec::new();
    for _ in 0..2 {
        fs::remove_dir_all(&out).unwrap();
        let code = run(&["replay", manifest.to_str().unwrap()]);
        runs.push((code, snapshot(&out)));
    }
    let identical = runs.iter().all(|(c, s)| *c == Some(0) && *s == original);
    let pass = first == Some(0) && original.len() > 1 && identical;
    report(
        9,
        "determinism",
        pass,
        format!(
            "{} output files from simulate --seeds 0..9; two replays from the manifest {}",
            original.len(),
            if identical {
                "byte-identical"
            } else {
                "differ"
            }
        ),
    )
}

fn main() -> ExitCode {
    let plans = default_plans();
    let base = SimConfig::default();

    let start = Instant::now();
    let align = run_suite(&plans, &SuiteSpec::alignment(base.clone()), SEEDS).unwrap();
    let align_time = start.elapsed();
    let duration = run_suite(&plans, &SuiteSpec::duration(base.clone()), SEEDS).unwrap();
    let monotone = run_suite(
        &plans,
        &SuiteSpec::default(),
        MONOTONE_TRACES.div_ceil(plans.len()),
    )
    .unwrap();
    let all: Vec<&TraceMetrics> = align
        .traces
        .iter()
        .chain(&duration.traces)
        .chain(&monotone.traces)
        .collect();

    let outcomes = vec![
        criterion_1(),
        criterion_2(&all),
        criterion_3(&monotone),
        criterion_4(&align, align_time),
        criterion_5(&duration),
        criterion_6(&all),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ];

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", outcomes.len());
    let mut ok = true;
    for o in &outcomes {
        let known = KNOWN_FAILURES.contains(&o.id);
        if o.pass && known {
            println!("criterion {} passed but is listed as a known failure", o.id);
            ok = false;
        } else if !o.pass && !known {
            println!("criterion {} failed: {}", o.id, o.detail);
            ok = false;
        } else if !o.pass {
            println!("criterion {} is a known failure", o.id);
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
