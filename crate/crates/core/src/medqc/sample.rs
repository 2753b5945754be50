//! Seeded stratified sampling for manual review.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::DatasetRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("requested {requested} records but only {available} are available")]
    TooFew { requested: usize, available: usize },
}

/// (language, category, segment count)
pub type StratumKey = (String, String, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumAllocation {
    pub language: String,
    pub category: String,
    pub segments: usize,
    pub available: usize,
    /// Equal share before any reallocation.
    pub nominal: usize,
    pub allocated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub seed: u64,
    pub requested: usize,
    /// Input indices, ascending.
    pub indices: Vec<usize>,
    /// Every combination of observed languages, categories and segment
    /// counts, including empty ones.
    pub strata: Vec<StratumAllocation>,
    /// Units moved off empty strata.
    pub reallocated_from_empty: usize,
    /// Units moved off strata smaller than their share.
    pub reallocated_from_short: usize,
}

fn key(rec: &DatasetRecord) -> StratumKey {
    (
        rec.lang().map_or("unknown".into(), |l| l.to_string()),
        rec.category().to_string(),
        rec.segments().len(),
    )
}

/// Largest-remainder split of `units` proportional to `weights`; ties go to
/// the lower index.
fn apportion(units: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 || units == 0 {
        return vec![0; weights.len()];
    }
    let mut out: Vec<usize> = weights.iter().map(|&w| units * w / total).collect();
    let mut rem: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| ((units * w) % total, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = units - out.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(left) {
        out[i] += 1;
    }
    out
}

/// Equal share per stratum, with the share of empty strata handed to the
/// others in proportion to their size and any overflow of small strata
/// handed on in proportion to spare capacity.
pub fn sample_for_review(
    records: &[DatasetRecord],
    n: usize,
    seed: u64,
) -> Result<SampleReport, SampleError> {
    if n > records.len() {
        return Err(SampleError::TooFew {
            requested: n,
            available: records.len(),
        });
    }
    let mut members: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        members.entry(key(r)).or_default().push(i);
    }
    let mut langs: Vec<String> = members.keys().map(|k| k.0.clone()).collect();
    let mut cats: Vec<String> = members.keys().map(|k| k.1.clone()).collect();
    let mut counts: Vec<usize> = members.keys().map(|k| k.2).collect();
    langs.dedup();
    cats.sort();
    cats.dedup();
    counts.sort_unstable();
    counts.dedup();
    let mut grid: Vec<StratumKey> = Vec::new();
    for l in &langs {
        for c in &cats {
            for &s in &counts {
                grid.push((l.clone(), c.clone(), s));
            }
        }
    }
    let avail: Vec<usize> = grid
        .iter()
        .map(|k| members.get(k).map_or(0, Vec::len))
        .collect();

    let k = grid.len().max(1);
    let nominal: Vec<usize> = (0..grid.len())
        .map(|i| n / k + usize::from(i < n % k))
        .collect();
    let mut alloc = nominal.clone();
    let mut from_empty = 0;
    for (a, &v) in alloc.iter_mut().zip(&avail) {
        if v == 0 {
            from_empty += *a;
            *a = 0;
        }
    }
    for (a, extra) in alloc.iter_mut().zip(apportion(from_empty, &avail)) {
        *a += extra;
    }
    let mut from_short = 0;
    loop {
        let mut excess = 0;
        for (a, &v) in alloc.iter_mut().zip(&avail) {
            if *a > v {
                excess += *a - v;
                *a = v;
            }
        }
        if excess == 0 {
            break;
        }
        from_short += excess;
        let spare: Vec<usize> = alloc.iter().zip(&avail).map(|(a, v)| v - a).collect();
        for (a, extra) in alloc.iter_mut().zip(apportion(excess, &spare)) {
            *a += extra;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::with_capacity(n);
    for (key, &a) in grid.iter().zip(&alloc) {
        if a == 0 {
            continue;
        }
        let pool = &members[key];
        indices.extend(
            index::sample(&mut rng, pool.len(), a)
                .into_iter()
                .map(|j| pool[j]),
        );
    }
    indices.sort_unstable();

    let strata = grid
        .into_iter()
        .enumerate()
        .map(|(i, (language, category, segments))| StratumAllocation {
            language,
            category,
            segments,
            available: avail[i],
            nominal: nominal[i],
            allocated: alloc[i],
        })
        .collect();
    Ok(SampleReport {
        seed,
        requested: n,
        indices,
        strata,
        reallocated_from_empty: from_empty,
        reallocated_from_short: from_short,
    })
}
