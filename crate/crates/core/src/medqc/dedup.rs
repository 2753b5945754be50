//! Exact and near-duplicate filtering.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::record::{DatasetRecord, Language};
use super::similarity::similarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub overall_threshold: f64,
    pub opening_threshold: f64,
    pub opening_tokens: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            overall_threshold: 0.85,
            opening_threshold: 0.5,
            opening_tokens: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Exact,
    Overall,
    Opening,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Exact => "exact",
            DropReason::Overall => "overall",
            DropReason::Opening => "opening",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    /// Index of the dropped record in the input.
    pub index: usize,
    pub id: String,
    pub reason: DropReason,
    /// Input index of the earlier record it collided with.
    pub duplicate_of: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupResult {
    /// Input indices of kept records, in input order.
    pub kept: Vec<usize>,
    pub dropped: Vec<Dropped>,
}

impl DedupResult {
    pub fn kept_records(&self, records: &[DatasetRecord]) -> Vec<DatasetRecord> {
        self.kept.iter().map(|&i| records[i].clone()).collect()
    }

    pub fn drop_csv(&self, records: &[DatasetRecord]) -> String {
        let mut s = String::from("index,id,reason,duplicate_of,score\n");
        for d in &self.dropped {
            s.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                d.index,
                d.id,
                d.reason.as_str(),
                records[d.duplicate_of].label(d.duplicate_of),
                d.score
            ));
        }
        s
    }
}

fn tokens(rec: &DatasetRecord) -> Vec<String> {
    rec.lang().unwrap_or(Language::En).tokens(rec.text())
}

/// Removes byte-identical texts, then near duplicates among records that
/// share an emotion sequence. Earlier records win.
pub fn dedup(records: &[DatasetRecord], cfg: &DedupConfig) -> DedupResult {
    let mut result = DedupResult::default();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut groups: BTreeMap<Vec<String>, Vec<(usize, Vec<String>)>> = BTreeMap::new();

    let mut unique = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        match seen.get(rec.text()) {
            Some(&j) => result.dropped.push(Dropped {
                index: i,
                id: rec.label(i),
                reason: DropReason::Exact,
                duplicate_of: j,
                score: 1.0,
            }),
            None => {
                seen.insert(rec.text(), i);
                unique.push(i);
            }
        }
    }

    for i in unique {
        let rec = &records[i];
        let toks = tokens(rec);
        let group = groups.entry(rec.emotions()).or_default();
        let mut hit = None;
        for (j, other) in group.iter() {
            let overall = similarity(&toks, other).unwrap_or(0.0);
            if overall >= cfg.overall_threshold {
                hit = Some((DropReason::Overall, *j, overall));
                break;
            }
            let n = cfg.opening_tokens;
            let a = &toks[..toks.len().min(n)];
            let b = &other[..other.len().min(n)];
            let opening = similarity(a, b).unwrap_or(0.0);
            if opening >= cfg.opening_threshold {
                hit = Some((DropReason::Opening, *j, opening));
                break;
            }
        }
        match hit {
            Some((reason, j, score)) => result.dropped.push(Dropped {
                index: i,
                id: rec.label(i),
                reason,
                duplicate_of: j,
                score,
            }),
            None => {
                group.push((i, toks));
                result.kept.push(i);
            }
        }
    }
    result.dropped.sort_by_key(|d| d.index);
    result
}
