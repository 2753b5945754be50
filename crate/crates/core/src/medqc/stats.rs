//! Distribution summaries over validated records.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::record::{DatasetRecord, Language};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmotionStats {
    pub segments: usize,
    /// Mean EN segment length in words.
    pub mean_words_en: Option<f64>,
    /// Mean ZH segment length in characters.
    pub mean_chars_zh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsReport {
    pub records: usize,
    pub by_language: BTreeMap<String, usize>,
    pub by_category: BTreeMap<String, usize>,
    pub by_segment_count: BTreeMap<usize, usize>,
    pub emotions: BTreeMap<String, EmotionStats>,
    pub total_seconds: f64,
    pub total_hours: f64,
}

pub fn stats(records: &[DatasetRecord]) -> StatsReport {
    let mut r = StatsReport {
        records: records.len(),
        ..Default::default()
    };
    // (segments, en words, en count, zh chars, zh count)
    let mut acc: BTreeMap<String, (usize, usize, usize, usize, usize)> = BTreeMap::new();
    for rec in records {
        let lang = rec.lang();
        let lang_key = lang.map_or("unknown".to_string(), |l| l.to_string());
        *r.by_language.entry(lang_key).or_default() += 1;
        *r.by_category.entry(rec.category().to_string()).or_default() += 1;
        *r.by_segment_count.entry(rec.segments().len()).or_default() += 1;
        r.total_seconds += rec.total_seconds();
        for seg in rec.segments() {
            let e = acc.entry(seg.emotion_label()).or_default();
            e.0 += 1;
            match lang {
                Some(Language::En) => {
                    e.1 += Language::En.length(seg.text());
                    e.2 += 1;
                }
                Some(Language::Zh) => {
                    e.3 += Language::Zh.length(seg.text());
                    e.4 += 1;
                }
                None => {}
            }
        }
    }
    let mean = |sum: usize, n: usize| (n > 0).then(|| sum as f64 / n as f64);
    r.emotions = acc
        .into_iter()
        .map(|(k, (n, ew, en, zc, zn))| {
            (
                k,
                EmotionStats {
                    segments: n,
                    mean_words_en: mean(ew, en),
                    mean_chars_zh: mean(zc, zn),
                },
            )
        })
        .collect();
    r.total_hours = r.total_seconds / 3600.0;
    r
}

impl StatsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records        {}", self.records);
        let _ = writeln!(
            s,
            "total duration {:.2} s ({:.4} h)",
            self.total_seconds, self.total_hours
        );
        let _ = writeln!(s, "\nlanguage");
        for (k, v) in &self.by_language {
            let _ = writeln!(s, "  {k:<22} {v:>6}");
        }
        let _ = writeln!(s, "\ncategory");
        for (k, v) in &self.by_category {
            let _ = writeln!(s, "  {k:<22} {v:>6}");
        }
        let _ = writeln!(s, "\nsegments per record");
        for (k, v) in &self.by_segment_count {
            let _ = writeln!(s, "  {k:<22} {v:>6}");
        }
        let _ = writeln!(
            s,
            "\nemotion                segments  mean_words_en  mean_chars_zh"
        );
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        for (k, e) in &self.emotions {
            let _ = writeln!(
                s,
                "  {k:<20} {:>9}  {:>13}  {:>13}",
                e.segments,
                fmt(e.mean_words_en),
                fmt(e.mean_chars_zh)
            );
        }
        s
    }
}
