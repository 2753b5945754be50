//! Rule-based record validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::{DatasetRecord, Language, CATEGORIES, EMOTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    JsonCompleteness,
    TextLength,
    SegmentCount,
    EmotionVocab,
    EmotionOrder,
    Reconstruction,
    DescriptionLength,
    SegDuration,
    TotalDuration,
    /// Warning only.
    PerWordDuration,
}

impl Rule {
    pub const ALL: [Rule; 9] = [
        Rule::JsonCompleteness,
        Rule::TextLength,
        Rule::SegmentCount,
        Rule::EmotionVocab,
        Rule::EmotionOrder,
        Rule::Reconstruction,
        Rule::DescriptionLength,
        Rule::SegDuration,
        Rule::TotalDuration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::JsonCompleteness => "json_completeness",
            Rule::TextLength => "text_length",
            Rule::SegmentCount => "segment_count",
            Rule::EmotionVocab => "emotion_vocab",
            Rule::EmotionOrder => "emotion_order",
            Rule::Reconstruction => "reconstruction",
            Rule::DescriptionLength => "description_length",
            Rule::SegDuration => "seg_duration",
            Rule::TotalDuration => "total_duration",
            Rule::PerWordDuration => "per_word_duration",
        }
    }

    pub fn parse(s: &str) -> Option<Rule> {
        Rule::ALL
            .into_iter()
            .chain([Rule::PerWordDuration])
            .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub id: String,
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn rules(&self) -> Vec<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }
}

/// Inclusive windows. Text and description lengths are words for EN and
/// non-whitespace characters for ZH.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub en_text_words: (usize, usize),
    pub zh_text_chars: (usize, usize),
    pub segment_count: (usize, usize),
    pub en_description_words: (usize, usize),
    pub zh_description_chars: (usize, usize),
    pub segment_seconds: (f64, f64),
    pub total_seconds: (f64, f64),
    /// Seconds per EN word; out-of-window segments only produce a warning.
    pub per_word_seconds: Option<(f64, f64)>,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            en_text_words: (15, 25),
            zh_text_chars: (15, 25),
            segment_count: (2, 3),
            en_description_words: (5, 25),
            zh_description_chars: (5, 30),
            segment_seconds: (0.3, 8.0),
            total_seconds: (5.0, 13.0),
            per_word_seconds: Some((0.18, 0.30)),
        }
    }
}

fn within<T: PartialOrd>(x: T, (lo, hi): (T, T)) -> bool {
    x >= lo && x <= hi
}

fn completeness(rec: &DatasetRecord) -> Vec<String> {
    let mut missing = Vec::new();
    if rec.text().trim().is_empty() {
        missing.push("original_text missing or empty".to_string());
    }
    match rec.language.as_deref() {
        None => missing.push("language missing".into()),
        Some(l) if rec.lang().is_none() => missing.push(format!("unknown language {l:?}")),
        _ => {}
    }
    match rec.text_category.as_deref() {
        None => missing.push("text_category missing".into()),
        Some(_) if !CATEGORIES.contains(&rec.category()) => {
            missing.push(format!("unknown text_category {:?}", rec.category()))
        }
        _ => {}
    }
    match &rec.segments {
        None => missing.push("segments missing".into()),
        Some(segs) if segs.is_empty() => missing.push("segments empty".into()),
        Some(segs) => {
            for (k, s) in segs.iter().enumerate() {
                let k = k + 1;
                if s.lines_seg.as_deref().is_none_or(|t| t.trim().is_empty()) {
                    missing.push(format!("segment {k}: lines_seg missing or empty"));
                }
                if s.emotion.as_deref().is_none_or(|t| t.trim().is_empty()) {
                    missing.push(format!("segment {k}: emotion missing"));
                }
                if s.emotion_description
                    .as_deref()
                    .is_none_or(|t| t.trim().is_empty())
                {
                    missing.push(format!("segment {k}: emotion_description missing or empty"));
                }
                if s.seconds().is_none() {
                    missing.push(format!("segment {k}: time missing or not a number"));
                }
            }
        }
    }
    missing
}

fn reconstructs(rec: &DatasetRecord, lang: Language) -> bool {
    let text = rec.text();
    let joined: String = rec.segments().iter().map(|s| s.text()).collect();
    if joined == text {
        return true;
    }
    let sep = match lang {
        Language::En => " ",
        Language::Zh => "",
    };
    let trimmed: Vec<&str> = rec.segments().iter().map(|s| s.text().trim()).collect();
    trimmed.join(sep) == text.trim()
}

/// Checks one record. A record missing required fields reports only
/// `json_completeness`.
pub fn validate(rec: &DatasetRecord, index: usize, cfg: &QcConfig) -> ValidationReport {
    let id = rec.label(index);
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut fail = |rule: Rule, message: String| violations.push(Violation { rule, message });

    let missing = completeness(rec);
    if !missing.is_empty() {
        fail(Rule::JsonCompleteness, missing.join("; "));
        return ValidationReport {
            id,
            verdict: Verdict::Fail,
            violations,
            warnings,
        };
    }
    let lang = rec.lang().expect("checked above");
    let segs = rec.segments();

    let len = lang.length(rec.text());
    let window = match lang {
        Language::En => cfg.en_text_words,
        Language::Zh => cfg.zh_text_chars,
    };
    if !within(len, window) {
        fail(
            Rule::TextLength,
            format!("text length {len} outside {}-{}", window.0, window.1),
        );
    }

    if !within(segs.len(), cfg.segment_count) {
        fail(
            Rule::SegmentCount,
            format!(
                "{} segments, expected {}-{}",
                segs.len(),
                cfg.segment_count.0,
                cfg.segment_count.1
            ),
        );
    }

    let labels: Vec<String> = segs.iter().map(|s| s.emotion_label()).collect();
    let mut unknown: Vec<&str> = labels
        .iter()
        .map(String::as_str)
        .filter(|l| !EMOTIONS.contains(l))
        .collect();
    if let Some(seq) = &rec.emotion_sequence {
        for e in seq {
            let e = e.trim();
            if !EMOTIONS.contains(&e.to_lowercase().as_str()) {
                unknown.push(e);
            }
        }
    }
    if !unknown.is_empty() {
        fail(
            Rule::EmotionVocab,
            format!("unknown emotion labels {unknown:?}"),
        );
    }

    if let Some(seq) = &rec.emotion_sequence {
        let seq: Vec<String> = seq.iter().map(|e| e.trim().to_lowercase()).collect();
        if seq != labels {
            fail(
                Rule::EmotionOrder,
                format!("segment emotions {labels:?} do not match sequence {seq:?}"),
            );
        }
    }

    if !reconstructs(rec, lang) {
        fail(
            Rule::Reconstruction,
            "segments do not reconstruct original_text".into(),
        );
    }

    let dwin = match lang {
        Language::En => cfg.en_description_words,
        Language::Zh => cfg.zh_description_chars,
    };
    for (k, s) in segs.iter().enumerate() {
        let d = lang.length(s.emotion_description.as_deref().unwrap_or(""));
        if !within(d, dwin) {
            fail(
                Rule::DescriptionLength,
                format!(
                    "segment {}: description length {d} outside {}-{}",
                    k + 1,
                    dwin.0,
                    dwin.1
                ),
            );
        }
    }

    for (k, s) in segs.iter().enumerate() {
        let t = s.seconds().expect("checked above");
        if !within(t, cfg.segment_seconds) {
            fail(
                Rule::SegDuration,
                format!(
                    "segment {}: {t} s outside {}-{} s",
                    k + 1,
                    cfg.segment_seconds.0,
                    cfg.segment_seconds.1
                ),
            );
        }
        if let (Some(w), Language::En) = (cfg.per_word_seconds, lang) {
            let words = lang.length(s.text());
            if words > 0 && !within(t / words as f64, w) {
                warnings.push(Violation {
                    rule: Rule::PerWordDuration,
                    message: format!(
                        "segment {}: {:.3} s/word outside {}-{}",
                        k + 1,
                        t / words as f64,
                        w.0,
                        w.1
                    ),
                });
            }
        }
    }

    let total = rec.total_seconds();
    if !within(total, cfg.total_seconds) {
        fail(
            Rule::TotalDuration,
            format!(
                "total {total} s outside {}-{} s",
                cfg.total_seconds.0, cfg.total_seconds.1
            ),
        );
    }

    let verdict = if violations.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    ValidationReport {
        id,
        verdict,
        violations,
        warnings,
    }
}

pub fn validate_all(records: &[DatasetRecord], cfg: &QcConfig) -> Vec<ValidationReport> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| validate(r, i, cfg))
        .collect()
}
