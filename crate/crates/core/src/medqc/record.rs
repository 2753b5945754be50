//! Wire model for generated prompt records.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMOTIONS: [&str; 7] = [
    "happy",
    "sad",
    "angry",
    "surprised",
    "fearful",
    "disgusted",
    "neutral",
];

pub const CATEGORIES: [&str; 3] = [
    "vivid_descriptive",
    "emotional_dialogue",
    "observational_phrase",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: record must be a JSON object")]
    NotObject { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "ZH")]
    Zh,
}

impl Language {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EN" => Some(Language::En),
            "ZH" => Some(Language::Zh),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "EN",
            Language::Zh => "ZH",
        }
    }

    /// Length in whitespace words (EN) or non-whitespace characters (ZH).
    pub fn length(self, text: &str) -> usize {
        match self {
            Language::En => text.split_whitespace().count(),
            Language::Zh => text.chars().filter(|c| !c.is_whitespace()).count(),
        }
    }

    /// Token sequence used for similarity scoring.
    pub fn tokens(self, text: &str) -> Vec<String> {
        match self {
            Language::En => text.split_whitespace().map(str::to_string).collect(),
            Language::Zh => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Segment time as emitted by the annotator: a decimal string or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeValue {
    Number(f64),
    Text(String),
}

impl TimeValue {
    pub fn seconds(&self) -> Option<f64> {
        let v = match self {
            TimeValue::Number(x) => *x,
            TimeValue::Text(s) => s.trim().trim_end_matches('s').trim().parse().ok()?,
        };
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordSegment {
    #[serde(default)]
    pub lines_seg: Option<String>,
    #[serde(default)]
    pub emotion: Option<String>,
    #[serde(default)]
    pub emotion_description: Option<String>,
    #[serde(default)]
    pub time: Option<TimeValue>,
}

impl RecordSegment {
    pub fn text(&self) -> &str {
        self.lines_seg.as_deref().unwrap_or("")
    }

    /// Lower-cased, trimmed emotion label.
    pub fn emotion_label(&self) -> String {
        self.emotion.as_deref().unwrap_or("").trim().to_lowercase()
    }

    pub fn seconds(&self) -> Option<f64> {
        self.time.as_ref().and_then(TimeValue::seconds)
    }
}

/// One line of the dataset JSONL. Fields are optional so that missing
/// ones surface as validation failures rather than parse errors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub original_text: Option<String>,
    #[serde(default)]
    pub segments: Option<Vec<RecordSegment>>,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub text_category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_sequence: Option<Vec<String>>,
}

impl DatasetRecord {
    pub fn text(&self) -> &str {
        self.original_text.as_deref().unwrap_or("")
    }

    pub fn lang(&self) -> Option<Language> {
        self.language.as_deref().and_then(Language::parse)
    }

    pub fn category(&self) -> &str {
        self.text_category.as_deref().unwrap_or("").trim()
    }

    pub fn segments(&self) -> &[RecordSegment] {
        self.segments.as_deref().unwrap_or(&[])
    }

    /// The declared emotion sequence, or the segment labels when none is given.
    pub fn emotions(&self) -> Vec<String> {
        match &self.emotion_sequence {
            Some(seq) => seq.iter().map(|e| e.trim().to_lowercase()).collect(),
            None => self
                .segments()
                .iter()
                .map(RecordSegment::emotion_label)
                .collect(),
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.segments()
            .iter()
            .filter_map(RecordSegment::seconds)
            .sum()
    }

    pub fn label(&self, index: usize) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("rec-{}", index + 1))
    }

    pub fn from_json(line: &str, line_no: usize) -> Result<Self, ParseError> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| ParseError::Json {
                line: line_no,
                message: e.to_string(),
            })?;
        if !value.is_object() {
            return Err(ParseError::NotObject { line: line_no });
        }
        serde_json::from_value(value).map_err(|e| ParseError::Json {
            line: line_no,
            message: e.to_string(),
        })
    }
}

/// Parses JSONL, skipping blank lines. Records without an `id` get
/// `rec-<line>`.
pub fn parse_jsonl(input: &str) -> Result<Vec<DatasetRecord>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec = DatasetRecord::from_json(line, i + 1)?;
        if rec.id.is_none() {
            rec.id = Some(format!("rec-{}", i + 1));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn to_jsonl(records: &[DatasetRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}
