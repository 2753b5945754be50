//! Pluggable generation backend. Only an offline stub ships.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::Language;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("no generation backend configured")]
    BackendUnavailable,
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRequest {
    pub language: Language,
    pub text_category: String,
    pub emotion_sequence: Vec<String>,
}

pub trait GenerationBackend: Send + Sync {
    /// Raw JSON text for one candidate record.
    fn generate(&self, template: &str, request: &RecordRequest) -> Result<String, ClientError>;
}

const STUB_EN: &str = r#"{"original_text": "Warm light drifts around me, a sudden sharp gust jolts the calm, and a muted heaviness settles quietly over my thoughts.", "segments": [{"lines_seg": "Warm light drifts around me, ", "emotion": "happy", "emotion_description": "bright lilting voice with gentle upward pitch", "time": "1.4"}, {"lines_seg": "a sudden sharp gust jolts the calm, ", "emotion": "surprised", "emotion_description": "quick breathy onset with sharply raised pitch", "time": "1.8"}, {"lines_seg": "and a muted heaviness settles quietly over my thoughts.", "emotion": "sad", "emotion_description": "low soft voice with slow falling cadence", "time": "2.6"}], "language": "EN", "text_category": "vivid_descriptive", "emotion_sequence": ["happy", "surprised", "sad"]}"#;

const STUB_ZH: &str = r#"{"original_text": "阳光洒满小院，巨响突然打破宁静，心慢慢沉了下去。", "segments": [{"lines_seg": "阳光洒满小院，", "emotion": "happy", "emotion_description": "语调轻快明亮，尾音上扬", "time": "2.0"}, {"lines_seg": "巨响突然打破宁静，", "emotion": "surprised", "emotion_description": "起音急促，音调骤然升高", "time": "2.2"}, {"lines_seg": "心慢慢沉了下去。", "emotion": "sad", "emotion_description": "声音低沉缓慢，语气下沉", "time": "2.4"}], "language": "ZH", "text_category": "vivid_descriptive", "emotion_sequence": ["happy", "surprised", "sad"]}"#;

/// Returns a canned record per language regardless of the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl GenerationBackend for StubBackend {
    fn generate(&self, _template: &str, request: &RecordRequest) -> Result<String, ClientError> {
        Ok(match request.language {
            Language::En => STUB_EN,
            Language::Zh => STUB_ZH,
        }
        .to_string())
    }
}

#[derive(Default)]
pub struct GenerationClient {
    backend: Option<Box<dyn GenerationBackend>>,
}

impl GenerationClient {
    pub fn new(backend: Box<dyn GenerationBackend>) -> Self {
        Self {
            backend: Some(backend),
        }
    }

    pub fn stub() -> Self {
        Self::new(Box::new(StubBackend))
    }

    pub fn generate(&self, template: &str, request: &RecordRequest) -> Result<String, ClientError> {
        self.backend
            .as_ref()
            .ok_or(ClientError::BackendUnavailable)?
            .generate(template, request)
    }
}
