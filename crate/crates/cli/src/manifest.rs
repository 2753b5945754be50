//! Run manifests: the resolved job written before any output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jobs::Job;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Job,
    /// Inclusive seed range, for subcommands that draw random numbers.
    pub seeds: Option<[u64; 2]>,
    pub out_dir: PathBuf,
    pub version: String,
    /// RFC 3339, UTC. Not read back by `replay`.
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(config: Job, out_dir: &Path) -> Self {
        RunManifest {
            subcommand: config.subcommand().to_string(),
            seeds: config.seeds(),
            config,
            out_dir: out_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<(RunManifest, String), CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok((m, text))
    }
}
