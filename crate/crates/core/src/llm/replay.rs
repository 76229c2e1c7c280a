// SPDX-License-Identifier: Apache-2.0

//! Recorded exchanges, one JSON file per key.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Identifies one exchange: `<provider>/<model>/<name>.<variant>.json`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplayKey {
    pub provider: String,
    pub model: String,
    pub name: String,
    pub variant: String,
}

impl std::fmt::Display for ReplayKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}.{}", self.provider, self.model, self.name, self.variant)
    }
}

/// Maps an identifier onto a single safe path component.
fn component(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if out.is_empty() || out.starts_with('.') {
        out.insert(0, '_');
    }
    out
}

impl ReplayKey {
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(component(&self.provider))
            .join(component(&self.model))
            .join(format!("{}.{}.json", component(&self.name), component(&self.variant)))
    }
}

/// What is stored per key. Exactly one of `response` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayStore {
    root: PathBuf,
}

impl ReplayStore {
    pub fn new(root: impl Into<PathBuf>) -> ReplayStore {
        ReplayStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, key: &ReplayKey) -> PathBuf {
        self.root.join(key.relative_path())
    }

    pub fn load(&self, key: &ReplayKey) -> Result<ReplayEntry> {
        let path = self.path(key);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Load {
            path: path.clone(),
            detail: format!("replay miss for {key}: {e}"),
        })?;
        let entry: ReplayEntry = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if entry.response.is_some() == entry.error.is_some() {
            return Err(Error::Load { path, detail: "entry needs exactly one of response and error".into() });
        }
        Ok(entry)
    }

    pub fn record(&self, key: &ReplayKey, request: Value, outcome: std::result::Result<&str, &str>) -> Result<()> {
        let path = self.path(key);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let (response, error) = match outcome {
            Ok(r) => (Some(r.to_string()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = ReplayEntry { request, response, error, timestamp };
        let mut text = serde_json::to_string_pretty(&entry)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
