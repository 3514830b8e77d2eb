use std::path::Path;

use anyhow::Context;
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub options: Value,
    pub seeds: Value,
    pub library_version: String,
    pub cli_version: String,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn start(command: &str, options: Value, seeds: Value) -> Self {
        Self {
            command: command.to_string(),
            options,
            seeds,
            library_version: pairsurv::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: String::new(),
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

/// Stamp the finish time and write `{manifest, result}` as pretty JSON.
pub fn write_document<T: Serialize>(path: &Path, mut manifest: RunManifest, result: &T) -> anyhow::Result<()> {
    manifest.finished_at = now();
    let doc = Document {
        manifest: &manifest,
        result,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
