use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.json";

static PROCESS_START: OnceLock<(Instant, SystemTime)> = OnceLock::new();

/// Record the process start; call first thing in `main`.
pub fn mark_start() {
    PROCESS_START.get_or_init(|| (Instant::now(), SystemTime::now()));
}

/// Record of one run. Wall-clock fields are the only nondeterministic
/// content of an output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub template: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub out: String,
    pub engine_version: String,
    pub schema_version: u64,
    pub files: Vec<String>,
    pub started_unix_s: u64,
    pub wall_clock_ms: u128,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

fn start() -> (Instant, SystemTime) {
    *PROCESS_START.get_or_init(|| (Instant::now(), SystemTime::now()))
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, out: &Path) -> ManifestBuilder {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                template: None,
                inputs: BTreeMap::new(),
                seed,
                out: out.display().to_string(),
                engine_version: env!("CARGO_PKG_VERSION").to_string(),
                schema_version: segar_core::init::template::SCHEMA_VERSION,
                files: Vec::new(),
                started_unix_s: start()
                    .1
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_clock_ms: 0,
            },
            started: start().0,
        }
    }

    pub fn template(&mut self, name: &str) -> &mut Self {
        self.manifest.template = Some(name.to_string());
        self
    }

    pub fn input(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.manifest.inputs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn file(&mut self, name: impl Into<String>) -> &mut Self {
        self.manifest.files.push(name.into());
        self
    }

    pub fn write(mut self, out: &Path) -> Result<()> {
        self.manifest.files.sort();
        self.manifest.wall_clock_ms = self.started.elapsed().as_millis();
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = out.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
