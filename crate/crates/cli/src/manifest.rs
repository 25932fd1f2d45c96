use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use fdrcast_core::digest::sha256_hex;
use fdrcast_core::hypertune::write_atomic;
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to rerun a command: written before any result file and
/// rewritten with the finish time once the command succeeds.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub params: Value,
    pub seeds: BTreeMap<String, u64>,
    pub input_digests: BTreeMap<String, String>,
    pub started_unix_s: f64,
    pub finished_unix_s: Option<f64>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, params: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: std::env::args().collect(),
            params: serde_json::to_value(params)?,
            seeds: BTreeMap::new(),
            input_digests: BTreeMap::new(),
            started_unix_s: unix_now(),
            finished_unix_s: None,
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    /// Records the SHA-256 of an input file and returns its bytes.
    pub fn digest_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        self.input_digests
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let text = serde_json::to_string_pretty(self)? + "\n";
        write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<()> {
        self.finished_unix_s = Some(unix_now());
        self.write(out_dir)
    }
}
