//! Artifact files and their metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Bumped whenever a CSV or JSON layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// The configuration minus where and how wide it ran; results do not
/// depend on either.
fn experiment(cfg: &RunConfig) -> RunConfig {
    RunConfig { output: None, threads: 0, ..cfg.clone() }
}

/// Hash of the experiment configuration's canonical JSON.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(&serde_json::to_vec(&experiment(cfg)).expect("config serializes"))
}

#[derive(Serialize)]
struct Meta<'a> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    subcommand: &'a str,
    seed: Option<u64>,
    config_hash: String,
    artifact: String,
    artifact_sha256: String,
    config: RunConfig,
}

/// Where one subcommand writes.
pub struct Sink<'a> {
    pub dir: PathBuf,
    pub subcommand: &'a str,
    pub cfg: &'a RunConfig,
}

impl<'a> Sink<'a> {
    pub fn new(subcommand: &'a str, cfg: &'a RunConfig) -> anyhow::Result<Self> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, subcommand, cfg })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `bytes` to `name` plus `name.meta.json`.
    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let meta = Meta {
            schema_version: SCHEMA_VERSION,
            tool: "predbench",
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            seed: self.cfg.seed,
            config_hash: config_hash(self.cfg),
            artifact: name.to_string(),
            artifact_sha256: sha256_hex(bytes),
            config: experiment(self.cfg),
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        let meta_path = sidecar(&path);
        fs::write(&meta_path, text).with_context(|| format!("writing {}", meta_path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
