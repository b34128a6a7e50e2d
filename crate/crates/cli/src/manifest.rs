//! Run manifests: enough metadata to audit that a run is reproducible.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Digest of the effective configuration (defaults + file + flags).
    pub config_digest: String,
    pub seed: Option<u64>,
    /// Content digest of every input file the run read.
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
}

pub struct ManifestBuilder {
    subcommand: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed: None,
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Record and digest an input file.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading input {}", path.display()))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(self)
    }

    /// Finish with the effective config serialized as canonical JSON.
    pub fn finish<C: Serialize>(self, effective_config: &C) -> Result<RunManifest> {
        let config_json =
            serde_json::to_string(effective_config).context("serializing effective config")?;
        Ok(RunManifest {
            subcommand: self.subcommand,
            config_digest: sha256_hex(config_json.as_bytes()),
            seed: self.seed,
            input_digests: self.inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
