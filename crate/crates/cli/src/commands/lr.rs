use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::Result;
use postkit_core::curriculum::{wsd_lr, WsdConfig};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Output {
    tokens: u64,
    lr: f64,
}

pub fn run(
    tokens: u64,
    config_path: &Path,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("lr");
    builder.input(config_path)?;
    let kv = super::load_config(Some(config_path))?;
    let cfg = WsdConfig::from_config(&kv)?;
    let lr = wsd_lr(tokens, &cfg)?;
    let output = Output { tokens, lr };
    let mut line = serde_json::to_vec(&output)?;
    line.push(b'\n');
    io::write_output(out, &line)?;
    if let Some(path) = report {
        io::write_atomic(path, &io::to_json_pretty(&output)?)?;
    }
    builder.finish(&cfg)
}
