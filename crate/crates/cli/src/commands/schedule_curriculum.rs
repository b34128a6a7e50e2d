use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::{bail, Context, Result};
use postkit_core::curriculum::{sample_batch, CurriculumConfig, TaskProfile};
use serde::Serialize;
use std::ops::Range;
use std::path::Path;

/// `A..B` (half-open) or a single step `K`.
fn parse_steps(spec: &str) -> Result<Range<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let start: u64 = a.trim().parse().context("step range start")?;
        let end: u64 = b.trim().parse().context("step range end")?;
        if end <= start {
            bail!("empty step range {spec:?}");
        }
        Ok(start..end)
    } else {
        let step: u64 = spec.trim().parse().context("step index")?;
        Ok(step..step + 1)
    }
}

#[derive(Serialize)]
struct Report {
    steps: u64,
    batch_size: usize,
    replacement_fallback_steps: usize,
}

pub fn run(
    profiles_path: &Path,
    config_path: &Path,
    steps: &str,
    seed: Option<u64>,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("schedule-curriculum");
    builder.input(profiles_path)?.input(config_path)?;

    let kv = super::load_config(Some(config_path))?;
    let mut cfg = CurriculumConfig::from_config(&kv)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    builder.seed(cfg.seed);

    let profiles: Vec<TaskProfile> =
        postkit_core::jsonl::parse_str(&io::read_to_string(profiles_path)?)?;
    let range = parse_steps(steps)?;

    let mut plans = Vec::new();
    for step in range.clone() {
        plans.push(sample_batch(&profiles, &cfg, step).with_context(|| format!("step {step}"))?);
    }
    let fallback_steps = plans.iter().filter(|p| !p.replacement_fallback.is_empty()).count();
    io::write_output(out, postkit_core::jsonl::to_string(&plans)?.as_bytes())?;
    if let Some(path) = report {
        io::write_atomic(
            path,
            &io::to_json_pretty(&Report {
                steps: range.end - range.start,
                batch_size: cfg.batch_size,
                replacement_fallback_steps: fallback_steps,
            })?,
        )?;
    }
    builder.finish(&cfg)
}
