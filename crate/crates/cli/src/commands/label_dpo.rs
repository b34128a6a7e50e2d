use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::Result;
use postkit_core::data_filter::{label_dpo_pairs, RolloutLabel};
use std::path::Path;

pub fn run(
    rollouts_path: &Path,
    out: &Path,
    seed: u64,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("label-dpo");
    builder.input(rollouts_path)?.seed(seed);

    let rollouts: Vec<RolloutLabel> =
        postkit_core::jsonl::parse_str(&io::read_to_string(rollouts_path)?)?;
    let (pairs, label_report) = label_dpo_pairs(&rollouts, seed);

    io::write_atomic(out, postkit_core::jsonl::to_string(&pairs)?.as_bytes())?;
    if let Some(path) = report {
        io::write_atomic(path, &io::to_json_pretty(&label_report)?)?;
    }
    builder.finish(&serde_json::json!({ "rollouts": rollouts.len() }))
}
