use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::Result;
use postkit_core::curriculum::prompt_sensitivity;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Deserialize)]
struct AccuracyRow {
    #[allow(dead_code)]
    prompt_id: Option<String>,
    accuracies: Vec<f64>,
}

#[derive(Serialize)]
struct Output {
    prompts: usize,
    prompt_sensitivity: f64,
}

pub fn run(input: &Path, out: Option<&Path>, report: Option<&Path>) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("prompt-sensitivity");
    builder.input(input)?;
    let rows: Vec<AccuracyRow> = postkit_core::jsonl::parse_str(&io::read_to_string(input)?)?;
    let matrix: Vec<Vec<f64>> = rows.into_iter().map(|r| r.accuracies).collect();
    let value = prompt_sensitivity(&matrix)?;
    let output = Output {
        prompts: matrix.len(),
        prompt_sensitivity: value,
    };
    let mut line = serde_json::to_vec(&output)?;
    line.push(b'\n');
    io::write_output(out, &line)?;
    if let Some(path) = report {
        io::write_atomic(path, &io::to_json_pretty(&output)?)?;
    }
    builder.finish(&serde_json::json!({ "prompts": matrix.len() }))
}
