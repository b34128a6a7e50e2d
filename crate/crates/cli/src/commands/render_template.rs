use crate::manifest::{ManifestBuilder, RunManifest};
use crate::{io, ModeArg};
use anyhow::{Context, Result};
use postkit_core::chat_template::{render, Conversation, ReasoningMode};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    conversations: usize,
    reasoning_spans: usize,
}

pub fn run(
    input: &Path,
    mode: ModeArg,
    out: Option<&Path>,
    workers: usize,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("render-template");
    builder.input(input)?;

    let text = io::read_to_string(input)?;
    let mut convs: Vec<Conversation> = postkit_core::jsonl::parse_str(&text)?;
    let forced = match mode {
        ModeArg::On => ReasoningMode::On,
        ModeArg::Off => ReasoningMode::Off,
    };
    for conv in &mut convs {
        conv.reasoning_mode = forced;
    }

    let pool = super::worker_pool(workers)?;
    let rendered = pool.install(|| {
        convs
            .par_iter()
            .enumerate()
            .map(|(i, conv)| render(conv).with_context(|| format!("conversation {i}")))
            .collect::<Result<Vec<_>>>()
    })?;

    let span_count = rendered.iter().map(|r| r.included_reasoning_spans.len()).sum();
    io::write_output(out, postkit_core::jsonl::to_string(&rendered)?.as_bytes())?;
    if let Some(path) = report {
        io::write_atomic(
            path,
            &io::to_json_pretty(&Report {
                conversations: rendered.len(),
                reasoning_spans: span_count,
            })?,
        )?;
    }
    builder.finish(&serde_json::json!({ "mode": mode, "workers": workers }))
}
