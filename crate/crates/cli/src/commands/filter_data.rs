use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::{Context, Result};
use postkit_core::chat_template::Conversation;
use postkit_core::data_filter::{
    classify_sample, collect_report, default_alignment_patterns, AlignmentPattern,
    RepetitionConfig,
};
use postkit_core::tokenize::WhitespaceTokenizer;
use postkit_core::KvConfig;
use rayon::prelude::*;
use std::path::Path;

fn repetition_from(kv: &KvConfig) -> Result<RepetitionConfig> {
    let d = RepetitionConfig::default();
    Ok(RepetitionConfig {
        ngram: kv.usize_or("ngram", d.ngram)?,
        window: kv.usize_or("window", d.window)?,
        window_threshold: kv.usize_or("window_threshold", d.window_threshold)?,
        global_threshold: kv.usize_or("global_threshold", d.global_threshold)?,
    })
}

fn patterns_from(kv: &KvConfig) -> Result<Vec<AlignmentPattern>> {
    let include_defaults = kv
        .get("include_default_patterns")
        .is_none_or(|v| v != "false");
    let mut patterns = if include_defaults {
        default_alignment_patterns()
    } else {
        Vec::new()
    };
    for (id, value) in kv.group("pattern") {
        patterns.push(AlignmentPattern::new(id, &value)?);
    }
    Ok(patterns)
}

pub fn run(
    input: &Path,
    out: &Path,
    report_path: &Path,
    rules: Option<&Path>,
    workers: usize,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("filter-data");
    builder.input(input)?;
    if let Some(rules) = rules {
        builder.input(rules)?;
    }
    let kv = super::load_config(rules)?;
    let repetition = repetition_from(&kv)?;
    let patterns = patterns_from(&kv)?;

    let text = io::read_to_string(input)?;
    let raw_lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let convs: Vec<Conversation> = postkit_core::jsonl::parse_str(&text)?;

    let pool = super::worker_pool(workers)?;
    let verdicts = pool.install(|| {
        convs
            .par_iter()
            .map(|conv| {
                classify_sample(conv, &repetition, &patterns, &WhitespaceTokenizer)
                    .map_err(anyhow::Error::from)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let outcome = collect_report(&verdicts);

    // Kept samples keep their original bytes.
    let mut kept_lines = String::new();
    for &idx in &outcome.kept_indices {
        kept_lines.push_str(raw_lines[idx]);
        kept_lines.push('\n');
    }
    io::write_atomic(out, kept_lines.as_bytes())?;
    io::write_atomic(report_path, &io::to_json_pretty(&outcome.report)?)
        .context("writing filter report")?;
    builder.finish(&serde_json::json!({
        "repetition": repetition,
        "patterns": patterns.iter().map(|p| (&p.id, p.regex.as_str())).collect::<Vec<_>>(),
        "workers": workers,
    }))
}
