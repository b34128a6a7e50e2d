use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::Result;
use postkit_core::chat_template::{
    strip_reasoning, truncate_budget, Conversation, StripReport, TruncateReport,
    DEFAULT_REASONING_BUDGETS,
};
use postkit_core::tokenize::WhitespaceTokenizer;
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Report {
    strip: StripReport,
    truncate: TruncateReport,
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    input: &Path,
    out: &Path,
    strip_frac: f64,
    trunc_frac: f64,
    budgets: Option<&[u64]>,
    seed: u64,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("sft-prep");
    builder.input(input)?.seed(seed);

    let budgets: Vec<u64> = budgets
        .map(|b| b.to_vec())
        .unwrap_or_else(|| DEFAULT_REASONING_BUDGETS.to_vec());
    let text = io::read_to_string(input)?;
    let corpus: Vec<Conversation> = postkit_core::jsonl::parse_str(&text)?;

    let (corpus, strip_report) = strip_reasoning(corpus, strip_frac, seed)?;
    let (corpus, truncate_report) =
        truncate_budget(corpus, trunc_frac, &budgets, seed, &WhitespaceTokenizer)?;

    io::write_atomic(out, postkit_core::jsonl::to_string(&corpus)?.as_bytes())?;
    if let Some(path) = report {
        io::write_atomic(
            path,
            &io::to_json_pretty(&Report { strip: strip_report, truncate: truncate_report })?,
        )?;
    }
    builder.finish(&serde_json::json!({
        "strip_frac": strip_frac,
        "trunc_frac": trunc_frac,
        "budgets": budgets,
    }))
}
