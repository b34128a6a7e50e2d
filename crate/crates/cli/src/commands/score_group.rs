use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::{bail, Context, Result};
use postkit_core::reward_engine::{
    base_rewards, final_rewards, tiebreak, LengthControlConfig, PairVerdict, ResponseGroup,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Verdict line: `prompt_id` is optional for single-group files.
#[derive(Debug, Deserialize)]
struct VerdictLine {
    prompt_id: Option<String>,
    #[serde(flatten)]
    verdict: PairVerdict,
}

#[derive(Debug, Serialize)]
struct BreakdownLine<'a> {
    prompt_id: &'a str,
    id: usize,
    base: f64,
    length_adj_think: f64,
    length_adj_answer: f64,
    bonus: f64,
    #[serde(rename = "final")]
    final_reward: f64,
}

#[derive(Serialize)]
struct Report {
    groups: usize,
    responses: usize,
    config: LengthControlConfig,
}

pub fn run(
    group_path: &Path,
    verdicts_path: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("score-group");
    builder.input(group_path)?.input(verdicts_path)?;
    if let Some(cfg_path) = config {
        builder.input(cfg_path)?;
    }
    let kv = super::load_config(config)?;
    let cfg = LengthControlConfig::from_config(&kv)?;
    cfg.validate()?;

    let groups: Vec<ResponseGroup> =
        postkit_core::jsonl::parse_str(&io::read_to_string(group_path)?)?;
    let verdict_lines: Vec<VerdictLine> =
        postkit_core::jsonl::parse_str(&io::read_to_string(verdicts_path)?)?;

    let mut by_prompt: BTreeMap<&str, Vec<PairVerdict>> = BTreeMap::new();
    for (i, line) in verdict_lines.iter().enumerate() {
        line.verdict
            .validate()
            .with_context(|| format!("verdict record {i}"))?;
        let prompt = match (&line.prompt_id, groups.len()) {
            (Some(id), _) => id.as_str(),
            (None, 1) => groups[0].prompt_id.as_str(),
            (None, _) => bail!(
                "verdict record {i} has no prompt_id but the group file holds {} groups",
                groups.len()
            ),
        };
        by_prompt.entry(prompt).or_default().push(line.verdict);
    }

    let mut lines = String::new();
    let mut responses = 0usize;
    for group in &groups {
        let verdicts = by_prompt
            .remove(group.prompt_id.as_str())
            .unwrap_or_default();
        let tiebroken: Vec<PairVerdict> = verdicts.into_iter().map(tiebreak).collect();
        let base = base_rewards(group, &tiebroken)
            .with_context(|| format!("group {}", group.prompt_id))?;
        let breakdowns = final_rewards(group, &base, &cfg)
            .with_context(|| format!("group {}", group.prompt_id))?;
        for (response, b) in group.responses.iter().zip(&breakdowns) {
            let line = BreakdownLine {
                prompt_id: &group.prompt_id,
                id: response.id,
                base: b.base,
                length_adj_think: b.length_adj_think,
                length_adj_answer: b.length_adj_answer,
                bonus: b.bonus,
                final_reward: b.final_reward,
            };
            lines.push_str(&serde_json::to_string(&line)?);
            lines.push('\n');
            responses += 1;
        }
    }
    if let Some((prompt, _)) = by_prompt.into_iter().next() {
        bail!("verdicts reference unknown prompt_id {prompt:?}");
    }

    io::write_output(out, lines.as_bytes())?;
    if let Some(path) = report {
        io::write_atomic(
            path,
            &io::to_json_pretty(&Report { groups: groups.len(), responses, config: cfg })?,
        )?;
    }
    builder.finish(&cfg)
}
