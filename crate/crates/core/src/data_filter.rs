//! SFT data filtering and DPO preference labeling.
//!
//! The filtering pipeline runs structural, repetition, and alignment checks in
//! that order; a rejected sample is attributed to the first rule it fails, so
//! the report counts always reconcile with the input count.

use crate::chat_template::{parse_tool_calls, Conversation, Role};
use crate::config::ConfigError;
use crate::rng;
use crate::tokenize::Tokenizer;
use rand::Rng;
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("repetition config: ngram must be >= 2 and thresholds >= 2")]
    BadRepetitionConfig,
    #[error("hallucination rate needs a non-empty corpus")]
    EmptyCorpus,
}

/// Why a sample failed the structural check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructuralFailure {
    /// An assistant message issues tool calls while no system message
    /// declares any tools.
    UndeclaredToolCall { message_index: usize },
    /// Role sequence or per-message field constraints are violated.
    MalformedRoles { message_index: usize, detail: String },
}

/// Structural check: malformed roles, or tool calls without tool definitions.
pub fn structural_check(conv: &Conversation) -> Result<(), StructuralFailure> {
    if let Err(err) = conv.validate_structure() {
        let (index, detail) = match &err {
            crate::chat_template::TemplateError::MalformedStructure { index, detail } => {
                (*index, detail.clone())
            }
            other => (0, other.to_string()),
        };
        return Err(StructuralFailure::MalformedRoles {
            message_index: index,
            detail,
        });
    }
    if !conv.tools_declared() {
        if let Some(index) = conv
            .messages
            .iter()
            .position(|m| m.role == Role::Assistant && !m.tool_calls.is_empty())
        {
            return Err(StructuralFailure::UndeclaredToolCall { message_index: index });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionConfig {
    pub ngram: usize,
    /// Sliding window size in tokens.
    pub window: usize,
    /// Occurrences of one n-gram within a window that trigger a failure.
    pub window_threshold: usize,
    /// Occurrences across the whole stream that trigger a failure.
    pub global_threshold: usize,
}

impl Default for RepetitionConfig {
    fn default() -> Self {
        // Catches degenerate loops without flagging ordinary refrains.
        Self {
            ngram: 8,
            window: 512,
            window_threshold: 4,
            global_threshold: 8,
        }
    }
}

impl RepetitionConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.ngram < 2 || self.window_threshold < 2 || self.global_threshold < 2 {
            return Err(FilterError::BadRepetitionConfig);
        }
        Ok(())
    }
}

/// Evidence of pathological repetition: the offending n-gram and the start
/// positions of its occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionWitness<T> {
    pub ngram: Vec<T>,
    pub positions: Vec<usize>,
    pub scope: RepetitionScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepetitionScope {
    Window,
    Global,
}

/// Fail if any n-gram occurs `window_threshold` times with starts inside one
/// `window`-token span, or `global_threshold` times anywhere. Occurrences are
/// counted by start position, so overlapping repeats count.
///
/// The witness is deterministic: the first n-gram (scanning left to right)
/// whose occurrence crosses a threshold.
pub fn repetition_check<T: Eq + std::hash::Hash + Clone>(
    tokens: &[T],
    cfg: &RepetitionConfig,
) -> Result<Result<(), RepetitionWitness<T>>, FilterError> {
    cfg.validate()?;
    if tokens.len() < cfg.ngram {
        return Ok(Ok(()));
    }
    let mut positions: std::collections::HashMap<&[T], Vec<usize>> =
        std::collections::HashMap::new();
    for start in 0..=tokens.len() - cfg.ngram {
        let gram = &tokens[start..start + cfg.ngram];
        let seen = positions.entry(gram).or_default();
        seen.push(start);
        let witness = |scope| {
            Err(RepetitionWitness {
                ngram: gram.to_vec(),
                positions: seen.clone(),
                scope,
            })
        };
        if seen.len() >= cfg.global_threshold {
            return Ok(witness(RepetitionScope::Global));
        }
        if seen.len() >= cfg.window_threshold {
            let newest = seen[seen.len() - 1];
            let oldest_in_reach = seen[seen.len() - cfg.window_threshold];
            if newest - oldest_in_reach < cfg.window {
                return Ok(witness(RepetitionScope::Window));
            }
        }
    }
    Ok(Ok(()))
}

/// A compiled alignment filter pattern. Matching is case-insensitive.
#[derive(Debug, Clone)]
pub struct AlignmentPattern {
    pub id: String,
    pub regex: regex::Regex,
}

impl AlignmentPattern {
    pub fn new(id: impl Into<String>, pattern: &str) -> Result<Self, ConfigError> {
        let id = id.into();
        let regex = RegexBuilder::new(pattern)
            .case_insensitive(true)
            .build()
            .map_err(|source| ConfigError::BadPattern {
                key: id.clone(),
                source,
            })?;
        Ok(Self { id, regex })
    }
}

/// The stock patterns targeting nationalistic or political alignment phrasing.
pub fn default_alignment_patterns() -> Vec<AlignmentPattern> {
    vec![
        AlignmentPattern::new("our-nation-party", r"\bour\s+(nation|party)\b")
            .expect("static pattern compiles"),
        AlignmentPattern::new("our-values", r"\bour\s+values\b").expect("static pattern compiles"),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentFailure {
    pub pattern_id: String,
    pub matched: String,
}

/// Fail iff any pattern matches `text`; reports the first matching pattern.
pub fn alignment_filter(
    text: &str,
    patterns: &[AlignmentPattern],
) -> Result<(), AlignmentFailure> {
    for pattern in patterns {
        if let Some(found) = pattern.regex.find(text) {
            return Err(AlignmentFailure {
                pattern_id: pattern.id.clone(),
                matched: found.as_str().to_string(),
            });
        }
    }
    Ok(())
}

/// True iff no tools are declared and any assistant output still carries a
/// tool invocation, either as structured calls or as tool-call tags embedded
/// in its text.
pub fn detect_tool_hallucination(conv: &Conversation) -> bool {
    if conv.tools_declared() {
        return false;
    }
    conv.messages.iter().any(|m| {
        m.role == Role::Assistant
            && (!m.tool_calls.is_empty() || !parse_tool_calls(&m.content).is_empty())
    })
}

/// Fraction of conversations containing a hallucinated tool call.
pub fn hallucination_rate(convs: &[Conversation]) -> Result<f64, FilterError> {
    if convs.is_empty() {
        return Err(FilterError::EmptyCorpus);
    }
    let hits = convs.iter().filter(|c| detect_tool_hallucination(c)).count();
    Ok(hits as f64 / convs.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub rejected_structural: usize,
    pub rejected_repetition: usize,
    pub rejected_alignment: usize,
    pub kept: usize,
    /// Record indices (0-based input order) rejected by each rule.
    pub per_rule_samples: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Indices of samples that passed every rule, in input order.
    pub kept_indices: Vec<usize>,
    pub report: FilterReport,
}

/// Which rule a sample fails first, if any. Per-sample classification is
/// pure, so corpora can shard across workers without changing results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleVerdict {
    Keep,
    Structural,
    Repetition,
    Alignment,
}

impl SampleVerdict {
    pub fn rule_name(&self) -> Option<&'static str> {
        match self {
            SampleVerdict::Keep => None,
            SampleVerdict::Structural => Some("structural"),
            SampleVerdict::Repetition => Some("repetition"),
            SampleVerdict::Alignment => Some("alignment"),
        }
    }
}

/// Run one sample through the pipeline: structural, then repetition, then
/// alignment; the first failing rule wins. Content rules see the
/// model-authored text only: assistant reasoning and content concatenated in
/// message order.
pub fn classify_sample(
    conv: &Conversation,
    repetition: &RepetitionConfig,
    patterns: &[AlignmentPattern],
    tokenizer: &dyn Tokenizer,
) -> Result<SampleVerdict, FilterError> {
    repetition.validate()?;
    if structural_check(conv).is_err() {
        return Ok(SampleVerdict::Structural);
    }
    let text = assistant_text(conv);
    let tokens = tokenizer.tokens(&text);
    if repetition_check(&tokens, repetition)?.is_err() {
        return Ok(SampleVerdict::Repetition);
    }
    if alignment_filter(&text, patterns).is_err() {
        return Ok(SampleVerdict::Alignment);
    }
    Ok(SampleVerdict::Keep)
}

/// Fold per-sample verdicts (in input order) into a report.
pub fn collect_report(verdicts: &[SampleVerdict]) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    outcome.report.input_count = verdicts.len();
    for (idx, verdict) in verdicts.iter().enumerate() {
        match verdict.rule_name() {
            None => {
                outcome.report.kept += 1;
                outcome.kept_indices.push(idx);
            }
            Some(rule) => {
                match verdict {
                    SampleVerdict::Structural => outcome.report.rejected_structural += 1,
                    SampleVerdict::Repetition => outcome.report.rejected_repetition += 1,
                    SampleVerdict::Alignment => outcome.report.rejected_alignment += 1,
                    SampleVerdict::Keep => unreachable!("keep has no rule name"),
                }
                outcome
                    .report
                    .per_rule_samples
                    .entry(rule.to_string())
                    .or_default()
                    .push(idx);
            }
        }
    }
    outcome
}

/// Run the full pipeline over a corpus.
pub fn filter_corpus(
    convs: &[Conversation],
    repetition: &RepetitionConfig,
    patterns: &[AlignmentPattern],
    tokenizer: &dyn Tokenizer,
) -> Result<FilterOutcome, FilterError> {
    let verdicts = convs
        .iter()
        .map(|conv| classify_sample(conv, repetition, patterns, tokenizer))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(collect_report(&verdicts))
}

/// The model-authored text of a conversation: assistant reasoning and content
/// joined in message order. This is the text the content rules inspect.
pub fn assistant_text(conv: &Conversation) -> String {
    let mut parts = Vec::new();
    for msg in &conv.messages {
        if msg.role != Role::Assistant {
            continue;
        }
        if let Some(reasoning) = &msg.reasoning {
            parts.push(reasoning.as_str());
        }
        if !msg.content.is_empty() {
            parts.push(msg.content.as_str());
        }
    }
    parts.join("\n")
}

/// One annotated rollout used for preference labeling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutLabel {
    pub prompt_id: String,
    pub sample_id: String,
    pub correct: bool,
    pub tool_called: bool,
    pub tools_declared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceCategory {
    NoTools,
    WithTools,
    HallucinationPenalty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub chosen: String,
    pub rejected: String,
    pub category: PreferenceCategory,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub prompts: usize,
    pub pairs: usize,
    pub skipped_no_candidates: Vec<String>,
    pub skipped_inconsistent: Vec<String>,
}

/// Build one preference pair per prompt.
///
/// Category rules:
/// - tools declared: correctness of the final answer alone decides labels;
/// - tools not declared and some rollout called a tool anyway: any such
///   rollout is a negative preference regardless of correctness, and the
///   chosen side must be correct without a tool call;
/// - tools not declared and nobody called one: correctness decides labels.
///
/// When several candidates qualify on a side, one is drawn with the stream
/// seeded by `(seed, prompt position)`. Prompts without a valid pair are
/// skipped and reported.
pub fn label_dpo_pairs(rollouts: &[RolloutLabel], seed: u64) -> (Vec<PreferencePair>, LabelReport) {
    let mut order: Vec<&str> = Vec::new();
    let mut by_prompt: BTreeMap<&str, Vec<&RolloutLabel>> = BTreeMap::new();
    for r in rollouts {
        let entry = by_prompt.entry(r.prompt_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(r.prompt_id.as_str());
        }
        entry.push(r);
    }

    let mut pairs = Vec::new();
    let mut report = LabelReport {
        prompts: order.len(),
        ..Default::default()
    };
    for (prompt_index, prompt_id) in order.iter().enumerate() {
        let group = &by_prompt[prompt_id];
        let declared = group[0].tools_declared;
        if group.len() < 2 || group.iter().any(|r| r.tools_declared != declared) {
            report.skipped_inconsistent.push(prompt_id.to_string());
            continue;
        }
        let (category, chosen_pool, rejected_pool): (_, Vec<&&RolloutLabel>, Vec<&&RolloutLabel>) =
            if declared {
                (
                    PreferenceCategory::WithTools,
                    group.iter().filter(|r| r.correct).collect(),
                    group.iter().filter(|r| !r.correct).collect(),
                )
            } else if group.iter().any(|r| r.tool_called) {
                (
                    PreferenceCategory::HallucinationPenalty,
                    group.iter().filter(|r| r.correct && !r.tool_called).collect(),
                    group.iter().filter(|r| r.tool_called).collect(),
                )
            } else {
                (
                    PreferenceCategory::NoTools,
                    group.iter().filter(|r| r.correct).collect(),
                    group.iter().filter(|r| !r.correct).collect(),
                )
            };
        if chosen_pool.is_empty() || rejected_pool.is_empty() {
            report.skipped_no_candidates.push(prompt_id.to_string());
            continue;
        }
        let mut rng = rng::stream(seed, rng::domain::DPO_LABELING, prompt_index as u64);
        let chosen = chosen_pool[rng.gen_range(0..chosen_pool.len())];
        let rejected = rejected_pool[rng.gen_range(0..rejected_pool.len())];
        pairs.push(PreferencePair {
            prompt_id: prompt_id.to_string(),
            chosen: chosen.sample_id.clone(),
            rejected: rejected.sample_id.clone(),
            category,
        });
    }
    report.pairs = pairs.len();
    (pairs, report)
}
