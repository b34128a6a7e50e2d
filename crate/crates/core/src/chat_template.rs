//! Conversation rendering with reasoning-mode control, plus SFT corpus
//! preparation (reasoning stripping and budget truncation).
//!
//! Rendering semantics:
//! - In reasoning mode, only reasoning from the current turn is materialized:
//!   assistant messages after the last user message keep their reasoning
//!   verbatim, assistant messages before it have reasoning dropped.
//! - In non-reasoning mode, no reasoning is emitted at all.
//! - Tool calls serialize with XML-style tags chosen to minimize escaping;
//!   only the closing tag sequences are escaped inside argument values.
//!
//! The rendered byte format is a contract: identical input yields identical
//! bytes across calls, processes, and platforms.

use crate::rng;
use crate::tokenize::Tokenizer;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default reasoning budgets for truncation, drawn uniformly.
pub const DEFAULT_REASONING_BUDGETS: [u64; 5] = [1024, 2048, 4096, 8192, 16384];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("message {index}: {detail}")]
    MalformedStructure { index: usize, detail: String },
    #[error("fraction must be within [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("budgets must be non-empty and positive")]
    InvalidBudgets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningMode {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallArg {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arguments: Vec<ToolCallArg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_definitions: Option<Vec<ToolDefinition>>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
            reasoning: None,
            tool_calls: Vec::new(),
            tool_definitions: None,
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            ..Self::system(content)
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            ..Self::system(content)
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            ..Self::system(content)
        }
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        self.reasoning = Some(reasoning.into());
        self
    }

    pub fn with_tool_calls(mut self, calls: Vec<ToolCall>) -> Self {
        self.tool_calls = calls;
        self
    }

    pub fn with_tool_definitions(mut self, defs: Vec<ToolDefinition>) -> Self {
        self.tool_definitions = Some(defs);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
    pub reasoning_mode: ReasoningMode,
}

impl Conversation {
    pub fn new(messages: Vec<Message>, reasoning_mode: ReasoningMode) -> Self {
        Self { messages, reasoning_mode }
    }

    /// Index of the last user message, or `None` when the conversation has
    /// no user turn (everything then counts as the current turn).
    pub fn last_user_index(&self) -> Option<usize> {
        self.messages.iter().rposition(|m| m.role == Role::User)
    }

    /// True when some system message declares at least one tool. A system
    /// message with an empty tool list counts the same as one without the
    /// field: no tools.
    pub fn tools_declared(&self) -> bool {
        self.messages.iter().any(|m| {
            m.role == Role::System
                && m.tool_definitions
                    .as_ref()
                    .is_some_and(|defs| !defs.is_empty())
        })
    }

    /// Structural validation shared by rendering and data filtering.
    ///
    /// Rules: non-empty; first message is system or user; system messages
    /// appear only at index 0; reasoning/tool_calls only on assistant
    /// messages and tool_definitions only on system messages; a tool message
    /// must answer an assistant message that issued tool calls.
    pub fn validate_structure(&self) -> Result<(), TemplateError> {
        let fail = |index: usize, detail: &str| {
            Err(TemplateError::MalformedStructure {
                index,
                detail: detail.to_string(),
            })
        };
        if self.messages.is_empty() {
            return fail(0, "conversation has no messages");
        }
        match self.messages[0].role {
            Role::System | Role::User => {}
            _ => return fail(0, "first message must be system or user"),
        }
        for (i, msg) in self.messages.iter().enumerate() {
            if msg.role == Role::System && i > 0 {
                return fail(i, "system message allowed only at index 0");
            }
            if msg.role != Role::Assistant {
                if msg.reasoning.is_some() {
                    return fail(i, "reasoning is only valid on assistant messages");
                }
                if !msg.tool_calls.is_empty() {
                    return fail(i, "tool_calls are only valid on assistant messages");
                }
            }
            if msg.role != Role::System && msg.tool_definitions.is_some() {
                return fail(i, "tool_definitions are only valid on system messages");
            }
            for call in &msg.tool_calls {
                if !is_identifier(&call.name) {
                    return fail(i, "tool call name must be a non-empty identifier");
                }
                let mut seen = std::collections::HashSet::new();
                for arg in &call.arguments {
                    if !is_identifier(&arg.key) {
                        return fail(i, "tool call argument key must be an identifier");
                    }
                    if !seen.insert(arg.key.as_str()) {
                        return fail(i, "duplicate argument key within one tool call");
                    }
                }
            }
            if msg.role == Role::Tool {
                let answered = self.messages[..i]
                    .iter()
                    .rev()
                    .find(|m| m.role != Role::Tool)
                    .is_some_and(|m| m.role == Role::Assistant && !m.tool_calls.is_empty());
                if !answered {
                    return fail(i, "tool message without a preceding assistant tool call");
                }
            }
        }
        Ok(())
    }
}

/// Byte range of one materialized reasoning segment in the rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningSpan {
    pub message_index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub included_reasoning_spans: Vec<ReasoningSpan>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn escape_value(value: &str) -> String {
    value
        .replace("</ARG>", "<\\/ARG>")
        .replace("</TOOLCALL>", "<\\/TOOLCALL>")
}

fn unescape_value(value: &str) -> String {
    value
        .replace("<\\/ARG>", "</ARG>")
        .replace("<\\/TOOLCALL>", "</TOOLCALL>")
}

/// Serialize one tool call with the tag grammar used by [`render`].
pub fn render_tool_call(call: &ToolCall) -> String {
    let mut out = format!("<TOOLCALL name=\"{}\">", call.name);
    for arg in &call.arguments {
        out.push_str("<ARG key=\"");
        out.push_str(&arg.key);
        out.push_str("\">");
        out.push_str(&escape_value(&arg.value));
        out.push_str("</ARG>");
    }
    out.push_str("</TOOLCALL>");
    out
}

/// Scan `text` for complete tool-call tags and parse them back.
///
/// Malformed or unterminated openings are skipped rather than reported: the
/// parser is also the tool-hallucination detector, where arbitrary model text
/// must not panic or error.
pub fn parse_tool_calls(text: &str) -> Vec<ToolCall> {
    const OPEN: &str = "<TOOLCALL name=\"";
    const CLOSE: &str = "</TOOLCALL>";
    let mut calls = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = text[cursor..].find(OPEN) {
        let name_start = cursor + rel + OPEN.len();
        // Opening we cannot complete: resume the scan after the marker.
        cursor = cursor + rel + OPEN.len();
        let Some(name_len) = text[name_start..].find('"') else {
            break;
        };
        let name = &text[name_start..name_start + name_len];
        if !is_identifier(name) || !text[name_start + name_len..].starts_with("\">") {
            continue;
        }
        let body_start = name_start + name_len + 2;
        let Some(body_len) = text[body_start..].find(CLOSE) else {
            continue;
        };
        let body = &text[body_start..body_start + body_len];
        let Some(arguments) = parse_args(body) else {
            continue;
        };
        calls.push(ToolCall {
            name: name.to_string(),
            arguments,
        });
        cursor = body_start + body_len + CLOSE.len();
    }
    calls
}

fn parse_args(body: &str) -> Option<Vec<ToolCallArg>> {
    const OPEN: &str = "<ARG key=\"";
    const CLOSE: &str = "</ARG>";
    let mut args = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = body[cursor..].find(OPEN) {
        let key_start = cursor + rel + OPEN.len();
        let key_len = body[key_start..].find('"')?;
        let key = &body[key_start..key_start + key_len];
        if !is_identifier(key) || !body[key_start + key_len..].starts_with("\">") {
            return None;
        }
        let value_start = key_start + key_len + 2;
        let value_len = body[value_start..].find(CLOSE)?;
        args.push(ToolCallArg {
            key: key.to_string(),
            value: unescape_value(&body[value_start..value_start + value_len]),
        });
        cursor = value_start + value_len + CLOSE.len();
    }
    Some(args)
}

/// Render a conversation to prompt text.
///
/// Byte-deterministic; see the module docs for the reasoning semantics.
pub fn render(conv: &Conversation) -> Result<RenderedPrompt, TemplateError> {
    conv.validate_structure()?;
    let last_user = conv.last_user_index();
    let mut text = String::new();
    let mut spans = Vec::new();

    for (i, msg) in conv.messages.iter().enumerate() {
        match msg.role {
            Role::System => {
                text.push_str("<|system|>\n");
                text.push_str(&msg.content);
                if let Some(defs) = &msg.tool_definitions {
                    for def in defs {
                        text.push_str("\n<TOOLDEF name=\"");
                        text.push_str(&def.name);
                        text.push_str("\">");
                        text.push_str(def.description.as_deref().unwrap_or(""));
                        text.push_str("</TOOLDEF>");
                    }
                }
                text.push_str("\n<|end|>\n");
            }
            Role::User => {
                text.push_str("<|user|>\n");
                text.push_str(&msg.content);
                text.push_str("\n<|end|>\n");
            }
            Role::Tool => {
                text.push_str("<|tool|>\n");
                text.push_str(&msg.content);
                text.push_str("\n<|end|>\n");
            }
            Role::Assistant => {
                text.push_str("<|assistant|>\n");
                let current_turn = last_user.is_none_or(|u| i > u);
                let include = conv.reasoning_mode == ReasoningMode::On && current_turn;
                let mut wrote_part = false;
                if include {
                    if let Some(reasoning) = &msg.reasoning {
                        text.push_str("<think>\n");
                        let start = text.len();
                        text.push_str(reasoning);
                        let end = text.len();
                        text.push_str("\n</think>");
                        spans.push(ReasoningSpan {
                            message_index: i,
                            start,
                            end,
                        });
                        wrote_part = true;
                    }
                }
                if !msg.content.is_empty() {
                    if wrote_part {
                        text.push('\n');
                    }
                    text.push_str(&msg.content);
                    wrote_part = true;
                }
                for call in &msg.tool_calls {
                    if wrote_part {
                        text.push('\n');
                    }
                    text.push_str(&render_tool_call(call));
                    wrote_part = true;
                }
                text.push_str("\n<|end|>\n");
            }
        }
    }

    Ok(RenderedPrompt {
        text,
        included_reasoning_spans: spans,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripReport {
    pub input_count: usize,
    pub stripped: usize,
}

/// Remove all assistant reasoning from a seeded random subset of the corpus
/// and switch those samples to non-reasoning mode. Each sample is selected
/// independently with probability `fraction`, so the stripped count follows a
/// binomial distribution around `fraction * corpus.len()`.
pub fn strip_reasoning(
    mut corpus: Vec<Conversation>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Conversation>, StripReport), TemplateError> {
    if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
        return Err(TemplateError::InvalidFraction(fraction));
    }
    let mut report = StripReport {
        input_count: corpus.len(),
        ..Default::default()
    };
    for (idx, conv) in corpus.iter_mut().enumerate() {
        let mut rng = rng::stream(seed, rng::domain::STRIP_REASONING, idx as u64);
        if rng.gen::<f64>() < fraction {
            for msg in &mut conv.messages {
                msg.reasoning = None;
            }
            conv.reasoning_mode = ReasoningMode::Off;
            report.stripped += 1;
        }
    }
    Ok((corpus, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncateReport {
    pub input_count: usize,
    /// Samples hit by the seeded selection.
    pub selected: usize,
    /// Selected samples whose final reasoning was actually shortened.
    pub truncated: usize,
    /// Selected samples already within the drawn budget.
    pub noop_within_budget: usize,
    /// Selected samples with no reasoning to truncate.
    pub skipped_no_reasoning: usize,
}

/// Truncate the final assistant reasoning of a seeded fraction of samples to
/// a budget drawn uniformly from `budgets`, leaving the post-reasoning
/// response untouched. Truncation cuts at a token boundary of `tokenizer`.
pub fn truncate_budget(
    mut corpus: Vec<Conversation>,
    fraction: f64,
    budgets: &[u64],
    seed: u64,
    tokenizer: &dyn Tokenizer,
) -> Result<(Vec<Conversation>, TruncateReport), TemplateError> {
    if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
        return Err(TemplateError::InvalidFraction(fraction));
    }
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(TemplateError::InvalidBudgets);
    }
    let mut report = TruncateReport {
        input_count: corpus.len(),
        ..Default::default()
    };
    for (idx, conv) in corpus.iter_mut().enumerate() {
        let mut rng = rng::stream(seed, rng::domain::TRUNCATE_BUDGET, idx as u64);
        if rng.gen::<f64>() >= fraction {
            continue;
        }
        report.selected += 1;
        let target = conv
            .messages
            .iter_mut()
            .rev()
            .find(|m| m.role == Role::Assistant && m.reasoning.is_some());
        let Some(msg) = target else {
            report.skipped_no_reasoning += 1;
            continue;
        };
        let budget = budgets[rng.gen_range(0..budgets.len())] as usize;
        let reasoning = msg.reasoning.as_ref().expect("present by find");
        let cut = tokenizer.truncate_to(reasoning, budget);
        if cut.len() == reasoning.len() {
            report.noop_within_budget += 1;
        } else {
            msg.reasoning = Some(cut.to_string());
            report.truncated += 1;
        }
    }
    Ok((corpus, report))
}
