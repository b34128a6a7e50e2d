//! Selective mixed-precision quantization planning.
//!
//! The selective policy keeps the sensitivity-critical layers wide: every
//! attention layer stays in BF16 along with the Mamba layer immediately
//! feeding it; everything else, plus the KV cache, drops to FP8. Conv1d
//! blocks inside Mamba layers stay BF16 under every mixed policy. The planner
//! manipulates precision labels and byte widths only; no numerics are
//! simulated.

use crate::config::{ConfigError, KvConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum QuantError {
    #[error("line {line}: unknown layer kind {kind:?} (expected mamba, attention, or moe)")]
    UnknownLayerKind { line: usize, kind: String },
    #[error("layer pattern is empty")]
    EmptyPattern,
    #[error("plan covers {plan} layers but the pattern has {pattern}")]
    PlanPatternMismatch { plan: usize, pattern: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Mamba,
    Attention,
    Moe,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Mamba => "mamba",
            LayerKind::Attention => "attention",
            LayerKind::Moe => "moe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPattern {
    pub layers: Vec<LayerKind>,
}

impl LayerPattern {
    pub fn new(layers: Vec<LayerKind>) -> Result<Self, QuantError> {
        if layers.is_empty() {
            return Err(QuantError::EmptyPattern);
        }
        Ok(Self { layers })
    }

    /// Parse the pattern file format: one layer kind per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, QuantError> {
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let kind = match line.to_ascii_lowercase().as_str() {
                "mamba" => LayerKind::Mamba,
                "attention" => LayerKind::Attention,
                "moe" => LayerKind::Moe,
                other => {
                    return Err(QuantError::UnknownLayerKind {
                        line: i + 1,
                        kind: other.to_string(),
                    })
                }
            };
            layers.push(kind);
        }
        Self::new(layers)
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|&&k| k == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Precision {
    Bf16,
    Fp8,
}

impl Precision {
    pub fn bytes_per_element(&self) -> u64 {
        match self {
            Precision::Bf16 => 2,
            Precision::Fp8 => 1,
        }
    }
}

/// How Mamba layers are treated along the ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MambaTreatment {
    /// BF16 only where a Mamba layer immediately feeds an attention layer.
    Mixed,
    /// All Mamba layers in FP8.
    Fp8,
}

/// One point of the quantization ablation grid: attention precision, Mamba
/// treatment, and KV-cache precision vary independently; everything else is
/// FP8 with conv1d pinned to BF16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantAxes {
    pub attention: Precision,
    pub mamba: MambaTreatment,
    pub kv_cache: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantPolicy {
    /// The shipped configuration: attention and its feeding Mamba layers in
    /// BF16, the rest plus the KV cache in FP8.
    Selective,
    /// Everything in FP8, conv1d and KV cache included.
    AllFp8,
    /// Everything in BF16.
    AllBf16,
    /// Explicit ablation axes.
    Custom(QuantAxes),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub index: usize,
    pub kind: LayerKind,
    pub weights: Precision,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionPlan {
    pub per_layer: Vec<LayerPlan>,
    pub kv_cache: Precision,
    pub conv1d: Precision,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PrecisionPlan {
    pub fn count_bf16(&self, kind: LayerKind) -> usize {
        self.per_layer
            .iter()
            .filter(|l| l.kind == kind && l.weights == Precision::Bf16)
            .count()
    }
}

/// Compute the per-layer precision assignment for `pattern` under `policy`.
///
/// An attention layer whose immediate predecessor is not a Mamba layer (or
/// that sits at position 0) gets no predecessor marked; the plan stays valid
/// and carries a warning.
pub fn plan(pattern: &LayerPattern, policy: QuantPolicy) -> PrecisionPlan {
    let axes = match policy {
        QuantPolicy::Selective => QuantAxes {
            attention: Precision::Bf16,
            mamba: MambaTreatment::Mixed,
            kv_cache: Precision::Fp8,
        },
        QuantPolicy::AllFp8 => QuantAxes {
            attention: Precision::Fp8,
            mamba: MambaTreatment::Fp8,
            kv_cache: Precision::Fp8,
        },
        QuantPolicy::AllBf16 => QuantAxes {
            attention: Precision::Bf16,
            mamba: MambaTreatment::Mixed,
            kv_cache: Precision::Bf16,
        },
        QuantPolicy::Custom(axes) => axes,
    };
    let all_bf16 = matches!(policy, QuantPolicy::AllBf16);
    let conv1d = if matches!(policy, QuantPolicy::AllFp8) {
        Precision::Fp8
    } else {
        Precision::Bf16
    };

    let mut feeds_attention = vec![false; pattern.layers.len()];
    let mut warnings = Vec::new();
    for (i, &kind) in pattern.layers.iter().enumerate() {
        if kind != LayerKind::Attention {
            continue;
        }
        match i.checked_sub(1).map(|p| pattern.layers[p]) {
            Some(LayerKind::Mamba) => feeds_attention[i - 1] = true,
            Some(other) => warnings.push(format!(
                "attention layer at index {i} is preceded by a {} layer; no predecessor marked",
                other.as_str()
            )),
            None => warnings.push(format!(
                "attention layer at index {i} has no preceding layer; no predecessor marked"
            )),
        }
    }

    let per_layer = pattern
        .layers
        .iter()
        .enumerate()
        .map(|(index, &kind)| {
            let (weights, note) = if all_bf16 {
                (Precision::Bf16, "policy all_bf16".to_string())
            } else {
                match kind {
                    LayerKind::Attention => match axes.attention {
                        Precision::Bf16 => (Precision::Bf16, "attention (sensitivity-critical)".into()),
                        Precision::Fp8 => (Precision::Fp8, "attention quantized by policy".into()),
                    },
                    LayerKind::Mamba => match axes.mamba {
                        MambaTreatment::Mixed if feeds_attention[index] => {
                            (Precision::Bf16, "mamba feeding attention".into())
                        }
                        _ => (Precision::Fp8, "default fp8".into()),
                    },
                    LayerKind::Moe => (Precision::Fp8, "default fp8".into()),
                }
            };
            LayerPlan { index, kind, weights, note }
        })
        .collect();

    PrecisionPlan {
        per_layer,
        kv_cache: axes.kv_cache,
        conv1d,
        warnings,
    }
}

/// Model dimensions needed for parameter and memory accounting. Vocabulary
/// size and the conv kernel width are not part of the architecture table and
/// carry defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub model_dim: u64,
    pub vocab_size: u64,
    pub q_heads: u64,
    pub kv_heads: u64,
    pub head_dim: u64,
    pub mamba_state_dim: u64,
    pub mamba_groups: u64,
    pub mamba_heads: u64,
    pub mamba_head_dim: u64,
    pub mamba_conv_kernel: u64,
    pub expert_dim: u64,
    pub n_experts: u64,
    pub n_shared_experts: u64,
}

impl Default for ModelDims {
    fn default() -> Self {
        // Reference architecture table.
        Self {
            model_dim: 2688,
            vocab_size: 131_072,
            q_heads: 32,
            kv_heads: 2,
            head_dim: 128,
            mamba_state_dim: 128,
            mamba_groups: 8,
            mamba_heads: 64,
            mamba_head_dim: 64,
            mamba_conv_kernel: 4,
            expert_dim: 1856,
            n_experts: 128,
            n_shared_experts: 2,
        }
    }
}

impl ModelDims {
    pub fn from_config(cfg: &KvConfig) -> Result<Self, QuantError> {
        let d = Self::default();
        Ok(Self {
            model_dim: cfg.require_u64("model_dim")?,
            vocab_size: cfg.u64_or("vocab_size", d.vocab_size)?,
            q_heads: cfg.require_u64("q_heads")?,
            kv_heads: cfg.require_u64("kv_heads")?,
            head_dim: cfg.require_u64("head_dim")?,
            mamba_state_dim: cfg.require_u64("mamba_state_dim")?,
            mamba_groups: cfg.require_u64("mamba_groups")?,
            mamba_heads: cfg.require_u64("mamba_heads")?,
            mamba_head_dim: cfg.require_u64("mamba_head_dim")?,
            mamba_conv_kernel: cfg.u64_or("mamba_conv_kernel", d.mamba_conv_kernel)?,
            expert_dim: cfg.require_u64("expert_dim")?,
            n_experts: cfg.require_u64("n_experts")?,
            n_shared_experts: cfg.require_u64("n_shared_experts")?,
        })
    }

    pub fn attention_layer_params(&self) -> u64 {
        let q = self.model_dim * self.q_heads * self.head_dim;
        let kv = 2 * self.model_dim * self.kv_heads * self.head_dim;
        let out = self.q_heads * self.head_dim * self.model_dim;
        q + kv + out
    }

    pub fn mamba_inner_dim(&self) -> u64 {
        self.mamba_heads * self.mamba_head_dim
    }

    pub fn mamba_conv_dim(&self) -> u64 {
        self.mamba_inner_dim() + 2 * self.mamba_groups * self.mamba_state_dim
    }

    /// Conv1d weight plus bias inside one Mamba layer.
    pub fn conv1d_params(&self) -> u64 {
        self.mamba_conv_dim() * (self.mamba_conv_kernel + 1)
    }

    /// Mamba-2 style block: fused input projection (gate, conv stream, dt),
    /// conv1d, per-head scalars, group norm, and output projection.
    pub fn mamba_layer_params(&self) -> u64 {
        let inner = self.mamba_inner_dim();
        let in_proj =
            self.model_dim * (2 * inner + 2 * self.mamba_groups * self.mamba_state_dim + self.mamba_heads);
        let scalars = 3 * self.mamba_heads;
        let norm = inner;
        let out_proj = inner * self.model_dim;
        in_proj + self.conv1d_params() + scalars + norm + out_proj
    }

    /// Two-matrix expert MLP (squared-ReLU activation has no gate matrix).
    pub fn expert_params(&self) -> u64 {
        2 * self.model_dim * self.expert_dim
    }

    pub fn moe_layer_params(&self) -> u64 {
        let router = self.model_dim * self.n_experts;
        (self.n_experts + self.n_shared_experts) * self.expert_params() + router
    }

    pub fn layer_params(&self, kind: LayerKind) -> u64 {
        match kind {
            LayerKind::Attention => self.attention_layer_params(),
            LayerKind::Mamba => self.mamba_layer_params(),
            LayerKind::Moe => self.moe_layer_params(),
        }
    }

    /// Untied input embedding and output projection.
    pub fn embedding_params(&self) -> u64 {
        2 * self.vocab_size * self.model_dim
    }

    pub fn total_params(&self, pattern: &LayerPattern) -> u64 {
        let layers: u64 = pattern.layers.iter().map(|&k| self.layer_params(k)).sum();
        // One RMSNorm per layer plus the final norm.
        let norms = (pattern.layers.len() as u64 + 1) * self.model_dim;
        layers + norms + self.embedding_params()
    }
}

/// Byte accounting for one plan. Mamba layer weights exclude the conv1d
/// parameters, which are carried as their own category at the plan's conv1d
/// precision; embeddings are reported separately and stay BF16.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub weight_bytes_by_kind: BTreeMap<String, u64>,
    pub conv1d_bytes: u64,
    /// All pattern-layer weights: the per-kind entries plus conv1d.
    pub total_layer_bytes: u64,
    pub embedding_bytes: u64,
    pub kv_cache_bytes_per_token: u64,
    pub total_params: u64,
}

pub fn memory_estimate(
    pattern: &LayerPattern,
    plan: &PrecisionPlan,
    dims: &ModelDims,
) -> Result<MemoryEstimate, QuantError> {
    if plan.per_layer.len() != pattern.layers.len() {
        return Err(QuantError::PlanPatternMismatch {
            plan: plan.per_layer.len(),
            pattern: pattern.layers.len(),
        });
    }
    let mut by_kind: BTreeMap<String, u64> = BTreeMap::new();
    let mut conv1d_bytes = 0u64;
    for layer in &plan.per_layer {
        let mut params = dims.layer_params(layer.kind);
        if layer.kind == LayerKind::Mamba {
            params -= dims.conv1d_params();
            conv1d_bytes += dims.conv1d_params() * plan.conv1d.bytes_per_element();
        }
        *by_kind.entry(layer.kind.as_str().to_string()).or_default() +=
            params * layer.weights.bytes_per_element();
    }
    let total_layer_bytes = by_kind.values().sum::<u64>() + conv1d_bytes;
    let n_attention = pattern.count(LayerKind::Attention) as u64;
    let kv_cache_bytes_per_token =
        n_attention * 2 * dims.kv_heads * dims.head_dim * plan.kv_cache.bytes_per_element();
    Ok(MemoryEstimate {
        weight_bytes_by_kind: by_kind,
        conv1d_bytes,
        total_layer_bytes,
        embedding_bytes: dims.embedding_params() * Precision::Bf16.bytes_per_element(),
        kv_cache_bytes_per_token,
        total_params: dims.total_params(pattern),
    })
}

/// A 52-layer pattern with 6 attention layers, each fed by a Mamba layer:
/// 23 blocks of which 17 are (mamba, moe) pairs and 6 are
/// (mamba, attention, moe) triplets, giving 23 mamba + 6 attention + 23 moe.
/// Used for tests and as a worked example; real patterns are inputs.
pub fn reference_pattern_52() -> LayerPattern {
    let triplet_blocks = [2usize, 6, 10, 14, 18, 22];
    let mut layers = Vec::with_capacity(52);
    for block in 0..23 {
        layers.push(LayerKind::Mamba);
        if triplet_blocks.contains(&block) {
            layers.push(LayerKind::Attention);
        }
        layers.push(LayerKind::Moe);
    }
    LayerPattern::new(layers).expect("non-empty by construction")
}
