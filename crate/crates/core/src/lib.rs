//! Deterministic post-training machinery as plain data transformations:
//! chat-template rendering with reasoning control, RLHF reward computation,
//! pass-rate curriculum scheduling, SFT data filtering with DPO preference
//! labeling, a MoE router balance simulator, and a selective mixed-precision
//! quantization planner.
//!
//! Everything is engine-agnostic and pure: every randomized operation takes
//! an explicit seed and identical inputs always produce identical outputs.

pub mod chat_template;
pub mod config;
pub mod curriculum;
pub mod data_filter;
pub mod jsonl;
pub mod quant_planner;
pub mod reward_engine;
pub mod rng;
pub mod router_sim;
pub mod tokenize;

pub use chat_template::{Conversation, Message, ReasoningMode, RenderedPrompt, Role, ToolCall};
pub use config::KvConfig;
pub use curriculum::{BatchPlan, CurriculumConfig, TaskProfile, WsdConfig};
pub use data_filter::{FilterReport, PreferencePair, RepetitionConfig, RolloutLabel};
pub use quant_planner::{LayerPattern, ModelDims, PrecisionPlan, QuantPolicy};
pub use reward_engine::{
    GenRmRewardConfig, LengthControlConfig, PairVerdict, Response, ResponseGroup, RewardBreakdown,
};
pub use router_sim::{RouterConfig, RouterState, RoutingDecision};
pub use tokenize::{Tokenizer, WhitespaceTokenizer};
