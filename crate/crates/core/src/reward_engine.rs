//! RLHF reward computation.
//!
//! Covers the full reward path: the judge-training reward, circular pairwise
//! comparison scheduling with a ranking-based tiebreaker, base rewards
//! averaged over each response's two matches, zero-sum group-relative length
//! control with quality-gated conciseness bonuses, group-relative advantage
//! normalization, and overlong filtering.

use crate::config::{ConfigError, KvConfig};
use serde::{Deserialize, Serialize};

/// Prompts per optimization step used by the reference training setup.
pub const DEFAULT_PROMPTS_PER_STEP: usize = 128;
/// Rollouts generated per prompt (the comparison group size).
pub const DEFAULT_GENERATIONS_PER_PROMPT: usize = 16;
/// Generation-length ceiling; rollouts at or above it are masked out.
pub const DEFAULT_MAX_GENERATION_LEN: u64 = 49_152;
/// Epsilon added to the reward standard deviation in advantage normalization.
pub const ADVANTAGE_EPSILON: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("{field} must lie in [{lo}, {hi}], got {value}")]
    ScoreOutOfRange {
        field: &'static str,
        lo: f64,
        hi: f64,
        value: f64,
    },
    #[error("comparison groups need at least {min} responses, got {got}")]
    GroupTooSmall { min: usize, got: usize },
    #[error("response lengths are inconsistent: think {think} + answer {answer} > total {total}")]
    InconsistentLengths { think: u64, answer: u64, total: u64 },
    #[error("duplicate response id {0}")]
    DuplicateResponseId(usize),
    #[error("verdict references unknown response id {0}")]
    UnknownResponseId(usize),
    #[error("verdict pair ({first}, {second}) is not part of the circular schedule")]
    UnscheduledPair { first: usize, second: usize },
    #[error("missing verdict for scheduled pair ({first}, {second})")]
    MissingPair { first: usize, second: usize },
    #[error("duplicate verdict for pair ({first}, {second})")]
    DuplicatePair { first: usize, second: usize },
    #[error("verdict compares a response with itself (id {0})")]
    SelfComparison(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("max_len must be positive")]
    InvalidMaxLen,
    #[error("weights must be non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("percentile must lie in [0, 100], got {0}")]
    InvalidPercentile(f64),
}

fn check_range(field: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), RewardError> {
    if value.is_nan() || value < lo || value > hi {
        return Err(RewardError::ScoreOutOfRange { field, lo, hi, value });
    }
    Ok(())
}

/// Judge output for one pairwise sample: helpfulness for each response plus a
/// ranking score, 1 meaning the first response is far superior and 6 the
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgePrediction {
    pub helpfulness_first: f64,
    pub helpfulness_second: f64,
    pub ranking: f64,
    pub format_violation: bool,
}

impl JudgePrediction {
    pub fn new(
        helpfulness_first: f64,
        helpfulness_second: f64,
        ranking: f64,
        format_violation: bool,
    ) -> Result<Self, RewardError> {
        check_range("helpfulness_first", helpfulness_first, 1.0, 5.0)?;
        check_range("helpfulness_second", helpfulness_second, 1.0, 5.0)?;
        check_range("ranking", ranking, 1.0, 6.0)?;
        Ok(Self {
            helpfulness_first,
            helpfulness_second,
            ranking,
            format_violation,
        })
    }

    /// The same prediction as seen with the two responses swapped.
    pub fn position_swapped(&self) -> Self {
        Self {
            helpfulness_first: self.helpfulness_second,
            helpfulness_second: self.helpfulness_first,
            ranking: 7.0 - self.ranking,
            format_violation: self.format_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeGroundTruth {
    pub helpfulness_first: f64,
    pub helpfulness_second: f64,
    pub ranking: f64,
}

impl JudgeGroundTruth {
    pub fn new(
        helpfulness_first: f64,
        helpfulness_second: f64,
        ranking: f64,
    ) -> Result<Self, RewardError> {
        check_range("helpfulness_first", helpfulness_first, 1.0, 5.0)?;
        check_range("helpfulness_second", helpfulness_second, 1.0, 5.0)?;
        check_range("ranking", ranking, 1.0, 6.0)?;
        Ok(Self {
            helpfulness_first,
            helpfulness_second,
            ranking,
        })
    }

    /// Ground truth under position swap: helpfulness scores exchange and the
    /// ranking reflects about the scale midpoint (1..6 maps to 6..1).
    pub fn position_swapped(&self) -> Self {
        Self {
            helpfulness_first: self.helpfulness_second,
            helpfulness_second: self.helpfulness_first,
            ranking: 7.0 - self.ranking,
        }
    }
}

/// Swap the ordering of a comparison pair. Pair samples are augmented with
/// the swapped ordering to prevent positional bias; apply
/// [`JudgeGroundTruth::position_swapped`] to the labels alongside.
pub fn position_swap<T>(pair: (T, T)) -> (T, T) {
    (pair.1, pair.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenRmRewardConfig {
    /// Penalty applied when the prediction violates the output format (C1).
    pub format_penalty: f64,
    /// Weight of the ranking error term (C2).
    pub ranking_weight: f64,
}

impl Default for GenRmRewardConfig {
    fn default() -> Self {
        Self {
            format_penalty: 10.0,
            ranking_weight: 1.0,
        }
    }
}

impl GenRmRewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.format_penalty < 0.0 {
            return Err(RewardError::NegativeWeight(self.format_penalty));
        }
        if self.ranking_weight < 0.0 {
            return Err(RewardError::NegativeWeight(self.ranking_weight));
        }
        Ok(())
    }

    /// Read `c1` / `c2` from a key-value config, defaulting to 10 and 1.
    pub fn from_config(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let defaults = Self::default();
        Ok(Self {
            format_penalty: cfg.f64_or("c1", defaults.format_penalty)?,
            ranking_weight: cfg.f64_or("c2", defaults.ranking_weight)?,
        })
    }
}

/// Training reward for the generative judge:
/// `-C1*[format violation] - |Ph1-Gh1| - |Ph2-Gh2| - C2*|Pr-Gr|`.
///
/// Always non-positive; zero exactly when the prediction matches the ground
/// truth with no format violation.
pub fn genrm_reward(
    pred: &JudgePrediction,
    truth: &JudgeGroundTruth,
    cfg: &GenRmRewardConfig,
) -> f64 {
    let format_term = if pred.format_violation {
        cfg.format_penalty
    } else {
        0.0
    };
    -format_term
        - (pred.helpfulness_first - truth.helpfulness_first).abs()
        - (pred.helpfulness_second - truth.helpfulness_second).abs()
        - cfg.ranking_weight * (pred.ranking - truth.ranking).abs()
}

/// One response of a comparison group, reduced to its component lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: usize,
    pub think_len: u64,
    pub answer_len: u64,
    pub total_len: u64,
}

impl Response {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.think_len + self.answer_len > self.total_len {
            return Err(RewardError::InconsistentLengths {
                think: self.think_len,
                answer: self.answer_len,
                total: self.total_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseGroup {
    pub prompt_id: String,
    pub responses: Vec<Response>,
}

impl ResponseGroup {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.responses.len() < 2 {
            return Err(RewardError::GroupTooSmall {
                min: 2,
                got: self.responses.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.responses {
            r.validate()?;
            if !seen.insert(r.id) {
                return Err(RewardError::DuplicateResponseId(r.id));
            }
        }
        Ok(())
    }
}

/// Judge verdict for one scheduled pair. Scores live in [1,5]/[1,6] on input;
/// tiebroken scores may leave those ranges (e.g. 5.5) and are used as-is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub first: usize,
    pub second: usize,
    #[serde(rename = "s_i")]
    pub score_first: f64,
    #[serde(rename = "s_j")]
    pub score_second: f64,
    #[serde(rename = "s_r")]
    pub ranking: f64,
}

impl PairVerdict {
    /// Range validation for raw (pre-tiebreak) verdicts.
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.first == self.second {
            return Err(RewardError::SelfComparison(self.first));
        }
        check_range("s_i", self.score_first, 1.0, 5.0)?;
        check_range("s_j", self.score_second, 1.0, 5.0)?;
        check_range("s_r", self.ranking, 1.0, 6.0)?;
        Ok(())
    }
}

/// Comparison schedule pairing each response with its successor around a
/// cycle: `(0,1), (1,2), ..., (n-1,0)`. Exactly `n` pairs; every response is
/// judged twice, once per position.
pub fn circular_schedule(n: usize) -> Result<Vec<(usize, usize)>, RewardError> {
    if n < 2 {
        return Err(RewardError::GroupTooSmall { min: 2, got: n });
    }
    Ok((0..n).map(|i| (i, (i + 1) % n)).collect())
}

/// Resolve equal helpfulness scores using the ranking score:
/// `s_i += 3.5 - s_r`, `s_j += s_r - 3.5`. Leaves unequal scores untouched
/// and conserves `s_i + s_j` in either case.
pub fn tiebreak(verdict: PairVerdict) -> PairVerdict {
    if verdict.score_first != verdict.score_second {
        return verdict;
    }
    PairVerdict {
        score_first: verdict.score_first + (3.5 - verdict.ranking),
        score_second: verdict.score_second + (verdict.ranking - 3.5),
        ..verdict
    }
}

/// Base reward per response: the mean of its two tiebroken helpfulness scores,
/// one from each match it appears in. `verdicts` must cover the group's
/// circular schedule exactly (any order, post-tiebreak).
pub fn base_rewards(
    group: &ResponseGroup,
    verdicts: &[PairVerdict],
) -> Result<Vec<f64>, RewardError> {
    group.validate()?;
    let n = group.responses.len();
    let position: std::collections::HashMap<usize, usize> = group
        .responses
        .iter()
        .enumerate()
        .map(|(pos, r)| (r.id, pos))
        .collect();

    let mut as_first: Vec<Option<f64>> = vec![None; n];
    let mut as_second: Vec<Option<f64>> = vec![None; n];
    for v in verdicts {
        let first_pos = *position
            .get(&v.first)
            .ok_or(RewardError::UnknownResponseId(v.first))?;
        let second_pos = *position
            .get(&v.second)
            .ok_or(RewardError::UnknownResponseId(v.second))?;
        if (first_pos + 1) % n != second_pos {
            return Err(RewardError::UnscheduledPair {
                first: v.first,
                second: v.second,
            });
        }
        if as_first[first_pos].is_some() {
            return Err(RewardError::DuplicatePair {
                first: v.first,
                second: v.second,
            });
        }
        as_first[first_pos] = Some(v.score_first);
        as_second[second_pos] = Some(v.score_second);
    }
    let mut base = Vec::with_capacity(n);
    for pos in 0..n {
        let first = as_first[pos].ok_or_else(|| RewardError::MissingPair {
            first: group.responses[pos].id,
            second: group.responses[(pos + 1) % n].id,
        })?;
        let second = as_second[pos].ok_or_else(|| RewardError::MissingPair {
            first: group.responses[(pos + n - 1) % n].id,
            second: group.responses[pos].id,
        })?;
        base.push((first + second) / 2.0);
    }
    Ok(base)
}

/// Zero-sum length weights for one component across a group.
///
/// `w_i = 1 - (len_i - min) / (max - min)`, centered to mean zero. A group
/// with all lengths equal carries no length signal and gets all zeros.
pub fn length_weights(lengths: &[u64]) -> Result<Vec<f64>, RewardError> {
    if lengths.len() < 2 {
        return Err(RewardError::GroupTooSmall {
            min: 2,
            got: lengths.len(),
        });
    }
    let min = *lengths.iter().min().expect("non-empty");
    let max = *lengths.iter().max().expect("non-empty");
    if min == max {
        return Ok(vec![0.0; lengths.len()]);
    }
    let range = (max - min) as f64;
    let raw: Vec<f64> = lengths
        .iter()
        .map(|&l| 1.0 - (l - min) as f64 / range)
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.iter().map(|w| w - mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthControlConfig {
    pub lambda_think: f64,
    pub lambda_answer: f64,
    pub beta_think: f64,
    pub beta_answer: f64,
    /// Percentile of base scores a minimum-length response must reach to earn
    /// its conciseness bonus (nearest-rank convention).
    pub tau_percentile: f64,
}

impl Default for LengthControlConfig {
    fn default() -> Self {
        Self {
            lambda_think: 0.5,
            lambda_answer: 0.5,
            beta_think: 0.5,
            beta_answer: 0.5,
            tau_percentile: 80.0,
        }
    }
}

impl LengthControlConfig {
    /// Read the length-control knobs from a key-value config; absent keys
    /// keep the stock values (lambda/beta 0.5, tau 80).
    pub fn from_config(cfg: &KvConfig) -> Result<Self, ConfigError> {
        let defaults = Self::default();
        Ok(Self {
            lambda_think: cfg.f64_or("lambda_think", defaults.lambda_think)?,
            lambda_answer: cfg.f64_or("lambda_answer", defaults.lambda_answer)?,
            beta_think: cfg.f64_or("beta_think", defaults.beta_think)?,
            beta_answer: cfg.f64_or("beta_answer", defaults.beta_answer)?,
            tau_percentile: cfg.f64_or("tau_percentile", defaults.tau_percentile)?,
        })
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        for &(name, v) in &[
            ("lambda_think", self.lambda_think),
            ("lambda_answer", self.lambda_answer),
            ("beta_think", self.beta_think),
            ("beta_answer", self.beta_answer),
        ] {
            if v < 0.0 || v.is_nan() {
                let _ = name;
                return Err(RewardError::NegativeWeight(v));
            }
        }
        if !(0.0..=100.0).contains(&self.tau_percentile) {
            return Err(RewardError::InvalidPercentile(self.tau_percentile));
        }
        Ok(())
    }
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)` (1-based) of
/// the sorted data, with rank clamped into `[1, n]`.
pub fn nearest_rank_percentile(values: &[f64], percentile: f64) -> Result<f64, RewardError> {
    if values.is_empty() {
        return Err(RewardError::GroupTooSmall { min: 1, got: 0 });
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(RewardError::InvalidPercentile(percentile));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Decomposition of one response's final reward. The parts always sum to
/// `final_reward` exactly (it is computed as that sum).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub base: f64,
    pub length_adj_think: f64,
    pub length_adj_answer: f64,
    pub bonus: f64,
    #[serde(rename = "final")]
    pub final_reward: f64,
}

/// Final rewards: base plus the two weighted zero-sum length adjustments,
/// plus quality-gated conciseness bonuses.
///
/// The response with the minimum reasoning length earns `beta_think` if its
/// base reward reaches the group's `tau_percentile` of base scores; same for
/// the minimum answer length with `beta_answer`. Length ties resolve to the
/// earliest response, and one response may earn both bonuses.
pub fn final_rewards(
    group: &ResponseGroup,
    base: &[f64],
    cfg: &LengthControlConfig,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    group.validate()?;
    cfg.validate()?;
    let n = group.responses.len();
    if base.len() != n {
        return Err(RewardError::LengthMismatch {
            expected: n,
            got: base.len(),
        });
    }
    let think_lens: Vec<u64> = group.responses.iter().map(|r| r.think_len).collect();
    let answer_lens: Vec<u64> = group.responses.iter().map(|r| r.answer_len).collect();
    let w_think = length_weights(&think_lens)?;
    let w_answer = length_weights(&answer_lens)?;
    let threshold = nearest_rank_percentile(base, cfg.tau_percentile)?;

    let argmin = |lens: &[u64]| {
        let mut best = 0;
        for (i, &l) in lens.iter().enumerate() {
            if l < lens[best] {
                best = i;
            }
        }
        best
    };
    let min_think = argmin(&think_lens);
    let min_answer = argmin(&answer_lens);

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let length_adj_think = cfg.lambda_think * w_think[i];
        let length_adj_answer = cfg.lambda_answer * w_answer[i];
        let mut bonus = 0.0;
        if i == min_think && base[i] >= threshold {
            bonus += cfg.beta_think;
        }
        if i == min_answer && base[i] >= threshold {
            bonus += cfg.beta_answer;
        }
        out.push(RewardBreakdown {
            base: base[i],
            length_adj_think,
            length_adj_answer,
            bonus,
            final_reward: base[i] + length_adj_think + length_adj_answer + bonus,
        });
    }
    Ok(out)
}

/// Group-relative advantages: `(r - mean) / (std + eps)` with population
/// standard deviation. A zero-variance group yields all zeros.
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall {
            min: 2,
            got: rewards.len(),
        });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPSILON)).collect())
}

/// Overlong filter: `true` marks a rollout excluded because its length
/// reached the generation ceiling (closed boundary: `len >= max_len`).
/// Masked rollouts are meant to drop out of every downstream statistic, the
/// loss and the group length normalization alike.
pub fn overlong_mask(lengths: &[u64], max_len: u64) -> Result<Vec<bool>, RewardError> {
    if max_len == 0 {
        return Err(RewardError::InvalidMaxLen);
    }
    Ok(lengths.iter().map(|&l| l >= max_len).collect())
}
