//! Pass-rate curriculum over verifiable-reward tasks, the warmup-stable-decay
//! learning-rate schedule, and the prompt-sensitivity metric.
//!
//! Batches hold fixed per-domain ratios. Within a domain, tasks are drawn
//! without replacement with probability proportional to a Gaussian density
//! centered on a target pass rate that ramps linearly from `mu_start` down to
//! `mu_end` over training, moving the batch from easy tasks to hard ones.

use crate::config::{ConfigError, KvConfig};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum CurriculumError {
    #[error("domain ratios must sum to 1 within 1e-9, got {0}")]
    RatiosDoNotSum(f64),
    #[error("domain ratio for {0:?} must be positive")]
    NonPositiveRatio(String),
    #[error("require 0 <= mu_end <= mu_start <= 1, got mu_start={mu_start}, mu_end={mu_end}")]
    BadMuRamp { mu_start: f64, mu_end: f64 },
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("batch_size and total_steps must be positive")]
    BadCounts,
    #[error("pass_rate must lie in [0, 1], got {0} for task {1:?}")]
    BadPassRate(f64, String),
    #[error("step {step} exceeds total_steps {total}")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("domain {0:?} has no eligible task")]
    EmptyDomain(String),
    #[error("need warmup_tokens < stable end < total_tokens (warmup={warmup}, stable_end={stable_end}, total={total})")]
    BadSchedule { warmup: u64, stable_end: f64, total: u64 },
    #[error("need 0 < lr_min < lr_max, got lr_min={lr_min}, lr_max={lr_max}")]
    BadLrRange { lr_min: f64, lr_max: f64 },
    #[error("tokens_seen {tokens} outside [0, {total}]")]
    TokensOutOfRange { tokens: f64, total: u64 },
    #[error("prompt sensitivity needs >= 2 prompts with >= 1 seed each")]
    BadAccuracyMatrix,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub task_id: String,
    pub domain: String,
    pub pass_rate: f64,
}

impl TaskProfile {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(0.0..=1.0).contains(&self.pass_rate) || self.pass_rate.is_nan() {
            return Err(CurriculumError::BadPassRate(
                self.pass_rate,
                self.task_id.clone(),
            ));
        }
        Ok(())
    }
}

/// Drop tasks the profiling checkpoint already solves at a 100% pass rate.
/// Order is preserved.
pub fn filter_solved(profiles: &[TaskProfile]) -> Vec<TaskProfile> {
    profiles
        .iter()
        .filter(|p| p.pass_rate < 1.0)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub domain_ratios: BTreeMap<String, f64>,
    pub mu_start: f64,
    pub mu_end: f64,
    pub sigma: f64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            domain_ratios: BTreeMap::new(),
            // The published recipe gives no endpoints or spread; these
            // reproduce the qualitative easy-to-hard drift and are overridable.
            mu_start: 0.9,
            mu_end: 0.2,
            sigma: 0.2,
            total_steps: 100,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let sum: f64 = self.domain_ratios.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CurriculumError::RatiosDoNotSum(sum));
        }
        for (domain, &ratio) in &self.domain_ratios {
            if ratio <= 0.0 || ratio.is_nan() {
                return Err(CurriculumError::NonPositiveRatio(domain.clone()));
            }
        }
        if !(0.0 <= self.mu_end && self.mu_end <= self.mu_start && self.mu_start <= 1.0) {
            return Err(CurriculumError::BadMuRamp {
                mu_start: self.mu_start,
                mu_end: self.mu_end,
            });
        }
        if self.sigma <= 0.0 || self.sigma.is_nan() {
            return Err(CurriculumError::BadSigma(self.sigma));
        }
        if self.batch_size == 0 || self.total_steps == 0 {
            return Err(CurriculumError::BadCounts);
        }
        Ok(())
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, CurriculumError> {
        let defaults = Self::default();
        let mut domain_ratios = BTreeMap::new();
        for (domain, value) in cfg.group("domain_ratio") {
            let ratio = value.parse().map_err(|_| ConfigError::BadValue {
                key: format!("domain_ratio.{domain}"),
                value,
                ty: "f64",
            })?;
            domain_ratios.insert(domain, ratio);
        }
        let out = Self {
            domain_ratios,
            mu_start: cfg.f64_or("mu_start", defaults.mu_start)?,
            mu_end: cfg.f64_or("mu_end", defaults.mu_end)?,
            sigma: cfg.f64_or("sigma", defaults.sigma)?,
            total_steps: cfg.u64_or("total_steps", defaults.total_steps)?,
            batch_size: cfg.usize_or("batch_size", defaults.batch_size)?,
            seed: cfg.u64_or("seed", defaults.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    /// Target mean pass rate at `step`: linear ramp from `mu_start` at step 0
    /// to `mu_end` at `total_steps`.
    pub fn target_mean(&self, step: u64) -> f64 {
        self.mu_start + (step as f64 / self.total_steps as f64) * (self.mu_end - self.mu_start)
    }
}

/// Unnormalized Gaussian weight of `pass_rate` under target `(mu, sigma)`.
pub fn gaussian_weight(pass_rate: f64, mu: f64, sigma: f64) -> f64 {
    let z = (pass_rate - mu) / sigma;
    (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub step: u64,
    pub entries: Vec<String>,
    pub domain_counts: BTreeMap<String, usize>,
    /// Domains whose quota exceeded the available tasks and fell back to
    /// sampling with replacement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replacement_fallback: Vec<String>,
}

/// Per-domain quotas: `round(ratio * batch_size)` reconciled to sum exactly
/// to `batch_size` by largest remainder. Every quota stays within 1 of its
/// exact share.
fn domain_quotas(ratios: &BTreeMap<String, f64>, batch_size: usize) -> BTreeMap<String, usize> {
    let mut quotas = BTreeMap::new();
    let mut remainders: Vec<(f64, &String)> = Vec::new();
    let mut assigned = 0usize;
    for (domain, &ratio) in ratios {
        let exact = ratio * batch_size as f64;
        let floor = exact.floor() as usize;
        quotas.insert(domain.clone(), floor);
        assigned += floor;
        remainders.push((exact - floor as f64, domain));
    }
    // Largest remainder first; ties resolve by domain name for determinism.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then(a.1.cmp(b.1)));
    for (_, domain) in remainders.into_iter().take(batch_size - assigned) {
        *quotas.get_mut(domain.as_str()).expect("inserted above") += 1;
    }
    quotas
}

/// Build the batch plan for `step`. Fully reproducible from
/// `(profiles, cfg, step)`: the generator stream is derived from
/// `(cfg.seed, step)` and domains are visited in sorted order.
pub fn sample_batch(
    profiles: &[TaskProfile],
    cfg: &CurriculumConfig,
    step: u64,
) -> Result<BatchPlan, CurriculumError> {
    cfg.validate()?;
    for p in profiles {
        p.validate()?;
    }
    if step > cfg.total_steps {
        return Err(CurriculumError::StepOutOfRange {
            step,
            total: cfg.total_steps,
        });
    }

    let mut by_domain: BTreeMap<&str, Vec<&TaskProfile>> = BTreeMap::new();
    for p in profiles {
        if cfg.domain_ratios.contains_key(&p.domain) {
            by_domain.entry(p.domain.as_str()).or_default().push(p);
        }
    }
    for domain in cfg.domain_ratios.keys() {
        if !by_domain.contains_key(domain.as_str()) {
            return Err(CurriculumError::EmptyDomain(domain.clone()));
        }
    }

    let mu = cfg.target_mean(step);
    let quotas = domain_quotas(&cfg.domain_ratios, cfg.batch_size);
    let mut rng = rng::stream(cfg.seed, rng::domain::CURRICULUM, step);
    let mut entries: Vec<(String, String)> = Vec::with_capacity(cfg.batch_size);
    let mut replacement_fallback = Vec::new();

    for (domain, tasks) in &by_domain {
        let quota = quotas[*domain];
        let with_replacement = quota > tasks.len();
        if with_replacement {
            replacement_fallback.push((*domain).to_string());
        }
        let mut weights: Vec<f64> = tasks
            .iter()
            .map(|t| gaussian_weight(t.pass_rate, mu, cfg.sigma))
            .collect();
        // A pool entirely in the density's far tail can underflow to zero
        // weight; fall back to uniform rather than dividing by zero.
        if weights.iter().sum::<f64>() == 0.0 {
            weights.fill(1.0);
        }
        let mut available: Vec<usize> = (0..tasks.len()).collect();
        for _ in 0..quota {
            let total: f64 = available.iter().map(|&i| weights[i]).sum();
            let mut ticket = rng.gen::<f64>() * total;
            let mut chosen_slot = available.len() - 1;
            for (slot, &i) in available.iter().enumerate() {
                ticket -= weights[i];
                if ticket <= 0.0 {
                    chosen_slot = slot;
                    break;
                }
            }
            let chosen = available[chosen_slot];
            entries.push((tasks[chosen].task_id.clone(), (*domain).to_string()));
            if !with_replacement {
                available.swap_remove(chosen_slot);
                if available.is_empty() {
                    break;
                }
            }
        }
    }

    // Fisher-Yates with the same stream so the plan order is seeded too.
    for i in (1..entries.len()).rev() {
        let j = rng.gen_range(0..=i);
        entries.swap(i, j);
    }

    let mut domain_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, domain) in &entries {
        *domain_counts.entry(domain.clone()).or_default() += 1;
    }
    Ok(BatchPlan {
        step,
        entries: entries.into_iter().map(|(task, _)| task).collect(),
        domain_counts,
        replacement_fallback,
    })
}

/// Warmup-stable-decay schedule over token counts: linear warmup to `lr_max`,
/// hold through `stable_fraction` of `total_tokens`, then log-linear decay
/// hitting `lr_min` exactly at `total_tokens`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsdConfig {
    pub warmup_tokens: u64,
    pub total_tokens: u64,
    pub stable_fraction: f64,
    pub lr_max: f64,
    pub lr_min: f64,
}

impl Default for WsdConfig {
    fn default() -> Self {
        // Reference pretraining constants: 8.4B warmup to 1e-3, max held for
        // 80% of 25T tokens, decayed to 1e-5 at the end.
        Self {
            warmup_tokens: 8_400_000_000,
            total_tokens: 25_000_000_000_000,
            stable_fraction: 0.8,
            lr_max: 1e-3,
            lr_min: 1e-5,
        }
    }
}

impl WsdConfig {
    pub fn stable_end(&self) -> f64 {
        self.stable_fraction * self.total_tokens as f64
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        let stable_end = self.stable_end();
        if !((self.warmup_tokens as f64) < stable_end && stable_end < self.total_tokens as f64) {
            return Err(CurriculumError::BadSchedule {
                warmup: self.warmup_tokens,
                stable_end,
                total: self.total_tokens,
            });
        }
        if !(0.0 < self.lr_min && self.lr_min < self.lr_max) {
            return Err(CurriculumError::BadLrRange {
                lr_min: self.lr_min,
                lr_max: self.lr_max,
            });
        }
        Ok(())
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, CurriculumError> {
        let defaults = Self::default();
        let out = Self {
            warmup_tokens: cfg.u64_or("warmup_tokens", defaults.warmup_tokens)?,
            total_tokens: cfg.u64_or("total_tokens", defaults.total_tokens)?,
            stable_fraction: cfg.f64_or("stable_fraction", defaults.stable_fraction)?,
            lr_max: cfg.f64_or("lr_max", defaults.lr_max)?,
            lr_min: cfg.f64_or("lr_min", defaults.lr_min)?,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Learning rate at an integer token count.
pub fn wsd_lr(tokens_seen: u64, cfg: &WsdConfig) -> Result<f64, CurriculumError> {
    wsd_lr_at(tokens_seen as f64, cfg)
}

/// Learning rate at a real-valued token position. Fractional positions are
/// accepted so the schedule's continuity at the breakpoints can be inspected
/// directly.
pub fn wsd_lr_at(tokens: f64, cfg: &WsdConfig) -> Result<f64, CurriculumError> {
    cfg.validate()?;
    if tokens.is_nan() || tokens < 0.0 || tokens > cfg.total_tokens as f64 {
        return Err(CurriculumError::TokensOutOfRange {
            tokens,
            total: cfg.total_tokens,
        });
    }
    let warmup = cfg.warmup_tokens as f64;
    let total = cfg.total_tokens as f64;
    let stable_end = cfg.stable_end();
    if tokens < warmup {
        return Ok(cfg.lr_max * (tokens / warmup));
    }
    if tokens <= stable_end {
        return Ok(cfg.lr_max);
    }
    if tokens == total {
        return Ok(cfg.lr_min);
    }
    let progress = (tokens - stable_end) / (total - stable_end);
    Ok(cfg.lr_max * (cfg.lr_min / cfg.lr_max).powf(progress))
}

/// Prompt sensitivity: the population standard deviation, across prompts, of
/// each prompt's mean accuracy over seeds.
pub fn prompt_sensitivity(accuracy: &[Vec<f64>]) -> Result<f64, CurriculumError> {
    if accuracy.len() < 2 || accuracy.iter().any(|row| row.is_empty()) {
        return Err(CurriculumError::BadAccuracyMatrix);
    }
    let means: Vec<f64> = accuracy
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let variance = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / means.len() as f64;
    Ok(variance.sqrt())
}
