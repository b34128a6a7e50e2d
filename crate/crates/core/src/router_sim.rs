//! Desk-scale simulator of a granular MoE router: sigmoid gating, top-k
//! selection with always-on shared experts, bias-based load balancing that
//! needs no auxiliary loss term, and the standard load-balancing loss.
//!
//! The balancing bias enters expert *selection* only; gate weights always come
//! from the raw sigmoid scores of the selected experts, renormalized to sum
//! to one. Router weights can be frozen while the balancing bias keeps
//! updating, mirroring how the router is handled during RL.

use crate::rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RouterError {
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("top_k must satisfy 0 < top_k <= n_experts")]
    BadTopK,
    #[error("rates must be non-negative")]
    BadRate,
    #[error("logit at index {0} is not finite")]
    InvalidLogit(usize),
    #[error("router weights are frozen")]
    Frozen,
    #[error("selection index {0} out of range")]
    BadSelection(usize),
    #[error("load-balancing loss needs at least one token")]
    NoTokens,
    #[error("simulation needs steps > 0 and tokens_per_step > 0")]
    BadSimulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub n_experts: usize,
    pub top_k: usize,
    pub n_shared: usize,
    /// Per-update magnitude of the balancing-bias correction (u).
    pub bias_update_rate: f64,
    /// Coefficient of the auxiliary load-balancing loss (alpha).
    pub lb_coeff: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        // Reference architecture: 128 routable experts, 6 active, 2 shared,
        // bias update rate 1e-3, loss coefficient 1e-4.
        Self {
            n_experts: 128,
            top_k: 6,
            n_shared: 2,
            bias_update_rate: 1e-3,
            lb_coeff: 1e-4,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouterError> {
        if self.top_k == 0 || self.top_k > self.n_experts {
            return Err(RouterError::BadTopK);
        }
        // Zero disables the corresponding mechanism (used for ablations).
        if self.bias_update_rate < 0.0 || self.lb_coeff < 0.0 {
            return Err(RouterError::BadRate);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterState {
    pub expert_bias: Vec<f64>,
    pub cumulative_load: Vec<u64>,
}

impl RouterState {
    pub fn new(n_experts: usize) -> Self {
        Self {
            expert_bias: vec![0.0; n_experts],
            cumulative_load: vec![0; n_experts],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    /// Selected expert indices, strongest first.
    pub selected: Vec<usize>,
    /// Gate weight per selected expert; sums to 1.
    pub gates: Vec<f64>,
    /// Combined weight of the always-on shared experts.
    pub shared_gate: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Route one token: score experts with sigmoid gating, pick the top-k by
/// score plus balancing bias, and weight the picks by their raw scores
/// renormalized to sum to one. Shared experts bypass selection entirely.
pub fn route(
    logits: &[f64],
    state: &RouterState,
    cfg: &RouterConfig,
) -> Result<RoutingDecision, RouterError> {
    cfg.validate()?;
    if logits.len() != cfg.n_experts || state.expert_bias.len() != cfg.n_experts {
        return Err(RouterError::ShapeMismatch {
            expected: cfg.n_experts,
            got: logits.len(),
        });
    }
    if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
        return Err(RouterError::InvalidLogit(i));
    }
    let scores: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let mut order: Vec<usize> = (0..cfg.n_experts).collect();
    // Bias shifts selection order only; ties resolve to the lower index. The
    // comparator is a strict total order, so partial selection plus a sort of
    // the prefix is deterministic.
    let by_key = |a: &usize, b: &usize| {
        let ka = scores[*a] + state.expert_bias[*a];
        let kb = scores[*b] + state.expert_bias[*b];
        kb.partial_cmp(&ka).expect("finite keys").then(a.cmp(b))
    };
    if cfg.top_k < cfg.n_experts {
        order.select_nth_unstable_by(cfg.top_k, by_key);
    }
    let mut selected: Vec<usize> = order[..cfg.top_k].to_vec();
    selected.sort_by(by_key);
    let total: f64 = selected.iter().map(|&i| scores[i]).sum();
    let gates: Vec<f64> = selected.iter().map(|&i| scores[i] / total).collect();
    Ok(RoutingDecision {
        selected,
        gates,
        shared_gate: 1.0,
    })
}

/// Apply one balancing update from observed batch loads: the bias of each
/// underloaded expert rises by the update rate, each overloaded expert's
/// falls, experts exactly at the mean stay put. Cumulative load accumulates.
pub fn update_bias(
    state: &mut RouterState,
    batch_loads: &[u64],
    cfg: &RouterConfig,
) -> Result<(), RouterError> {
    cfg.validate()?;
    if batch_loads.len() != state.expert_bias.len() {
        return Err(RouterError::ShapeMismatch {
            expected: state.expert_bias.len(),
            got: batch_loads.len(),
        });
    }
    let mean = batch_loads.iter().sum::<u64>() as f64 / batch_loads.len() as f64;
    for (i, &load) in batch_loads.iter().enumerate() {
        let diff = mean - load as f64;
        // signum(0.0) is 1.0 in IEEE terms; an expert exactly at the mean
        // must not move.
        if diff != 0.0 {
            state.expert_bias[i] += cfg.bias_update_rate * diff.signum();
        }
        state.cumulative_load[i] += load;
    }
    Ok(())
}

/// GShard-style load-balancing loss: `alpha * E * sum_i f_i * p_i`, where
/// `f_i` is the fraction of routing slots that went to expert `i` and `p_i`
/// its mean gate probability. Equals `alpha` exactly at perfect uniformity.
pub fn lb_loss(
    gate_probs: &[Vec<f64>],
    selections: &[Vec<usize>],
    cfg: &RouterConfig,
) -> Result<f64, RouterError> {
    cfg.validate()?;
    if gate_probs.is_empty() || gate_probs.len() != selections.len() {
        return Err(RouterError::NoTokens);
    }
    let n = cfg.n_experts;
    let tokens = gate_probs.len();
    let mut counts = vec![0u64; n];
    let mut prob_sums = vec![0.0; n];
    for (probs, sel) in gate_probs.iter().zip(selections) {
        if probs.len() != n {
            return Err(RouterError::ShapeMismatch { expected: n, got: probs.len() });
        }
        if sel.len() != cfg.top_k {
            return Err(RouterError::ShapeMismatch { expected: cfg.top_k, got: sel.len() });
        }
        for (i, &p) in probs.iter().enumerate() {
            prob_sums[i] += p;
        }
        for &s in sel {
            if s >= n {
                return Err(RouterError::BadSelection(s));
            }
            counts[s] += 1;
        }
    }
    let slots = (tokens * cfg.top_k) as f64;
    let mut dot = 0.0;
    for i in 0..n {
        let f_i = counts[i] as f64 / slots;
        let p_i = prob_sums[i] / tokens as f64;
        dot += f_i * p_i;
    }
    Ok(cfg.lb_coeff * n as f64 * dot)
}

/// Gate probabilities and selections for one sequence's tokens.
pub type SequenceRouting = (Vec<Vec<f64>>, Vec<Vec<usize>>);

/// Mean of per-sequence losses, for the sequence-scoped regularizer variant.
pub fn lb_loss_per_sequence(
    sequences: &[SequenceRouting],
    cfg: &RouterConfig,
) -> Result<f64, RouterError> {
    if sequences.is_empty() {
        return Err(RouterError::NoTokens);
    }
    let mut total = 0.0;
    for (probs, sels) in sequences {
        total += lb_loss(probs, sels, cfg)?;
    }
    Ok(total / sequences.len() as f64)
}

/// A router with learnable per-expert weights plus balancing state. Freezing
/// rejects weight mutation while routing and bias updates keep working.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    cfg: RouterConfig,
    weights: Vec<f64>,
    pub state: RouterState,
    frozen: bool,
}

impl Router {
    pub fn new(cfg: RouterConfig, weights: Vec<f64>) -> Result<Self, RouterError> {
        cfg.validate()?;
        if weights.len() != cfg.n_experts {
            return Err(RouterError::ShapeMismatch {
                expected: cfg.n_experts,
                got: weights.len(),
            });
        }
        let state = RouterState::new(cfg.n_experts);
        Ok(Self { cfg, weights, state, frozen: false })
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freeze router weights. Bias updates stay live.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<(), RouterError> {
        if self.frozen {
            return Err(RouterError::Frozen);
        }
        if weights.len() != self.cfg.n_experts {
            return Err(RouterError::ShapeMismatch {
                expected: self.cfg.n_experts,
                got: weights.len(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    pub fn apply_weight_update(&mut self, delta: &[f64]) -> Result<(), RouterError> {
        if self.frozen {
            return Err(RouterError::Frozen);
        }
        if delta.len() != self.cfg.n_experts {
            return Err(RouterError::ShapeMismatch {
                expected: self.cfg.n_experts,
                got: delta.len(),
            });
        }
        for (w, d) in self.weights.iter_mut().zip(delta) {
            *w += d;
        }
        Ok(())
    }

    /// Token logits are the router weights plus a per-token perturbation.
    pub fn logits(&self, perturbation: &[f64]) -> Result<Vec<f64>, RouterError> {
        if perturbation.len() != self.cfg.n_experts {
            return Err(RouterError::ShapeMismatch {
                expected: self.cfg.n_experts,
                got: perturbation.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(perturbation)
            .map(|(w, p)| w + p)
            .collect())
    }

    pub fn route(&self, logits: &[f64]) -> Result<RoutingDecision, RouterError> {
        route(logits, &self.state, &self.cfg)
    }

    pub fn update_bias(&mut self, batch_loads: &[u64]) -> Result<(), RouterError> {
        let cfg = self.cfg;
        update_bias(&mut self.state, batch_loads, &cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub router: RouterConfig,
    pub steps: usize,
    pub tokens_per_step: usize,
    pub seed: u64,
    /// Standard deviation of the fixed per-expert logit offsets (the skew).
    pub weight_spread: f64,
    /// Standard deviation of the per-token logit noise.
    pub noise: f64,
    /// Number of trailing steps pooled when measuring load balance.
    pub balance_window: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            router: RouterConfig::default(),
            steps: 2000,
            tokens_per_step: 512,
            seed: 0,
            weight_spread: 1.0,
            noise: 1.0,
            balance_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub max_load: u64,
    pub mean_load: f64,
    /// max/mean over this step's batch alone.
    pub batch_ratio: f64,
    /// max/mean pooled over the trailing balance window.
    pub windowed_ratio: f64,
    pub lb_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub steps: Vec<StepStats>,
    /// Bias vector snapshots at `snapshot_every` intervals (step, bias).
    pub bias_snapshots: Vec<(usize, Vec<f64>)>,
    /// Load histograms at the same intervals (step, per-expert loads).
    pub load_histograms: Vec<(usize, Vec<u64>)>,
    pub final_windowed_ratio: f64,
}

impl SimulationReport {
    /// First step whose windowed load ratio drops below `threshold`.
    pub fn first_step_below(&self, threshold: f64) -> Option<usize> {
        self.steps
            .iter()
            .find(|s| s.windowed_ratio < threshold)
            .map(|s| s.step)
    }

    /// Smallest windowed ratio observed after the window has filled.
    pub fn min_windowed_ratio(&self) -> f64 {
        self.steps
            .iter()
            .skip(self.config.balance_window)
            .map(|s| s.windowed_ratio)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Run the balancing simulation on persistently skewed synthetic logits:
/// fixed per-expert offsets draw the skew, per-token Gaussian noise keeps the
/// stream stochastic, and the bias update runs once per step. The logit
/// stream depends only on `(seed, step)`, never on the bias state, so runs
/// with different update rates see identical inputs.
pub fn simulate_balance(
    cfg: &SimulationConfig,
    snapshot_every: usize,
) -> Result<SimulationReport, RouterError> {
    cfg.router.validate()?;
    if cfg.steps == 0 || cfg.tokens_per_step == 0 {
        return Err(RouterError::BadSimulation);
    }
    let n = cfg.router.n_experts;
    let offsets: Vec<f64> = {
        let mut rng = rng::stream(cfg.seed, rng::domain::ROUTER_WEIGHTS, 0);
        let normal = Normal::new(0.0, cfg.weight_spread).expect("positive spread");
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    };
    let mut router = Router::new(cfg.router, offsets)?;
    // Balancing operates with frozen router weights.
    router.freeze();

    let noise_dist = Normal::new(0.0, cfg.noise).expect("positive noise");
    let mut report = SimulationReport {
        config: cfg.clone(),
        steps: Vec::with_capacity(cfg.steps),
        bias_snapshots: Vec::new(),
        load_histograms: Vec::new(),
        final_windowed_ratio: f64::NAN,
    };
    let mut window: std::collections::VecDeque<Vec<u64>> =
        std::collections::VecDeque::with_capacity(cfg.balance_window);
    let mut noise_buf = vec![0.0; n];

    for step in 0..cfg.steps {
        let mut rng = rng::stream(cfg.seed, rng::domain::ROUTER_NOISE, step as u64 + 1);
        let mut loads = vec![0u64; n];
        let mut gate_rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.tokens_per_step);
        let mut sel_rows: Vec<Vec<usize>> = Vec::with_capacity(cfg.tokens_per_step);
        for _ in 0..cfg.tokens_per_step {
            for slot in noise_buf.iter_mut() {
                *slot = noise_dist.sample(&mut rng);
            }
            let logits = router.logits(&noise_buf)?;
            let decision = router.route(&logits)?;
            for &e in &decision.selected {
                loads[e] += 1;
            }
            // Full per-expert distribution for the loss: normalized sigmoid.
            let scores: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
            let total: f64 = scores.iter().sum();
            gate_rows.push(scores.iter().map(|s| s / total).collect());
            sel_rows.push(decision.selected);
        }

        if window.len() == cfg.balance_window {
            window.pop_front();
        }
        window.push_back(loads.clone());
        let mut pooled = vec![0u64; n];
        for past in &window {
            for (p, l) in pooled.iter_mut().zip(past) {
                *p += l;
            }
        }
        let ratio = |loads: &[u64]| {
            let max = *loads.iter().max().expect("non-empty") as f64;
            let mean = loads.iter().sum::<u64>() as f64 / loads.len() as f64;
            max / mean
        };
        let step_loss = lb_loss(&gate_rows, &sel_rows, &cfg.router)?;
        report.steps.push(StepStats {
            step,
            max_load: *loads.iter().max().expect("non-empty"),
            mean_load: loads.iter().sum::<u64>() as f64 / n as f64,
            batch_ratio: ratio(&loads),
            windowed_ratio: ratio(&pooled),
            lb_loss: step_loss,
        });
        if snapshot_every > 0 && step % snapshot_every == 0 {
            report
                .bias_snapshots
                .push((step, router.state.expert_bias.clone()));
            report.load_histograms.push((step, loads.clone()));
        }
        router.update_bias(&loads)?;
    }
    report.final_windowed_ratio = report
        .steps
        .last()
        .map(|s| s.windowed_ratio)
        .unwrap_or(f64::NAN);
    Ok(report)
}
