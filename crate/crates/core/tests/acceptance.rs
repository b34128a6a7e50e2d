//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantities (visible with `--nocapture`).
//!
//! Criterion 11 (CLI byte-determinism) lives in the CLI crate's acceptance
//! target; everything else is here.

use postkit_core::chat_template::{
    render, strip_reasoning, truncate_budget, Conversation, Message, ReasoningMode,
};
use postkit_core::config::KvConfig;
use postkit_core::curriculum::{
    gaussian_weight, sample_batch, wsd_lr, wsd_lr_at, CurriculumConfig, TaskProfile, WsdConfig,
};
use postkit_core::data_filter::{
    alignment_filter, default_alignment_patterns, filter_corpus, repetition_check,
    structural_check, RepetitionConfig, StructuralFailure,
};
use postkit_core::quant_planner::{
    memory_estimate, plan, reference_pattern_52, LayerKind, ModelDims, Precision, QuantPolicy,
};
use postkit_core::reward_engine::{
    circular_schedule, final_rewards, genrm_reward, length_weights, tiebreak, GenRmRewardConfig,
    JudgeGroundTruth, JudgePrediction, LengthControlConfig, PairVerdict, Response, ResponseGroup,
};
use postkit_core::router_sim::{lb_loss, simulate_balance, RouterConfig, SimulationConfig};
use postkit_core::tokenize::WhitespaceTokenizer;
use rand::Rng;
use std::time::Instant;

fn stream(seed: u64, salt: u64) -> rand_chacha::ChaCha8Rng {
    postkit_core::rng::stream(seed, 1000 + salt, 0)
}

#[test]
fn criterion_01_genrm_reward_grid() {
    let start = Instant::now();
    // Independent oracle coded from scratch.
    let oracle = |ph1: f64, ph2: f64, pr: f64, violation: bool, gh1: f64, gh2: f64, gr: f64| {
        let mut total = 0.0;
        if violation {
            total -= 10.0;
        }
        total -= (ph1 - gh1).abs();
        total -= (ph2 - gh2).abs();
        total -= 1.0 * (pr - gr).abs();
        total
    };
    let cfg = GenRmRewardConfig::default();
    let mut cases = 0u64;
    for ph1 in 1..=5 {
        for ph2 in 1..=5 {
            for pr in 1..=6 {
                for violation in [false, true] {
                    for gh1 in 1..=5 {
                        for gh2 in 1..=5 {
                            for gr in 1..=6 {
                                let pred = JudgePrediction::new(
                                    ph1 as f64,
                                    ph2 as f64,
                                    pr as f64,
                                    violation,
                                )
                                .unwrap();
                                let truth =
                                    JudgeGroundTruth::new(gh1 as f64, gh2 as f64, gr as f64)
                                        .unwrap();
                                let got = genrm_reward(&pred, &truth, &cfg);
                                let want = oracle(
                                    ph1 as f64, ph2 as f64, pr as f64, violation, gh1 as f64,
                                    gh2 as f64, gr as f64,
                                );
                                assert_eq!(got, want, "grid mismatch at {pred:?} vs {truth:?}");
                                assert!(got <= 0.0);
                                cases += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    // Perfect prediction scores zero.
    let truth = JudgeGroundTruth::new(4.0, 2.0, 3.0).unwrap();
    let pred = JudgePrediction::new(4.0, 2.0, 3.0, false).unwrap();
    assert_eq!(genrm_reward(&pred, &truth, &cfg), 0.0);

    // Defaults load from config when keys are absent, overrides win otherwise.
    let from_empty = GenRmRewardConfig::from_config(&KvConfig::parse("").unwrap()).unwrap();
    assert_eq!(from_empty.format_penalty, 10.0);
    assert_eq!(from_empty.ranking_weight, 1.0);
    let overridden =
        GenRmRewardConfig::from_config(&KvConfig::parse("c1 = 4\nc2 = 0.5\n").unwrap()).unwrap();
    assert_eq!(overridden.format_penalty, 4.0);
    assert_eq!(overridden.ranking_weight, 0.5);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 1 runtime {elapsed:?}");
    println!("[acceptance] criterion 1: PASS - {cases} grid cases match the oracle exactly, defaults c1=10/c2=1, in {elapsed:?}");
}

#[test]
fn criterion_02_circular_schedule_properties() {
    let start = Instant::now();
    for n in 2..=64 {
        let pairs = circular_schedule(n).unwrap();
        assert_eq!(pairs.len(), n, "exactly n comparisons");
        let mut as_first = vec![0usize; n];
        let mut as_second = vec![0usize; n];
        for &(a, b) in &pairs {
            assert_eq!(b, (a + 1) % n, "successor structure");
            as_first[a] += 1;
            as_second[b] += 1;
        }
        assert!(as_first.iter().all(|&c| c == 1), "judged once as first");
        assert!(as_second.iter().all(|&c| c == 1), "judged once as second");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "criterion 2 runtime {elapsed:?}");
    println!("[acceptance] criterion 2: PASS - N=2..64 all give N pairs with each response judged twice in opposite positions, in {elapsed:?}");
}

#[test]
fn criterion_03_length_control_algebra() {
    let start = Instant::now();
    let mut rng = stream(3, 3);
    let groups = 10_000;
    for case in 0..groups {
        let n = rng.gen_range(2..=32);
        let equal_lens = case % 97 == 0;
        let responses: Vec<Response> = (0..n)
            .map(|id| {
                let think = if equal_lens { 500 } else { rng.gen_range(0..10_000) };
                let answer = if equal_lens { 100 } else { rng.gen_range(0..2_000) };
                Response { id, think_len: think, answer_len: answer, total_len: think + answer }
            })
            .collect();
        let group = ResponseGroup { prompt_id: format!("g{case}"), responses };
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=5.0)).collect();

        let think_lens: Vec<u64> = group.responses.iter().map(|r| r.think_len).collect();
        let answer_lens: Vec<u64> = group.responses.iter().map(|r| r.answer_len).collect();
        assert!(length_weights(&think_lens).unwrap().iter().sum::<f64>().abs() < 1e-12);
        assert!(length_weights(&answer_lens).unwrap().iter().sum::<f64>().abs() < 1e-12);

        let out = final_rewards(&group, &base, &LengthControlConfig::default()).unwrap();
        let sum_final: f64 = out.iter().map(|r| r.final_reward).sum();
        let sum_base: f64 = base.iter().sum();
        let sum_bonus: f64 = out.iter().map(|r| r.bonus).sum();
        assert!(
            (sum_final - sum_base - sum_bonus).abs() < 1e-10,
            "zero-sum violated: {} vs {}",
            sum_final,
            sum_base + sum_bonus
        );

        // Tiebreak conserves pair sums.
        let tie = rng.gen_range(1.0..=5.0_f64);
        let ranking = rng.gen_range(1.0..=6.0);
        let verdict = PairVerdict {
            first: 0,
            second: 1,
            score_first: tie,
            score_second: tie,
            ranking,
        };
        let broken = tiebreak(verdict);
        assert!((broken.score_first + broken.score_second - 2.0 * tie).abs() < 1e-12);
    }

    // Monotonicity in think length under fixed base, bonuses off.
    let mut rng = stream(3, 4);
    for case in 0..2_000 {
        let n = rng.gen_range(2..=16);
        let thinks: Vec<u64> = (0..n).map(|_| rng.gen_range(0..5_000)).collect();
        let group = ResponseGroup {
            prompt_id: format!("m{case}"),
            responses: thinks
                .iter()
                .enumerate()
                .map(|(id, &t)| Response { id, think_len: t, answer_len: 50, total_len: t + 50 })
                .collect(),
        };
        let base = vec![3.0; n];
        let cfg = LengthControlConfig { beta_think: 0.0, beta_answer: 0.0, ..Default::default() };
        let out = final_rewards(&group, &base, &cfg).unwrap();
        for i in 0..n {
            for j in 0..n {
                if thinks[i] < thinks[j] {
                    assert!(out[i].final_reward >= out[j].final_reward - 1e-12);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 3 runtime {elapsed:?}");
    println!("[acceptance] criterion 3: PASS - {groups} random groups: centered weights sum to 0 (<1e-12), totals decompose, tiebreak conserves sums, think-length monotonicity holds, in {elapsed:?}");
}

#[test]
fn criterion_04_quality_gate_against_sort_oracle() {
    let start = Instant::now();
    let mut rng = stream(4, 0);
    for case in 0..1_000 {
        let n = rng.gen_range(2..=16);
        let responses: Vec<Response> = (0..n)
            .map(|id| {
                let think = rng.gen_range(0..1_000);
                let answer = rng.gen_range(0..1_000);
                Response { id, think_len: think, answer_len: answer, total_len: think + answer }
            })
            .collect();
        let group = ResponseGroup { prompt_id: format!("q{case}"), responses };
        // Coarse scores make gate boundary ties common.
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=5) as f64).collect();
        let out = final_rewards(&group, &base, &LengthControlConfig::default()).unwrap();

        // Sort-based oracle for the nearest-rank 80th percentile.
        let mut sorted = base.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((80.0 / 100.0) * n as f64).ceil() as usize;
        let threshold = sorted[rank.clamp(1, n) - 1];

        let first_min = |lens: Vec<u64>| {
            let mut best = 0usize;
            for (i, &l) in lens.iter().enumerate() {
                if l < lens[best] {
                    best = i;
                }
            }
            best
        };
        let min_think = first_min(group.responses.iter().map(|r| r.think_len).collect());
        let min_answer = first_min(group.responses.iter().map(|r| r.answer_len).collect());
        for (i, r) in out.iter().enumerate() {
            let mut expected = 0.0;
            if i == min_think && base[i] >= threshold {
                expected += 0.5;
            }
            if i == min_answer && base[i] >= threshold {
                expected += 0.5;
            }
            assert_eq!(r.bonus, expected, "bonus mismatch in case {case} at {i}");
        }
    }
    let elapsed = start.elapsed();
    println!("[acceptance] criterion 4: PASS - bonuses match the nearest-rank-80 sort oracle on 1000 random groups, in {elapsed:?}");
}

#[test]
fn criterion_05_curriculum_composition_and_drift() {
    let start = Instant::now();
    let mut rng = stream(5, 0);
    let domains = ["math", "code", "science"];
    let ratios = [0.5, 0.3, 0.2];
    let pool: Vec<TaskProfile> = (0..600)
        .map(|i| TaskProfile {
            task_id: format!("t{i}"),
            domain: domains[i % 3].to_string(),
            pass_rate: rng.gen_range(0.0..=1.0),
        })
        .collect();
    let cfg = CurriculumConfig {
        domain_ratios: domains
            .iter()
            .zip(ratios)
            .map(|(d, r)| (d.to_string(), r))
            .collect(),
        mu_start: 0.9,
        mu_end: 0.2,
        sigma: 0.2,
        total_steps: 100,
        batch_size: 64,
        seed: 17,
    };

    // (a) Per-domain batch fractions match ratios within one sample.
    for step in 0..=100 {
        let plan = sample_batch(&pool, &cfg, step).unwrap();
        assert_eq!(plan.entries.len(), 64);
        for (domain, ratio) in domains.iter().zip(ratios) {
            let count = plan.domain_counts.get(*domain).copied().unwrap_or(0);
            assert!(
                (count as f64 - ratio * 64.0).abs() < 1.0,
                "step {step}: {domain} count {count} vs exact {}",
                ratio * 64.0
            );
        }
    }

    // (b) Downward difficulty drift. The exact single-draw expectation
    // E_w[pass] = sum(p*w)/sum(w) must be non-increasing as mu ramps down.
    let pass_rates: Vec<f64> = pool.iter().map(|p| p.pass_rate).collect();
    let mut prev = f64::INFINITY;
    for step in 0..=100 {
        let mu = cfg.target_mean(step);
        let weights: Vec<f64> = pass_rates
            .iter()
            .map(|&p| gaussian_weight(p, mu, cfg.sigma))
            .collect();
        let expectation = pass_rates
            .iter()
            .zip(&weights)
            .map(|(p, w)| p * w)
            .sum::<f64>()
            / weights.iter().sum::<f64>();
        assert!(expectation <= prev + 1e-12, "expected pass rate rose at step {step}");
        prev = expectation;
    }

    // Empirical batch means, averaged over seeded replicas: block averages
    // fall strictly and adjacent steps never rise beyond sampling noise.
    let replicas = 64;
    let mut step_means = Vec::new();
    for step in 0..=100u64 {
        let mut total = 0.0;
        for rep in 0..replicas {
            let mut cfg_rep = cfg.clone();
            cfg_rep.seed = 1000 + rep;
            let plan = sample_batch(&pool, &cfg_rep, step).unwrap();
            let lookup: std::collections::HashMap<&str, f64> = pool
                .iter()
                .map(|p| (p.task_id.as_str(), p.pass_rate))
                .collect();
            total += plan
                .entries
                .iter()
                .map(|t| lookup[t.as_str()])
                .sum::<f64>()
                / plan.entries.len() as f64;
        }
        step_means.push(total / replicas as f64);
    }
    for pair in step_means.windows(2) {
        assert!(pair[1] <= pair[0] + 0.02, "adjacent uptick beyond noise: {pair:?}");
    }
    let blocks: Vec<f64> = step_means
        .chunks(10)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for pair in blocks.windows(2) {
        assert!(pair[1] < pair[0], "block averages must fall: {blocks:?}");
    }
    assert!(step_means[0] - step_means[100] > 0.3, "overall drift too small");

    // (c) Monte-Carlo selection ratio vs the closed-form density ratio.
    let two_tasks = vec![
        TaskProfile { task_id: "easy".into(), domain: "math".into(), pass_rate: 0.9 },
        TaskProfile { task_id: "hard".into(), domain: "math".into(), pass_rate: 0.1 },
    ];
    let mut mc_cfg = CurriculumConfig {
        domain_ratios: std::iter::once(("math".to_string(), 1.0)).collect(),
        mu_start: 0.9,
        mu_end: 0.9,
        sigma: 0.2,
        total_steps: 1,
        batch_size: 1,
        seed: 0,
    };
    let draws = 100_000;
    let mut hard_picks = 0u64;
    for draw in 0..draws {
        mc_cfg.seed = draw;
        let plan = sample_batch(&two_tasks, &mc_cfg, 0).unwrap();
        if plan.entries[0] == "hard" {
            hard_picks += 1;
        }
    }
    let w_easy = gaussian_weight(0.9, 0.9, 0.2);
    let w_hard = gaussian_weight(0.1, 0.9, 0.2);
    let p_hard = w_hard / (w_easy + w_hard);
    let expected = draws as f64 * p_hard;
    let sigma = (draws as f64 * p_hard * (1.0 - p_hard)).sqrt();
    assert!(
        (hard_picks as f64 - expected).abs() <= 3.0 * sigma,
        "hard picks {hard_picks} vs expected {expected:.1} +- 3*{sigma:.1}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 5 runtime {elapsed:?}");
    println!("[acceptance] criterion 5: PASS - quotas within 1 sample, pass-rate drift non-increasing (exact + {replicas}-replica empirical), MC picks {hard_picks} vs {expected:.1}+-{:.1}, in {elapsed:?}", 3.0 * sigma);
}

#[test]
fn criterion_06_wsd_schedule_constants() {
    let start = Instant::now();
    // Reference constants scaled down a millionfold.
    let cfg = WsdConfig {
        warmup_tokens: 8_400,
        total_tokens: 25_000_000,
        stable_fraction: 0.8,
        lr_max: 1e-3,
        lr_min: 1e-5,
    };
    assert_eq!(wsd_lr(cfg.warmup_tokens, &cfg).unwrap(), 1e-3, "lr at warmup end");
    assert_eq!(wsd_lr(cfg.total_tokens, &cfg).unwrap(), 1e-5, "lr at end of training");

    let stable_end = cfg.stable_end();
    assert_eq!(stable_end, 20_000_000.0);
    for bp in [cfg.warmup_tokens as f64, stable_end, cfg.total_tokens as f64] {
        let left = wsd_lr_at(bp - 1e-6, &cfg).unwrap();
        let right = wsd_lr_at((bp + 1e-6).min(cfg.total_tokens as f64), &cfg).unwrap();
        assert!(
            (left - right).abs() < 1e-12,
            "discontinuity at {bp}: left {left} right {right}"
        );
    }
    let elapsed = start.elapsed();
    println!("[acceptance] criterion 6: PASS - lr(warmup)=1e-3 and lr(total)=1e-5 exactly, breakpoints continuous within 1e-12, in {elapsed:?}");
}

#[test]
fn criterion_07_router_balance() {
    let start = Instant::now();
    let cfg = SimulationConfig {
        router: RouterConfig::default(), // 128 experts, top-6, u=1e-3
        steps: 2000,
        tokens_per_step: 512,
        seed: 7,
        weight_spread: 1.0,
        noise: 1.0,
        balance_window: 50,
    };
    let balanced = simulate_balance(&cfg, 0).unwrap();
    let first_below = balanced.first_step_below(1.2);
    assert!(
        first_below.is_some_and(|s| s < 2000),
        "never reached max/mean < 1.2: min {}",
        balanced.min_windowed_ratio()
    );
    assert!(
        balanced.final_windowed_ratio < 1.2,
        "final ratio {}",
        balanced.final_windowed_ratio
    );

    // Same logit stream with bias updates disabled stays badly skewed.
    let mut frozen_cfg = cfg.clone();
    frozen_cfg.router.bias_update_rate = 0.0;
    let skewed = simulate_balance(&frozen_cfg, 0).unwrap();
    assert!(
        skewed.min_windowed_ratio() > 2.0,
        "u=0 run balanced unexpectedly: min {}",
        skewed.min_windowed_ratio()
    );

    // lb_loss equals alpha at exact uniformity.
    let rc = RouterConfig { n_experts: 8, top_k: 1, ..RouterConfig::default() };
    let probs = vec![vec![1.0 / 8.0; 8]; 8];
    let sels: Vec<Vec<usize>> = (0..8).map(|t| vec![t]).collect();
    let loss = lb_loss(&probs, &sels, &rc).unwrap();
    assert!((loss - rc.lb_coeff).abs() < 1e-15);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "criterion 7 runtime {elapsed:?}");
    println!(
        "[acceptance] criterion 7: PASS - balanced run reaches <1.2 at step {} (final {:.3}), u=0 stays at {:.1}, lb_loss=alpha at uniformity, in {elapsed:?}",
        first_below.unwrap(),
        balanced.final_windowed_ratio,
        skewed.min_windowed_ratio()
    );
}

fn synthetic_conversation(index: usize, reasoning_tokens: usize) -> Conversation {
    let reasoning = (0..reasoning_tokens)
        .map(|t| format!("r{index}x{t}"))
        .collect::<Vec<_>>()
        .join(" ");
    Conversation::new(
        vec![
            Message::user(format!("question {index}")),
            Message::assistant(format!("answer {index}")).with_reasoning(reasoning),
        ],
        ReasoningMode::On,
    )
}

#[test]
fn criterion_08_reasoning_control() {
    let start = Instant::now();
    let corpus: Vec<Conversation> = (0..100_000).map(|i| synthetic_conversation(i, 24)).collect();

    // Strip 10% then truncate 3%, mirroring the SFT preparation pipeline.
    let (stripped_corpus, strip_report) = strip_reasoning(corpus, 0.10, 20_250_811).unwrap();
    assert!(
        (9_500..=10_500).contains(&strip_report.stripped),
        "stripped {} outside [9500, 10500]",
        strip_report.stripped
    );
    let budgets = [4u64, 8, 16];
    let (_, trunc_report) =
        truncate_budget(stripped_corpus, 0.03, &budgets, 20_250_811, &WhitespaceTokenizer).unwrap();
    let processed = trunc_report.truncated + trunc_report.noop_within_budget;
    assert!(
        (2_500..=3_500).contains(&processed),
        "truncated {processed} outside [2500, 3500]"
    );

    // Exhaustive current-turn check over a 500-conversation multi-turn fixture.
    let mut rng = stream(8, 1);
    let mut checked_spans = 0usize;
    for c in 0..500 {
        let turns = rng.gen_range(2..=4);
        let mut messages = vec![Message::system("fixture")];
        for turn in 0..turns {
            messages.push(Message::user(format!("ask c{c} t{turn}")));
            let steps = rng.gen_range(1..=3);
            for step in 0..steps {
                messages.push(
                    Message::assistant(format!("reply c{c} t{turn} s{step}"))
                        .with_reasoning(format!("SENTINEL c{c} t{turn} s{step}")),
                );
            }
        }
        let conv = Conversation::new(messages, ReasoningMode::On);
        let last_user = conv.last_user_index().unwrap();
        let rendered = render(&conv).unwrap();
        for (i, msg) in conv.messages.iter().enumerate() {
            let Some(reasoning) = &msg.reasoning else { continue };
            if i > last_user {
                assert!(rendered.text.contains(reasoning), "current-turn reasoning missing");
            } else {
                assert!(
                    !rendered.text.contains(reasoning),
                    "prior-turn reasoning leaked: conv {c} message {i}"
                );
            }
        }
        for span in &rendered.included_reasoning_spans {
            assert!(span.message_index > last_user);
            checked_spans += 1;
        }
    }
    assert!(checked_spans > 0);

    let elapsed = start.elapsed();
    println!(
        "[acceptance] criterion 8: PASS - stripped {} in [9500,10500], truncated {processed} in [2500,3500], no prior-turn reasoning in 500 rendered fixtures, in {elapsed:?}",
        strip_report.stripped
    );
}

#[test]
fn criterion_09_filtering_rules() {
    let start = Instant::now();

    // Randomized repetition suite against an independent brute-force counter.
    let mut rng = stream(9, 2);
    let cases = 10_000;
    let mut failures_seen = 0usize;
    for case in 0..cases {
        let len = if case % 20 == 0 {
            rng.gen_range(0..=512)
        } else {
            rng.gen_range(0..=96)
        };
        let alphabet = rng.gen_range(2..=6);
        let tokens: Vec<u8> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
        let cfg = RepetitionConfig {
            ngram: rng.gen_range(2..=5),
            window: rng.gen_range(4..=64),
            window_threshold: rng.gen_range(2..=6),
            global_threshold: rng.gen_range(2..=10),
        };
        let fast = repetition_check(&tokens, &cfg).unwrap();
        let slow_pass = brute_force_passes(&tokens, &cfg);
        assert_eq!(
            fast.is_ok(),
            slow_pass,
            "disagreement: case {case}, cfg {cfg:?}, tokens {tokens:?}"
        );
        if let Err(witness) = fast {
            failures_seen += 1;
            // The witness n-gram really occurs at every reported position.
            for &pos in &witness.positions {
                assert_eq!(&tokens[pos..pos + cfg.ngram], witness.ngram.as_slice());
            }
        }
    }
    assert!(failures_seen > 100, "suite too easy: only {failures_seen} failures");

    // Quoted trigger examples for the structural and alignment rules.
    let patterns = default_alignment_patterns();
    assert!(alignment_filter("these are our values, after all", &patterns).is_err());
    assert!(alignment_filter("our nation above everything", &patterns).is_err());
    assert!(alignment_filter("our party decided", &patterns).is_err());
    assert!(alignment_filter("benign text about parties", &patterns).is_ok());

    let undeclared = Conversation::new(
        vec![
            Message::user("q"),
            Message::assistant("sure").with_tool_calls(vec![postkit_core::ToolCall {
                name: "search".into(),
                arguments: vec![],
            }]),
        ],
        ReasoningMode::Off,
    );
    assert!(matches!(
        structural_check(&undeclared),
        Err(StructuralFailure::UndeclaredToolCall { .. })
    ));

    // Report counts reconcile exactly on a mixed corpus.
    let mut corpus = Vec::new();
    for i in 0..200 {
        let conv = match i % 5 {
            0 => undeclared.clone(),
            1 => Conversation::new(
                vec![
                    Message::user("q"),
                    Message::assistant("loop the loop ".repeat(30).trim().to_string()),
                ],
                ReasoningMode::Off,
            ),
            2 => Conversation::new(
                vec![Message::user("q"), Message::assistant("for our values!")],
                ReasoningMode::Off,
            ),
            _ => synthetic_conversation(i, 8),
        };
        corpus.push(conv);
    }
    let rep_cfg = RepetitionConfig {
        ngram: 3,
        window: 64,
        window_threshold: 4,
        global_threshold: 8,
    };
    let outcome = filter_corpus(&corpus, &rep_cfg, &patterns, &WhitespaceTokenizer).unwrap();
    let r = &outcome.report;
    assert_eq!(
        r.kept + r.rejected_structural + r.rejected_repetition + r.rejected_alignment,
        r.input_count
    );
    assert_eq!(r.input_count, 200);
    assert_eq!(r.rejected_structural, 40);
    assert_eq!(r.rejected_repetition, 40);
    assert_eq!(r.rejected_alignment, 40);
    assert_eq!(r.kept, 80);
    assert_eq!(outcome.kept_indices.len(), 80);

    let elapsed = start.elapsed();
    println!("[acceptance] criterion 9: PASS - {cases} repetition cases agree with brute force ({failures_seen} failing), quoted triggers fire, report reconciles 200 = 40+40+40+80, in {elapsed:?}");
}

#[test]
fn criterion_10_quant_plan_and_parameter_count() {
    let start = Instant::now();
    let pattern = reference_pattern_52();
    assert_eq!(pattern.layers.len(), 52);
    assert_eq!(pattern.count(LayerKind::Attention), 6);

    let selective = plan(&pattern, QuantPolicy::Selective);
    assert_eq!(selective.count_bf16(LayerKind::Attention), 6);
    assert_eq!(selective.count_bf16(LayerKind::Mamba), 6);
    assert_eq!(selective.count_bf16(LayerKind::Moe), 0);
    assert_eq!(selective.kv_cache, Precision::Fp8);
    assert_eq!(selective.conv1d, Precision::Bf16);
    assert!(selective.warnings.is_empty());

    // Parameter-count oracle: raw arithmetic from the architecture table,
    // independent of the library formulas.
    let md = 2688u64;
    let vocab = 131_072u64;
    let expert = 2 * md * 1856;
    let moe_layer = 130 * expert + md * 128;
    let inner = 64u64 * 64;
    let conv_dim = inner + 2 * 8 * 128;
    let mamba_layer =
        md * (2 * inner + 2 * 8 * 128 + 64) + conv_dim * 5 + 3 * 64 + inner + inner * md;
    let attn_layer = md * 32 * 128 + 2 * md * 2 * 128 + 32 * 128 * md;
    let n_moe = pattern.count(LayerKind::Moe) as u64;
    let n_mamba = pattern.count(LayerKind::Mamba) as u64;
    let oracle_total = n_moe * moe_layer
        + n_mamba * mamba_layer
        + 6 * attn_layer
        + 53 * md
        + 2 * vocab * md;

    let dims = ModelDims::default();
    let estimate = memory_estimate(&pattern, &selective, &dims).unwrap();
    assert_eq!(estimate.total_params, oracle_total, "library vs oracle param count");
    let target = 31.6e9;
    let rel = (estimate.total_params as f64 - target).abs() / target;
    assert!(rel < 0.05, "parameter count {} vs 31.6B: {rel:.4}", estimate.total_params);

    let elapsed = start.elapsed();
    println!(
        "[acceptance] criterion 10: PASS - selective plan 6+6 BF16 with KV fp8 and conv1d bf16; {} params within {:.2}% of 31.6B, in {elapsed:?}",
        estimate.total_params,
        rel * 100.0
    );
}

/// Brute-force repetition oracle (independent of the library implementation).
fn brute_force_passes(tokens: &[u8], cfg: &RepetitionConfig) -> bool {
    if tokens.len() < cfg.ngram {
        return true;
    }
    let n_grams = tokens.len() - cfg.ngram + 1;
    for i in 0..n_grams {
        let mut count = 0;
        for j in 0..n_grams {
            if tokens[i..i + cfg.ngram] == tokens[j..j + cfg.ngram] {
                count += 1;
            }
        }
        if count >= cfg.global_threshold {
            return false;
        }
    }
    for start in 0..tokens.len() {
        let end = (start + cfg.window).min(n_grams);
        let mut counts: std::collections::HashMap<&[u8], usize> =
            std::collections::HashMap::new();
        for pos in start..end {
            let c = counts.entry(&tokens[pos..pos + cfg.ngram]).or_insert(0);
            *c += 1;
            if *c >= cfg.window_threshold {
                return false;
            }
        }
    }
    true
}
