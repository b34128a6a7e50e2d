//! Synthetic workload generators shared by the benchmarks.

use postkit_core::curriculum::TaskProfile;
use postkit_core::reward_engine::{circular_schedule, PairVerdict, Response, ResponseGroup};
use rand::Rng;

pub fn seeded_rng(seed: u64) -> impl Rng {
    postkit_core::rng::stream(seed, 4242, 0)
}

pub fn response_group(n: usize, seed: u64) -> (ResponseGroup, Vec<PairVerdict>) {
    let mut rng = seeded_rng(seed);
    let group = ResponseGroup {
        prompt_id: "bench".into(),
        responses: (0..n)
            .map(|id| {
                let think = rng.gen_range(0..20_000);
                let answer = rng.gen_range(0..4_000);
                Response { id, think_len: think, answer_len: answer, total_len: think + answer }
            })
            .collect(),
    };
    let verdicts = circular_schedule(n)
        .expect("n >= 2")
        .into_iter()
        .map(|(a, b)| PairVerdict {
            first: a,
            second: b,
            score_first: rng.gen_range(1..=5) as f64,
            score_second: rng.gen_range(1..=5) as f64,
            ranking: rng.gen_range(1..=6) as f64,
        })
        .collect();
    (group, verdicts)
}

pub fn task_pool(size: usize, domains: &[&str], seed: u64) -> Vec<TaskProfile> {
    let mut rng = seeded_rng(seed);
    (0..size)
        .map(|i| TaskProfile {
            task_id: format!("t{i}"),
            domain: domains[i % domains.len()].to_string(),
            pass_rate: rng.gen_range(0.0..=1.0),
        })
        .collect()
}

pub fn token_stream(len: usize, alphabet: u8, seed: u64) -> Vec<u8> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
}
