use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use anyhow::Result;
use postkit_core::router_sim::{simulate_balance, RouterConfig, SimulationConfig};
use std::path::PathBuf;

#[derive(Debug)]
pub struct Args {
    pub experts: usize,
    pub topk: usize,
    pub shared: usize,
    pub steps: usize,
    pub tokens_per_step: usize,
    pub update_rate: f64,
    pub lb_coeff: f64,
    pub spread: f64,
    pub noise: f64,
    pub window: usize,
    pub snapshot_every: usize,
    pub seed: u64,
    pub report: PathBuf,
}

pub fn run(args: Args) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("simulate-router");
    builder.seed(args.seed);

    let cfg = SimulationConfig {
        router: RouterConfig {
            n_experts: args.experts,
            top_k: args.topk,
            n_shared: args.shared,
            bias_update_rate: args.update_rate,
            lb_coeff: args.lb_coeff,
        },
        steps: args.steps,
        tokens_per_step: args.tokens_per_step,
        seed: args.seed,
        weight_spread: args.spread,
        noise: args.noise,
        balance_window: args.window,
    };
    let report = simulate_balance(&cfg, args.snapshot_every)?;
    io::write_atomic(&args.report, &io::to_json_pretty(&report)?)?;
    builder.finish(&cfg)
}
