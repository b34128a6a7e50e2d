//! `postkit` - deterministic post-training data transformations.
//!
//! Every subcommand reads JSONL and plain key-value config files, writes
//! outputs atomically, and emits a run manifest (config digest, seed, input
//! digests) so identical inputs and seed provably reproduce identical bytes.

mod commands;
mod io;
mod manifest;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use manifest::RunManifest;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "postkit", version, about = "Deterministic post-training data transformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the run manifest to this path (default: print to stderr).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Selective,
    AllFp8,
    AllBf16,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render conversations to prompt text with reasoning-mode control.
    RenderTemplate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Reasoning mode applied to every conversation.
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shard the input across N workers (output bytes are unaffected).
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Prepare an SFT corpus: strip reasoning from a fraction of samples and
    /// truncate a fraction of reasoning traces to sampled budgets.
    SftPrep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "strip-frac", default_value_t = 0.10)]
        strip_frac: f64,
        #[arg(long = "trunc-frac", default_value_t = 0.03)]
        trunc_frac: f64,
        /// Comma-separated token budgets drawn uniformly at truncation.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        budgets: Option<Vec<u64>>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score response groups: tiebreak verdicts, average base rewards, apply
    /// group-relative length control and conciseness bonuses.
    ScoreGroup {
        #[arg(long)]
        group: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build curriculum batch plans over a range of steps.
    ScheduleCurriculum {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Step range `A..B` (half-open) or a single step `K`.
        #[arg(long)]
        steps: String,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the warmup-stable-decay learning rate at a token count.
    Lr {
        #[arg(long)]
        tokens: u64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Filter a corpus through structural, repetition, and alignment rules.
    FilterData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Shard the input across N workers (output bytes are unaffected).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Label DPO preference pairs from annotated rollouts.
    LabelDpo {
        #[arg(long)]
        rollouts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate expert-bias load balancing on skewed synthetic logits.
    SimulateRouter {
        #[arg(long, default_value_t = 128)]
        experts: usize,
        #[arg(long, default_value_t = 6)]
        topk: usize,
        #[arg(long, default_value_t = 2)]
        shared: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long = "tokens-per-step", default_value_t = 512)]
        tokens_per_step: usize,
        #[arg(long = "update-rate", default_value_t = 1e-3)]
        update_rate: f64,
        #[arg(long = "lb-coeff", default_value_t = 1e-4)]
        lb_coeff: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 50)]
        window: usize,
        /// Record bias and load snapshots every N steps (0 disables).
        #[arg(long = "snapshot-every", default_value_t = 1)]
        snapshot_every: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compute a mixed-precision plan for a layer pattern.
    PlanQuant {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Selective)]
        policy: PolicyArg,
        /// Model dimensions config; enables the memory estimate.
        #[arg(long)]
        dims: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Standard deviation across prompts of per-prompt mean accuracy.
    PromptSensitivity {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

fn classify(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<postkit_core::jsonl::JsonlError>().is_some() {
        "jsonl"
    } else if err.downcast_ref::<postkit_core::config::ConfigError>().is_some() {
        "config"
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "invalid-input"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(manifest) => {
            let emit = (|| -> Result<()> {
                let bytes = io::to_json_pretty(&manifest)?;
                match &cli.manifest {
                    Some(path) => io::write_atomic(path, &bytes),
                    None => {
                        eprint!("{}", String::from_utf8_lossy(&bytes));
                        Ok(())
                    }
                }
            })();
            if let Err(err) = emit {
                eprintln!("failed to emit manifest: {err:#}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let report = ErrorReport {
                error: ErrorBody {
                    kind: classify(&err),
                    message: format!("{err:#}"),
                },
            };
            eprintln!(
                "{}",
                serde_json::to_string(&report)
                    .unwrap_or_else(|_| format!("{{\"error\":{{\"message\":\"{err:#}\"}}}}"))
            );
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<RunManifest> {
    match command {
        Command::RenderTemplate { input, mode, out, workers, report } => {
            commands::render_template::run(&input, mode, out.as_deref(), workers, report.as_deref())
        }
        Command::SftPrep { input, out, strip_frac, trunc_frac, budgets, seed, report } => {
            commands::sft_prep::run(
                &input,
                &out,
                strip_frac,
                trunc_frac,
                budgets.as_deref(),
                seed,
                report.as_deref(),
            )
        }
        Command::ScoreGroup { group, verdicts, config, out, report } => {
            commands::score_group::run(
                &group,
                &verdicts,
                config.as_deref(),
                out.as_deref(),
                report.as_deref(),
            )
        }
        Command::ScheduleCurriculum { profiles, config, steps, seed, out, report } => {
            commands::schedule_curriculum::run(
                &profiles,
                &config,
                &steps,
                seed,
                out.as_deref(),
                report.as_deref(),
            )
        }
        Command::Lr { tokens, config, out, report } => {
            commands::lr::run(tokens, &config, out.as_deref(), report.as_deref())
        }
        Command::FilterData { input, out, report, rules, workers } => {
            commands::filter_data::run(&input, &out, &report, rules.as_deref(), workers)
        }
        Command::LabelDpo { rollouts, out, seed, report } => {
            commands::label_dpo::run(&rollouts, &out, seed, report.as_deref())
        }
        Command::SimulateRouter {
            experts,
            topk,
            shared,
            steps,
            tokens_per_step,
            update_rate,
            lb_coeff,
            spread,
            noise,
            window,
            snapshot_every,
            seed,
            report,
        } => commands::simulate_router::run(commands::simulate_router::Args {
            experts,
            topk,
            shared,
            steps,
            tokens_per_step,
            update_rate,
            lb_coeff,
            spread,
            noise,
            window,
            snapshot_every,
            seed,
            report,
        }),
        Command::PlanQuant { pattern, policy, dims, out, report } => {
            commands::plan_quant::run(&pattern, policy, dims.as_deref(), out.as_deref(), report.as_deref())
        }
        Command::PromptSensitivity { input, out, report } => {
            commands::prompt_sensitivity::run(&input, out.as_deref(), report.as_deref())
        }
    }
}
