pub mod filter_data;
pub mod label_dpo;
pub mod lr;
pub mod plan_quant;
pub mod prompt_sensitivity;
pub mod render_template;
pub mod schedule_curriculum;
pub mod score_group;
pub mod sft_prep;
pub mod simulate_router;

use anyhow::Result;
use std::path::Path;

/// Build a rayon pool with `workers` threads; order-preserving parallel maps
/// keep output bytes independent of the worker count.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let threads = workers.max(1);
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

/// Load a key-value config file, or an empty config when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<postkit_core::KvConfig> {
    match path {
        Some(path) => {
            let text = crate::io::read_to_string(path)?;
            Ok(postkit_core::KvConfig::parse(&text)?)
        }
        None => Ok(postkit_core::KvConfig::default()),
    }
}
