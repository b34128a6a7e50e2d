use crate::io;
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::PolicyArg;
use anyhow::Result;
use postkit_core::quant_planner::{
    memory_estimate, plan, LayerPattern, MemoryEstimate, ModelDims, PrecisionPlan, QuantPolicy,
};
use serde::Serialize;
use std::path::Path;

#[derive(Serialize)]
struct Output {
    policy: PolicyArg,
    #[serde(flatten)]
    plan: PrecisionPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    memory: Option<MemoryEstimate>,
}

#[derive(Serialize)]
struct Report {
    layers: usize,
    bf16_layers: usize,
    fp8_layers: usize,
    warnings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_params: Option<u64>,
}

pub fn run(
    pattern_path: &Path,
    policy: PolicyArg,
    dims_path: Option<&Path>,
    out: Option<&Path>,
    report: Option<&Path>,
) -> Result<RunManifest> {
    let mut builder = ManifestBuilder::new("plan-quant");
    builder.input(pattern_path)?;
    if let Some(dims) = dims_path {
        builder.input(dims)?;
    }

    let pattern = LayerPattern::parse(&io::read_to_string(pattern_path)?)?;
    let quant_policy = match policy {
        PolicyArg::Selective => QuantPolicy::Selective,
        PolicyArg::AllFp8 => QuantPolicy::AllFp8,
        PolicyArg::AllBf16 => QuantPolicy::AllBf16,
    };
    let precision_plan = plan(&pattern, quant_policy);
    let memory = match dims_path {
        Some(path) => {
            let kv = super::load_config(Some(path))?;
            let dims = ModelDims::from_config(&kv)?;
            Some(memory_estimate(&pattern, &precision_plan, &dims)?)
        }
        None => None,
    };
    let output = Output { policy, plan: precision_plan, memory };
    io::write_output(out, &io::to_json_pretty(&output)?)?;
    if let Some(path) = report {
        let bf16 = output
            .plan
            .per_layer
            .iter()
            .filter(|l| l.weights == postkit_core::quant_planner::Precision::Bf16)
            .count();
        io::write_atomic(
            path,
            &io::to_json_pretty(&Report {
                layers: pattern.layers.len(),
                bf16_layers: bf16,
                fp8_layers: pattern.layers.len() - bf16,
                warnings: output.plan.warnings.len(),
                total_params: output.memory.as_ref().map(|m| m.total_params),
            })?,
        )?;
    }
    builder.finish(&serde_json::json!({ "policy": policy, "layers": pattern.layers.len() }))
}
