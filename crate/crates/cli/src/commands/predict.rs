//! Cross-validated prediction of one signal from the others.

use serde_json::json;

use kgrank_core::baselines::{pagerank, personalized_pagerank};
use kgrank_core::evalbench::signal_prediction_task;
use kgrank_core::{Error, InputSignal, PredictionConfig};

use crate::commands::walk_config;
use crate::config::{failed, usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Treats `predict.target` as the quantity to predict and every other
/// loaded signal as a feature; `predict.augment = pr,ppr` appends walk
/// scores as extra feature columns (the personalized walk restarts where
/// the target is observed). Writes fold-averaged NDCG per feature
/// configuration as `predict.json` and `predict.csv`.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    let seed = run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let signals = dataset::load_signals(run, &graph)?;
    let target_name = run.require("predict.target")?;
    let target_idx = signals
        .index_of(target_name)
        .ok_or_else(|| Error::UnknownSignal(target_name.to_string()))?;
    let target = signals.signal(target_idx);
    let feature_signals: Vec<&InputSignal> =
        signals.iter().filter(|s| s.name() != target_name).collect();

    let mut augmentations = Vec::new();
    if let Some(kinds) = run.list("predict.augment") {
        let walk = walk_config(run)?;
        for kind in kinds {
            let scores = match kind.as_str() {
                "pr" => pagerank(&graph, &walk)?,
                "ppr" => personalized_pagerank(&graph, target, &walk)?,
                other => {
                    return Err(usage(format!(
                        "unknown augmentation `{other}`; expected pr or ppr"
                    )))
                }
            };
            augmentations.push((kind, scores));
        }
    }

    let d = PredictionConfig::default();
    let config = PredictionConfig {
        folds: run.parse_or("predict.folds", d.folds)?,
        lambda: run.parse_or("predict.lambda", d.lambda)?,
        lr: run.parse_or("predict.lr", d.lr)?,
        iterations: run.parse_or("predict.iterations", d.iterations)?,
        seed,
    };
    let rows = signal_prediction_task(target, &feature_signals, &augmentations, &config)?;

    let mut writer =
        csv::Writer::from_path(out.join("predict.csv")).map_err(|e| failed(e.to_string()))?;
    writer
        .write_record(["configuration", "ndcg10_mean", "ndcg10_std", "ndcg100_mean", "ndcg100_std"])
        .map_err(|e| failed(e.to_string()))?;
    for row in &rows {
        writer
            .write_record([
                row.configuration.as_str(),
                &row.ndcg10_mean.to_string(),
                &row.ndcg10_std.to_string(),
                &row.ndcg100_mean.to_string(),
                &row.ndcg100_std.to_string(),
            ])
            .map_err(|e| failed(e.to_string()))?;
    }
    writer.flush().map_err(|e| failed(e.to_string()))?;

    let payload = json!({ "target": target_name, "rows": rows });
    write_json(&out.join("predict.json"), &run.report(payload)?)?;
    for row in &rows {
        println!(
            "{}: ndcg@100 {:.4} +- {:.4}",
            row.configuration, row.ndcg100_mean, row.ndcg100_std
        );
    }
    Ok(0)
}
