//! Signal clustering and estimator training.

use serde_json::json;

use kgrank_core::trainer::run_algorithm1;
use kgrank_core::{Error, SignalSet};

use crate::commands::training_config;
use crate::config::{failed, usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Runs the clustering training loop and writes the primary cluster's
/// importance estimates (`z.tsv`), one parameter checkpoint per cluster,
/// and `clustering.json` describing rounds and memberships.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    let seed = run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let (features, _) = dataset::load_features(run, &graph)?;
    let mut signals = select(run, dataset::load_signals(run, &graph)?)?;
    if run.parse_or("train.log", false)? {
        let skip = run.list("train.log_skip").unwrap_or_default();
        signals.preprocess_log(&skip)?;
    }
    let config = training_config(run, seed)?;
    let result = run_algorithm1(&graph, &features, &signals, &config)?;

    for (i, round) in result.history.iter().enumerate() {
        println!("round {}: {} clusters", i + 1, round.clusters.len());
    }
    for (i, cluster) in result.clusters.iter().enumerate() {
        let mark = if i == result.primary { " (primary)" } else { "" };
        println!(
            "cluster {i}{mark}: [{}] validation ndcg {:.4}",
            cluster.members.join(", "),
            cluster.quality
        );
    }

    dataset::write_scores(&out.join("z.tsv"), &graph, &result.z)?;
    let mut summaries = Vec::new();
    for (i, cluster) in result.clusters.iter().enumerate() {
        let file = format!("cluster-{i}.json");
        let value = serde_json::to_value(cluster).map_err(|e| failed(e.to_string()))?;
        write_json(&out.join(&file), &value)?;
        summaries.push(json!({
            "members": cluster.members,
            "excluded": cluster.excluded,
            "quality": cluster.quality,
            "checkpoint": file,
        }));
    }
    let payload = json!({
        "primary": result.primary,
        "clusters": summaries,
        "rounds": result.history,
        "scores": "z.tsv",
    });
    write_json(&out.join("clustering.json"), &run.report(payload)?)?;
    Ok(0)
}

/// Applies the `train.signals` subset or the `train.single_signal`
/// restriction; naming a signal that was never loaded is an invocation
/// error.
fn select(run: &RunConfig, set: SignalSet) -> CliResult<SignalSet> {
    let single = run.get("train.single_signal").map(str::to_string);
    let subset = run.list("train.signals");
    let names = match (single, subset) {
        (Some(_), Some(_)) => {
            return Err(usage("train.signals and train.single_signal are mutually exclusive"))
        }
        (Some(name), None) => vec![name],
        (None, Some(names)) => names,
        (None, None) => return Ok(set),
    };
    let mut chosen = Vec::with_capacity(names.len());
    for name in &names {
        let idx = set
            .index_of(name)
            .ok_or_else(|| Error::UnknownSignal(name.clone()))?;
        chosen.push(set.signal(idx).clone());
    }
    Ok(SignalSet::new(chosen)?)
}
