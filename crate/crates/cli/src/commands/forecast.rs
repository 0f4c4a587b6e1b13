//! Time-split evaluation: train on the past, score on the future.

use chrono::NaiveDate;
use serde_json::json;

use kgrank_core::evalbench::{evaluate, forecasting_split, DomainTag};
use kgrank_core::trainer::run_algorithm1;
use kgrank_core::{Error, ScopeRule, SignalSet};

use crate::commands::{ks_list, training_config};
use crate::config::{usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Splits `forecast.signal` at `forecast.cutoff` by entity timestamp,
/// trains on the earlier observations alone, and reports NDCG on the later
/// ones. Entities without a timestamp are dropped from both sides.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    let seed = run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let (features, _) = dataset::load_features(run, &graph)?;
    let signals = dataset::load_signals(run, &graph)?;
    let name = run.require("forecast.signal")?;
    let idx = signals
        .index_of(name)
        .ok_or_else(|| Error::UnknownSignal(name.to_string()))?;
    let raw_cutoff = run.require("forecast.cutoff")?;
    let cutoff = NaiveDate::parse_from_str(raw_cutoff, "%Y-%m-%d")
        .map_err(|e| usage(format!("invalid value `{raw_cutoff}` for `forecast.cutoff`: {e}")))?;

    let split = forecasting_split(&graph, signals.signal(idx), cutoff)?;
    let train_observations = split.train.len();
    let test_observations = split.test.len();
    let config = training_config(run, seed)?;
    let result = run_algorithm1(&graph, &features, &SignalSet::new(vec![split.train])?, &config)?;
    let ks = ks_list(run, "forecast.ks")?;
    let rows = evaluate(
        &result.z,
        &split.test,
        &graph,
        &ScopeRule::Generic,
        false,
        &ks,
        DomainTag::InDomain,
    )?;

    dataset::write_scores(&out.join("forecast-z.tsv"), &graph, &result.z)?;
    let payload = json!({
        "signal": name,
        "cutoff": raw_cutoff,
        "train_observations": train_observations,
        "test_observations": test_observations,
        "dropped_undated": split.dropped,
        "scores": "forecast-z.tsv",
        "rows": rows,
    });
    write_json(&out.join("forecast.json"), &run.report(payload)?)?;
    println!(
        "forecast {name} at {raw_cutoff}: {train_observations} train, {test_observations} test"
    );
    for row in &rows {
        println!("forecast ndcg@{} = {:.4}", row.k, row.ndcg);
    }
    Ok(0)
}
