//! Scoring an estimate file against observed signals.

use std::collections::BTreeSet;
use std::fs;

use serde_json::json;

use kgrank_core::evalbench::{evaluate, DomainTag};
use kgrank_core::{Error, InputSignal, ScopeRule};

use crate::commands::ks_list;
use crate::config::{failed, usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Loads per-entity scores (`eval.scores`, the `z.tsv` format; entities the
/// file omits count as zero) and reports NDCG against every selected signal
/// as both `eval.json` and `eval.csv`.
///
/// When `eval.clusters` points at a `clustering.json` from a training run,
/// signals inside the primary cluster are tagged `ID` and all others `OOD`;
/// without it every row is tagged `ID`.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let signals = dataset::load_signals(run, &graph)?;
    let estimates = dataset::read_scores(&run.require_path("eval.scores")?, &graph)?;
    let ks = ks_list(run, "eval.ks")?;
    let closed_world = run.parse_or("eval.closed_world", false)?;
    let scope = parse_scope(run)?;
    let in_domain = primary_members(run)?;

    let selected: Vec<&InputSignal> = match run.list("eval.signals") {
        None => signals.iter().collect(),
        Some(names) => {
            let mut subset = Vec::with_capacity(names.len());
            for name in &names {
                let idx = signals
                    .index_of(name)
                    .ok_or_else(|| Error::UnknownSignal(name.clone()))?;
                subset.push(signals.signal(idx));
            }
            subset
        }
    };

    let mut rows = Vec::new();
    for signal in selected {
        let domain = match &in_domain {
            Some(members) if !members.contains(signal.name()) => DomainTag::OutOfDomain,
            _ => DomainTag::InDomain,
        };
        rows.extend(evaluate(&estimates, signal, &graph, &scope, closed_world, &ks, domain)?);
    }

    let mut writer =
        csv::Writer::from_path(out.join("eval.csv")).map_err(|e| failed(e.to_string()))?;
    writer
        .write_record(["signal", "k", "ndcg", "domain", "scope", "closed_world"])
        .map_err(|e| failed(e.to_string()))?;
    for row in &rows {
        writer
            .write_record([
                row.signal.as_str(),
                &row.k.to_string(),
                &row.ndcg.to_string(),
                &row.domain.to_string(),
                row.scope.as_str(),
                &row.closed_world.to_string(),
            ])
            .map_err(|e| failed(e.to_string()))?;
    }
    writer.flush().map_err(|e| failed(e.to_string()))?;

    write_json(&out.join("eval.json"), &run.report(json!({ "rows": rows }))?)?;
    for row in &rows {
        println!("{} ndcg@{} = {:.4} ({})", row.signal, row.k, row.ndcg, row.domain);
    }
    Ok(0)
}

fn parse_scope(run: &RunConfig) -> CliResult<ScopeRule> {
    match run.get("eval.scope") {
        None | Some("generic") => Ok(ScopeRule::Generic),
        Some(other) => match other.strip_prefix("type:") {
            Some(name) if !name.is_empty() => Ok(ScopeRule::Typed(name.to_string())),
            _ => Err(usage(format!(
                "invalid value `{other}` for `eval.scope`: expected generic or type:<name>"
            ))),
        },
    }
}

/// Member names of the primary cluster in a clustering report, if one was
/// supplied.
fn primary_members(run: &RunConfig) -> CliResult<Option<BTreeSet<String>>> {
    let Some(path) = run.path("eval.clusters") else {
        return Ok(None);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| failed(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| failed(format!("{} is not valid JSON: {e}", path.display())))?;
    let primary = value
        .get("primary")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| failed(format!("{} has no `primary` cluster index", path.display())))?;
    let members = value
        .get("clusters")
        .and_then(|v| v.get(primary as usize))
        .and_then(|v| v.get("members"))
        .and_then(|v| v.as_array())
        .ok_or_else(|| failed(format!("{} lists no cluster {primary}", path.display())))?;
    Ok(Some(
        members
            .iter()
            .filter_map(|m| m.as_str().map(str::to_string))
            .collect(),
    ))
}
