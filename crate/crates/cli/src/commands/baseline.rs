//! Random-walk reference scorers.

use serde_json::json;

use kgrank_core::baselines::{har, pagerank, personalized_pagerank};
use kgrank_core::Error;

use crate::commands::walk_config;
use crate::config::{usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Scores every entity with the chosen walk and writes
/// `baseline-<algo>.tsv` plus a small JSON report. `ppr` and `har` bias
/// their restarts by `baseline.signal`; `pr` needs no signal at all.
pub fn exec(run: &RunConfig, algo: &str) -> CliResult<i32> {
    run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let config = walk_config(run)?;
    let scores = match algo {
        "pr" => pagerank(&graph, &config)?,
        "ppr" | "har" => {
            let signals = dataset::load_signals(run, &graph)?;
            let name = run.require("baseline.signal")?;
            let idx = signals
                .index_of(name)
                .ok_or_else(|| Error::UnknownSignal(name.to_string()))?;
            let signal = signals.signal(idx);
            if algo == "ppr" {
                personalized_pagerank(&graph, signal, &config)?
            } else {
                har(&graph, signal, &config)?
            }
        }
        other => return Err(usage(format!("unknown baseline `{other}`; expected pr, ppr, or har"))),
    };

    let file = format!("baseline-{algo}.tsv");
    dataset::write_scores(&out.join(&file), &graph, &scores)?;
    let payload = json!({
        "algorithm": algo,
        "scores": file,
        "entities": graph.entity_count(),
    });
    write_json(&out.join(format!("baseline-{algo}.json")), &run.report(payload)?)?;
    println!("baseline {algo}: scored {} entities", graph.entity_count());
    Ok(0)
}
