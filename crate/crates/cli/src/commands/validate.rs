//! Dataset consistency checking.

use serde_json::json;

use kgrank_core::kg;
use kgrank_core::signals::load_signal;
use kgrank_core::SignalSet;

use crate::config::{write_json, CliResult, RunConfig};
use crate::dataset;

/// Loads the full dataset, collects every violation into `validate.json`,
/// and exits 0 only when the dataset is clean. Signal files that fail to
/// load are reported as violations rather than aborting the run: the point
/// of this command is to list what is wrong.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let (features, feature_report) = dataset::load_features(run, &graph)?;

    let mut violations = Vec::new();
    let mut loaded = Vec::new();
    for (name, path) in run.signal_paths() {
        match load_signal(&path, &graph, &name) {
            Ok(signal) => loaded.push(signal),
            Err(err) => violations.push(format!("signal {name}: {err}")),
        }
    }
    let signals = SignalSet::new(loaded)?;
    let report = kg::validate(&graph, &features, &signals);
    violations.extend(report.violations.iter().cloned());

    let clean = violations.is_empty();
    let payload = json!({
        "clean": clean,
        "violations": violations,
        "entity_count": report.entity_count,
        "predicate_count": report.predicate_count,
        "triple_count": report.triple_count,
        "signal_coverage": report.signal_coverage,
        "feature_rows_missing": feature_report.missing_entities,
        "feature_rows_unknown": feature_report.unknown_entities,
    });
    write_json(&out.join("validate.json"), &run.report(payload)?)?;

    if clean {
        println!(
            "validate: ok ({} entities, {} predicates, {} triples, {} signals)",
            report.entity_count,
            report.predicate_count,
            report.triple_count,
            report.signal_coverage.len()
        );
        Ok(0)
    } else {
        for violation in &violations {
            println!("violation: {violation}");
        }
        let n = violations.len();
        println!("validate: {n} violation{}", if n == 1 { "" } else { "s" });
        Ok(1)
    }
}
