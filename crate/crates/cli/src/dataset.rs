//! Shared input loading and score-file round-tripping.

use std::fs;
use std::path::Path;

use kgrank_core::kg::{self, FeatureLoadReport};
use kgrank_core::signals::load_signal;
use kgrank_core::{EntityId, KnowledgeGraph, NodeFeatures, SignalSet};

use crate::config::{failed, CliResult, RunConfig};

pub fn load_graph(run: &RunConfig) -> CliResult<KnowledgeGraph> {
    let triples = run.require_path("triples")?;
    let metadata = run.path("metadata");
    Ok(kg::load_triples(&triples, metadata.as_deref())?)
}

pub fn load_features(
    run: &RunConfig,
    kg: &KnowledgeGraph,
) -> CliResult<(NodeFeatures, FeatureLoadReport)> {
    let path = run.require_path("features")?;
    Ok(kg::load_features(&path, kg)?)
}

/// Loads every `signal.<name>` entry, alphabetical by name.
pub fn load_signals(run: &RunConfig, kg: &KnowledgeGraph) -> CliResult<SignalSet> {
    let mut signals = Vec::new();
    for (name, path) in run.signal_paths() {
        signals.push(load_signal(&path, kg, &name)?);
    }
    Ok(SignalSet::new(signals)?)
}

/// Writes one score per entity as `name<TAB>value`, in entity id order.
/// `Display` prints the shortest digits that parse back to the same float,
/// so the file is both stable across runs and lossless to reload.
pub fn write_scores(path: &Path, kg: &KnowledgeGraph, scores: &[f64]) -> CliResult<()> {
    assert_eq!(scores.len(), kg.entity_count(), "one score per entity");
    let mut text = String::new();
    for (entity, score) in kg.entities().iter().zip(scores) {
        text.push_str(&entity.name);
        text.push('\t');
        text.push_str(&score.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}

/// Reads a score file back into a dense per-entity vector, zero-filling
/// entities the file does not mention.
pub fn read_scores(path: &Path, kg: &KnowledgeGraph) -> CliResult<Vec<f64>> {
    let signal = load_signal(path, kg, "scores")?;
    Ok((0..kg.entity_count())
        .map(|i| signal.get(EntityId(i as u32)).unwrap_or(0.0))
        .collect())
}
