//! Synthetic benchmark generation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use kgrank_core::evalbench::{synth_generate, SynthSignalSpec, Transform};
use kgrank_core::{InputSignal, KnowledgeGraph, NodeFeatures, SynthConfig};

use crate::config::{failed, usage, write_json, CliResult, RunConfig};

/// Generates a graph with known latent importance and serializes it in the
/// standard file formats, so the result feeds straight back into the other
/// subcommands. The manifest (`synth.json`) records a digest per file;
/// rerunning with the same configuration reproduces identical bytes on one
/// platform.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    let seed = run.seed()?;
    let out = run.output_dir()?;
    let config = synth_config(run, seed)?;
    let data = synth_generate(&config)?;

    write_file(&out.join("triples.tsv"), &triples_tsv(&data.kg))?;
    write_file(&out.join("metadata.tsv"), &metadata_tsv(&data.kg))?;
    write_file(&out.join("features.tsv"), &features_tsv(&data.kg, &data.features))?;
    write_file(&out.join("latent.tsv"), &scores_tsv(&data.kg, &data.latent))?;

    let mut files = vec![
        "triples.tsv".to_string(),
        "metadata.tsv".to_string(),
        "features.tsv".to_string(),
        "latent.tsv".to_string(),
    ];
    for signal in data.signals.iter() {
        let file = format!("signal-{}.tsv", signal.name());
        write_file(&out.join(&file), &signal_tsv(&data.kg, signal))?;
        files.push(file);
    }

    let mut checksums = BTreeMap::new();
    for file in &files {
        checksums.insert(file.clone(), sha256_file(&out.join(file))?);
    }

    let payload = json!({
        "entities": data.kg.entity_count(),
        "predicates": data.kg.predicate_count(),
        "triples": data.kg.triples().len(),
        "coherent_signals": data.coherent_names,
        "rebel_signals": data.rebel_names,
        "files": checksums,
    });
    write_json(&out.join("synth.json"), &run.report(payload)?)?;
    println!(
        "synth: {} entities, {} triples, {} signals written to {}",
        data.kg.entity_count(),
        data.kg.triples().len(),
        data.signals.len(),
        out.display()
    );
    Ok(0)
}

/// Every coherent signal gets one entry of `synth.transforms`; noise level,
/// observation fraction, and type scope are shared across them.
fn synth_config(run: &RunConfig, seed: u64) -> CliResult<SynthConfig> {
    let d = SynthConfig::default();
    let spec = SynthSignalSpec::default();
    let transforms = match run.list("synth.transforms") {
        None => vec![Transform::Identity],
        Some(items) => items
            .iter()
            .map(|t| parse_transform(t))
            .collect::<CliResult<Vec<_>>>()?,
    };
    let noise = run.parse_or("synth.noise", spec.noise)?;
    let observation_fraction =
        run.parse_or("synth.observation_fraction", spec.observation_fraction)?;
    let scope = run.get("synth.scope").map(str::to_string);
    let coherent = transforms
        .into_iter()
        .map(|transform| SynthSignalSpec {
            transform,
            noise,
            observation_fraction,
            scope: scope.clone(),
        })
        .collect();
    Ok(SynthConfig {
        nodes: run.parse_or("synth.nodes", d.nodes)?,
        predicates: run.parse_or("synth.predicates", d.predicates)?,
        edges_per_node: run.parse_or("synth.edges_per_node", d.edges_per_node)?,
        latent_mu: run.parse_or("synth.latent_mu", d.latent_mu)?,
        latent_sigma: run.parse_or("synth.latent_sigma", d.latent_sigma)?,
        feature_dim: run.parse_or("synth.feature_dim", d.feature_dim)?,
        feature_noise: run.parse_or("synth.feature_noise", d.feature_noise)?,
        coherent,
        rebels: run.parse_or("synth.rebels", d.rebels)?,
        entity_types: run.parse_or("synth.entity_types", d.entity_types)?,
        with_timestamps: run.parse_or("synth.with_timestamps", d.with_timestamps)?,
        seed,
    })
}

fn parse_transform(raw: &str) -> CliResult<Transform> {
    match raw {
        "identity" => Ok(Transform::Identity),
        "square" => Ok(Transform::Square),
        "exp-scaled" | "exp_scaled" => Ok(Transform::ExpScaled),
        other => Err(usage(format!(
            "unknown transform `{other}`; expected identity, square, or exp-scaled"
        ))),
    }
}

fn triples_tsv(kg: &KnowledgeGraph) -> String {
    let entities = kg.entities();
    let predicates = kg.predicates();
    let mut text = String::new();
    for t in kg.triples() {
        text.push_str(&format!(
            "{}\t{}\t{}\n",
            entities[t.subject.idx()].name,
            predicates[t.predicate.idx()],
            entities[t.object.idx()].name
        ));
    }
    text
}

fn metadata_tsv(kg: &KnowledgeGraph) -> String {
    let mut text = String::new();
    for entity in kg.entities() {
        match entity.timestamp {
            Some(date) => text.push_str(&format!(
                "{}\t{}\t{}\n",
                entity.name,
                entity.entity_type,
                date.format("%Y-%m-%d")
            )),
            None => text.push_str(&format!("{}\t{}\n", entity.name, entity.entity_type)),
        }
    }
    text
}

fn features_tsv(kg: &KnowledgeGraph, features: &NodeFeatures) -> String {
    let mut text = String::new();
    for (i, entity) in kg.entities().iter().enumerate() {
        let row: Vec<String> = features
            .matrix()
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect();
        text.push_str(&format!("{}\t{}\n", entity.name, row.join(" ")));
    }
    text
}

fn scores_tsv(kg: &KnowledgeGraph, values: &[f64]) -> String {
    let mut text = String::new();
    for (entity, value) in kg.entities().iter().zip(values) {
        text.push_str(&format!("{}\t{}\n", entity.name, value));
    }
    text
}

fn signal_tsv(kg: &KnowledgeGraph, signal: &InputSignal) -> String {
    let entities = kg.entities();
    let mut text = String::new();
    for (&id, &value) in signal.values() {
        text.push_str(&format!("{}\t{}\n", entities[id.idx()].name, value));
    }
    text
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes =
        fs::read(path).map_err(|e| failed(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
