//! Knowledge-graph data model: typed entities, multi-predicate directed edges
//! with parallel edges preserved, node features, and the adjacency indexes the
//! estimator and baselines query.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::SignalSet;

/// Entity type assigned when no metadata sidecar provides one.
pub const DEFAULT_ENTITY_TYPE: &str = "entity";

/// Dense entity index, assigned in first-appearance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl EntityId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Dense predicate index, assigned in first-appearance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredicateId(pub u32);

impl PredicateId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub entity_type: String,
    pub timestamp: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: PredicateId,
    pub object: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Out,
    In,
}

/// One entry of a node's neighbor index. `ordinal` is the triple index, so
/// parallel edges stay distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborEdge {
    pub other: EntityId,
    pub ordinal: u32,
    pub predicate: PredicateId,
    pub direction: Direction,
}

/// An edge as seen by the attention neighborhood: the synthetic self-edge per
/// node plus every incident real edge. `predicate_row` indexes the predicate
/// embedding table, whose last row is reserved for self-edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionEdge {
    pub other: EntityId,
    pub predicate_row: usize,
}

#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    entity_index: HashMap<String, EntityId>,
    predicates: Vec<String>,
    predicate_index: HashMap<String, PredicateId>,
    triples: Vec<Triple>,
    neighbors: Vec<Vec<NeighborEdge>>,
    attention_index: Vec<Vec<AttentionEdge>>,
    in_degree: Vec<u32>,
}

impl KnowledgeGraph {
    /// Builds a graph from already-resolved parts. Names must be unique and
    /// triples must reference ids below the respective table lengths.
    pub fn from_parts(entities: Vec<Entity>, predicates: Vec<String>, triples: Vec<Triple>) -> Result<Self> {
        let entity_index: HashMap<String, EntityId> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), EntityId(i as u32)))
            .collect();
        if entity_index.len() != entities.len() {
            return Err(Error::Contract("duplicate entity name".into()));
        }
        let predicate_index: HashMap<String, PredicateId> = predicates
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), PredicateId(i as u32)))
            .collect();
        if predicate_index.len() != predicates.len() {
            return Err(Error::Contract("duplicate predicate name".into()));
        }
        for t in &triples {
            if t.subject.idx() >= entities.len()
                || t.object.idx() >= entities.len()
                || t.predicate.idx() >= predicates.len()
            {
                return Err(Error::Contract("triple references an id outside the tables".into()));
            }
        }

        let n = entities.len();
        let mut neighbors: Vec<Vec<NeighborEdge>> = vec![Vec::new(); n];
        let mut in_degree = vec![0u32; n];
        for (m, t) in triples.iter().enumerate() {
            let ordinal = m as u32;
            neighbors[t.subject.idx()].push(NeighborEdge {
                other: t.object,
                ordinal,
                predicate: t.predicate,
                direction: Direction::Out,
            });
            neighbors[t.object.idx()].push(NeighborEdge {
                other: t.subject,
                ordinal,
                predicate: t.predicate,
                direction: Direction::In,
            });
            in_degree[t.object.idx()] += 1;
        }

        // Self-edges live only in the attention view: they keep every node's
        // attention softmax defined but are excluded from in-degree and from
        // the regularizer's edge pool.
        let self_row = predicates.len();
        let attention_index = (0..n)
            .map(|i| {
                let mut edges = Vec::with_capacity(neighbors[i].len() + 1);
                edges.push(AttentionEdge {
                    other: EntityId(i as u32),
                    predicate_row: self_row,
                });
                edges.extend(neighbors[i].iter().map(|e| AttentionEdge {
                    other: e.other,
                    predicate_row: e.predicate.idx(),
                }));
                edges
            })
            .collect();

        Ok(Self {
            entities,
            entity_index,
            predicates,
            predicate_index,
            triples,
            neighbors,
            attention_index,
            in_degree,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn predicate_count(&self) -> usize {
        self.predicates.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.idx()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied()
    }

    pub fn predicates(&self) -> &[String] {
        &self.predicates
    }

    pub fn predicate_id(&self, name: &str) -> Option<PredicateId> {
        self.predicate_index.get(name).copied()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn neighbors(&self, id: EntityId) -> &[NeighborEdge] {
        &self.neighbors[id.idx()]
    }

    /// Attention neighborhood of a node: the self-edge first, then every
    /// incident edge (in and out, parallel edges distinct).
    pub fn attention_edges(&self, id: EntityId) -> &[AttentionEdge] {
        &self.attention_index[id.idx()]
    }

    /// Row of the predicate embedding table reserved for self-edges.
    pub fn self_predicate_row(&self) -> usize {
        self.predicates.len()
    }

    pub fn in_degree(&self, id: EntityId) -> u32 {
        self.in_degree[id.idx()]
    }

    pub fn out_degree(&self, id: EntityId) -> u32 {
        self.neighbors[id.idx()]
            .iter()
            .filter(|e| e.direction == Direction::Out)
            .count() as u32
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len()).map(|i| EntityId(i as u32))
    }

    /// All entities carrying the given type label.
    pub fn entities_of_type(&self, entity_type: &str) -> Vec<EntityId> {
        self.entity_ids()
            .filter(|id| self.entity(*id).entity_type == entity_type)
            .collect()
    }

    /// Re-serializes the triples in storage order, one `s\tp\to` line each.
    pub fn triple_lines(&self) -> impl Iterator<Item = String> + '_ {
        self.triples.iter().map(move |t| {
            format!(
                "{}\t{}\t{}",
                self.entities[t.subject.idx()].name,
                self.predicates[t.predicate.idx()],
                self.entities[t.object.idx()].name
            )
        })
    }

    /// Checks the structural invariants; returns one message per violation.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let n = self.entities.len();
        for (m, t) in self.triples.iter().enumerate() {
            if t.subject.idx() >= n || t.object.idx() >= n || t.predicate.idx() >= self.predicates.len() {
                violations.push(format!("triple {m} references a dangling id"));
            }
        }
        let mut in_counts = vec![0u32; n];
        for t in &self.triples {
            in_counts[t.object.idx()] += 1;
        }
        for i in 0..n {
            if in_counts[i] != self.in_degree[i] {
                violations.push(format!(
                    "in-degree of node {i} is {} but {} incoming triples exist",
                    self.in_degree[i], in_counts[i]
                ));
            }
            let expected = self.triples.iter().filter(|t| t.subject.idx() == i).count()
                + self.triples.iter().filter(|t| t.object.idx() == i).count();
            if self.neighbors[i].len() != expected {
                violations.push(format!(
                    "neighbor index of node {i} has {} entries, expected {expected}",
                    self.neighbors[i].len()
                ));
            }
        }
        violations
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Loads a tab-separated triples file, with an optional metadata sidecar
/// assigning entity types and timestamps.
///
/// Lines starting with `#` are ignored. Entity and predicate ids are assigned
/// in first-appearance order; duplicate lines become parallel edges.
pub fn load_triples(path: &Path, metadata: Option<&Path>) -> Result<KnowledgeGraph> {
    let lines = read_lines(path)?;
    let path_str = path.display().to_string();

    let mut entities: Vec<Entity> = Vec::new();
    let mut entity_index: HashMap<String, EntityId> = HashMap::new();
    let mut predicates: Vec<String> = Vec::new();
    let mut predicate_index: HashMap<String, PredicateId> = HashMap::new();
    let mut triples: Vec<Triple> = Vec::new();

    let mut intern_entity = |name: &str, entities: &mut Vec<Entity>| -> EntityId {
        if let Some(&id) = entity_index.get(name) {
            return id;
        }
        let id = EntityId(entities.len() as u32);
        entities.push(Entity {
            name: name.to_string(),
            entity_type: DEFAULT_ENTITY_TYPE.to_string(),
            timestamp: None,
        });
        entity_index.insert(name.to_string(), id);
        id
    };

    for (lineno, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: "empty entity or predicate name".into(),
            });
        }
        let subject = intern_entity(fields[0], &mut entities);
        let object = intern_entity(fields[2], &mut entities);
        let predicate = if let Some(&id) = predicate_index.get(fields[1]) {
            id
        } else {
            let id = PredicateId(predicates.len() as u32);
            predicates.push(fields[1].to_string());
            predicate_index.insert(fields[1].to_string(), id);
            id
        };
        triples.push(Triple {
            subject,
            predicate,
            object,
        });
    }

    if triples.is_empty() {
        return Err(Error::EmptyGraph(path_str));
    }

    if let Some(meta_path) = metadata {
        apply_metadata(meta_path, &mut entities, &entity_index)?;
    }

    KnowledgeGraph::from_parts(entities, predicates, triples)
}

fn apply_metadata(
    path: &Path,
    entities: &mut [Entity],
    entity_index: &HashMap<String, EntityId>,
) -> Result<()> {
    let path_str = path.display().to_string();
    for (lineno, raw) in read_lines(path)?.iter().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            });
        }
        // Metadata for entities absent from the triples file is ignored.
        let Some(&id) = entity_index.get(fields[0]) else {
            continue;
        };
        entities[id.idx()].entity_type = fields[1].to_string();
        if fields.len() == 3 && !fields[2].is_empty() {
            let date = NaiveDate::parse_from_str(fields[2], "%Y-%m-%d").map_err(|e| Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("invalid ISO-8601 date {:?}: {e}", fields[2]),
            })?;
            entities[id.idx()].timestamp = Some(date);
        }
    }
    Ok(())
}

/// Per-node feature matrix, rows aligned with entity ids.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    matrix: Array2<f64>,
}

impl NodeFeatures {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node features".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, id: EntityId) -> ndarray::ArrayView1<'_, f64> {
        self.matrix.row(id.idx())
    }
}

/// Summary of anomalies encountered while loading a features file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FeatureLoadReport {
    /// Entities in the graph that the file did not cover (zero-filled rows).
    pub missing_entities: usize,
    /// File lines naming entities absent from the graph (skipped).
    pub unknown_entities: Vec<String>,
}

/// Loads per-entity feature vectors, aligning rows to graph entity ids.
/// Entities absent from the file get zero rows and are counted in the report.
pub fn load_features(path: &Path, kg: &KnowledgeGraph) -> Result<(NodeFeatures, FeatureLoadReport)> {
    let path_str = path.display().to_string();
    let lines = read_lines(path)?;

    let mut dim: Option<usize> = None;
    let mut rows: Vec<Option<Array1<f64>>> = vec![None; kg.entity_count()];
    let mut report = FeatureLoadReport::default();

    for (lineno, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let (name, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: lineno + 1,
            message: "expected entity name followed by a tab".into(),
        })?;
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    path: path_str.clone(),
                    line: lineno + 1,
                    message: format!("invalid number {tok:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::FeatureDimension {
                    path: path_str.clone(),
                    line: lineno + 1,
                    expected: d,
                    found: values.len(),
                });
            }
            _ => {}
        }
        match kg.entity_id(name) {
            Some(id) => rows[id.idx()] = Some(Array1::from(values)),
            None => report.unknown_entities.push(name.to_string()),
        }
    }

    let dim = dim.ok_or_else(|| Error::EmptyInput(format!("features file {path_str}")))?;
    let mut matrix = Array2::zeros((kg.entity_count(), dim));
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(values) => matrix.row_mut(i).assign(&values),
            None => report.missing_entities += 1,
        }
    }
    Ok((NodeFeatures::new(matrix)?, report))
}

/// Consistency report over a graph, its features, and a signal set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub entity_count: usize,
    pub predicate_count: usize,
    pub triple_count: usize,
    /// Per signal: fraction of graph entities its domain covers.
    pub signal_coverage: Vec<(String, f64)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Report-only consistency check: graph invariants, feature finiteness and
/// alignment, and signal references.
pub fn validate(kg: &KnowledgeGraph, features: &NodeFeatures, signals: &SignalSet) -> ValidationReport {
    let mut violations = kg.check_invariants();

    if features.matrix().nrows() != kg.entity_count() {
        violations.push(format!(
            "feature matrix has {} rows for {} entities",
            features.matrix().nrows(),
            kg.entity_count()
        ));
    }
    for (i, row) in features.matrix().rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            violations.push(format!("non-finite feature value in row {i}"));
        }
    }

    let mut signal_coverage = Vec::new();
    for signal in signals.iter() {
        for (&id, &value) in signal.values() {
            if id.idx() >= kg.entity_count() {
                violations.push(format!(
                    "signal {:?} references unknown entity id {}",
                    signal.name(),
                    id.0
                ));
            } else if !value.is_finite() || value < 0.0 {
                violations.push(format!(
                    "signal {:?} has invalid value {} for entity {:?}",
                    signal.name(),
                    value,
                    kg.entity(id).name
                ));
            }
        }
        signal_coverage.push((
            signal.name().to_string(),
            signal.len() as f64 / kg.entity_count() as f64,
        ));
    }

    ValidationReport {
        violations,
        entity_count: kg.entity_count(),
        predicate_count: kg.predicate_count(),
        triple_count: kg.triple_count(),
        signal_coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn parallel_edges_are_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.tsv", "a\tP\tb\na\tP\tb\n");
        let kg = load_triples(&path, None).unwrap();
        assert_eq!(kg.entity_count(), 2);
        assert_eq!(kg.predicate_count(), 1);
        assert_eq!(kg.triple_count(), 2);
        let b = kg.entity_id("b").unwrap();
        assert_eq!(kg.in_degree(b), 2);
        let ords: Vec<u32> = kg.neighbors(b).iter().map(|e| e.ordinal).collect();
        assert_eq!(ords, vec![0, 1]);
    }

    #[test]
    fn neighbor_index_covers_both_directions() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.tsv", "a\tP\tb\nb\tQ\ta\n");
        let kg = load_triples(&path, None).unwrap();
        let a = kg.entity_id("a").unwrap();
        let edges = kg.neighbors(a);
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].direction, Direction::Out);
        assert_eq!(edges[0].predicate, kg.predicate_id("P").unwrap());
        assert_eq!(edges[1].direction, Direction::In);
        assert_eq!(edges[1].predicate, kg.predicate_id("Q").unwrap());
        // attention view adds the self-edge up front
        let att = kg.attention_edges(a);
        assert_eq!(att.len(), 3);
        assert_eq!(att[0].other, a);
        assert_eq!(att[0].predicate_row, kg.self_predicate_row());
    }

    #[test]
    fn triples_round_trip_as_multiset() {
        let dir = tempfile::tempdir().unwrap();
        let mut lines: Vec<String> = Vec::new();
        let names = ["n0", "n1", "n2", "n3"];
        let preds = ["p0", "p1"];
        // small deterministic pseudo-random file, duplicates included
        let mut state = 0x9e37u64;
        for _ in 0..10 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let s = names[(state >> 3) as usize % names.len()];
            let p = preds[(state >> 17) as usize % preds.len()];
            let o = names[(state >> 29) as usize % names.len()];
            lines.push(format!("{s}\t{p}\t{o}"));
        }
        let path = write_file(&dir, "t.tsv", &(lines.join("\n") + "\n"));
        let kg = load_triples(&path, None).unwrap();
        let mut input = lines.clone();
        let mut output: Vec<String> = kg.triple_lines().collect();
        input.sort();
        output.sort();
        assert_eq!(input, output);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.tsv", "a\tP\tb\nbroken line\n");
        match load_triples(&path, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.tsv", "# only a comment\n");
        assert!(matches!(load_triples(&path, None), Err(Error::EmptyGraph(_))));
    }

    #[test]
    fn metadata_assigns_types_and_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let triples = write_file(&dir, "t.tsv", "a\tP\tb\n");
        let meta = write_file(&dir, "m.tsv", "a\tmovie\t2010-05-01\nb\tdirector\nghost\tmovie\n");
        let kg = load_triples(&triples, Some(&meta)).unwrap();
        let a = kg.entity_id("a").unwrap();
        let b = kg.entity_id("b").unwrap();
        assert_eq!(kg.entity(a).entity_type, "movie");
        assert_eq!(kg.entity(a).timestamp, Some(NaiveDate::from_ymd_opt(2010, 5, 1).unwrap()));
        assert_eq!(kg.entity(b).entity_type, "director");
        assert_eq!(kg.entity(b).timestamp, None);
    }

    #[test]
    fn features_align_and_zero_fill() {
        let dir = tempfile::tempdir().unwrap();
        let triples = write_file(&dir, "t.tsv", "a\tP\tb\nb\tP\tc\n");
        let kg = load_triples(&triples, None).unwrap();
        let feats = write_file(&dir, "f.tsv", "b\t1 2 3 4\na\t5 6 7 8\nzzz\t0 0 0 0\n");
        let (features, report) = load_features(&feats, &kg).unwrap();
        assert_eq!(features.dim(), 4);
        assert_eq!(report.missing_entities, 1); // c
        assert_eq!(report.unknown_entities, vec!["zzz".to_string()]);
        let a = kg.entity_id("a").unwrap();
        let c = kg.entity_id("c").unwrap();
        assert_eq!(features.row(a).to_vec(), vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(features.row(c).to_vec(), vec![0.0; 4]);
    }

    #[test]
    fn feature_row_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let triples = write_file(&dir, "t.tsv", "a\tP\tb\nb\tP\tc\n");
        let kg = load_triples(&triples, None).unwrap();
        let f1 = write_file(&dir, "f1.tsv", "a\t1 2\nb\t3 4\nc\t5 6\n");
        let f2 = write_file(&dir, "f2.tsv", "c\t5 6\na\t1 2\nb\t3 4\n");
        let (m1, _) = load_features(&f1, &kg).unwrap();
        let (m2, _) = load_features(&f2, &kg).unwrap();
        assert_eq!(m1.matrix(), m2.matrix());
    }

    #[test]
    fn inconsistent_feature_dimension_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let triples = write_file(&dir, "t.tsv", "a\tP\tb\n");
        let kg = load_triples(&triples, None).unwrap();
        let feats = write_file(&dir, "f.tsv", "a\t1 2 3\nb\t1 2\n");
        assert!(matches!(
            load_features(&feats, &kg),
            Err(Error::FeatureDimension { line: 2, .. })
        ));
    }

    #[test]
    fn degree_sums_match_triple_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.tsv", "a\tP\tb\nb\tQ\tc\nc\tP\ta\na\tQ\tc\na\tP\tb\n");
        let kg = load_triples(&path, None).unwrap();
        let total_in: u32 = kg.entity_ids().map(|i| kg.in_degree(i)).sum();
        let total_out: u32 = kg.entity_ids().map(|i| kg.out_degree(i)).sum();
        assert_eq!(total_in as usize, kg.triple_count());
        assert_eq!(total_out as usize, kg.triple_count());
        for i in kg.entity_ids() {
            assert_eq!(
                kg.neighbors(i).len() as u32,
                kg.in_degree(i) + kg.out_degree(i)
            );
        }
        assert!(kg.check_invariants().is_empty());
    }

    #[test]
    fn loading_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let content = "x\tP\ty\ny\tQ\tz\nx\tQ\tz\n";
        let p1 = write_file(&dir, "a.tsv", content);
        let p2 = write_file(&dir, "b.tsv", content);
        let k1 = load_triples(&p1, None).unwrap();
        let k2 = load_triples(&p2, None).unwrap();
        let names1: Vec<&str> = k1.entities().iter().map(|e| e.name.as_str()).collect();
        let names2: Vec<&str> = k2.entities().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names1, names2);
        assert_eq!(k1.triples(), k2.triples());
    }
}
