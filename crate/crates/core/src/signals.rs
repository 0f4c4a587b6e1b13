//! Partially observed importance signals: loading, log preprocessing, the
//! top-one probability transform, and rank correlation between signals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};

/// One importance signal: non-negative scores over a subset of entities.
/// Values are kept in entity-id order so every iteration is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputSignal {
    name: String,
    values: BTreeMap<EntityId, f64>,
    log_preprocessed: bool,
}

impl InputSignal {
    pub fn new(name: impl Into<String>, values: BTreeMap<EntityId, f64>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::EmptyInput(format!("signal {name:?}")));
        }
        for (&id, &v) in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Contract(format!(
                    "signal {name:?} has invalid value {v} for entity id {}",
                    id.0
                )));
            }
        }
        Ok(Self {
            name,
            values,
            log_preprocessed: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &BTreeMap<EntityId, f64> {
        &self.values
    }

    pub fn get(&self, id: EntityId) -> Option<f64> {
        self.values.get(&id).copied()
    }

    /// Observed entity ids in ascending order.
    pub fn domain(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.values.keys().copied()
    }

    pub fn log_preprocessed(&self) -> bool {
        self.log_preprocessed
    }

    /// Applies `v -> ln(1 + v)` once; a second application is a contract
    /// violation because the transform is not idempotent.
    pub fn apply_log(&mut self) -> Result<()> {
        if self.log_preprocessed {
            return Err(Error::Contract(format!(
                "signal {:?} is already log-preprocessed",
                self.name
            )));
        }
        for v in self.values.values_mut() {
            *v = (1.0 + *v).ln();
        }
        self.log_preprocessed = true;
        Ok(())
    }

    /// Restricts a full score vector to this signal's domain, returning the
    /// aligned (score, observed) pairs in ascending entity-id order.
    pub fn restrict<'a>(&'a self, scores: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.values.iter().map(move |(&id, &s)| (scores[id.idx()], s))
    }

    /// Ids observed by both signals, ascending.
    pub fn overlap(&self, other: &InputSignal) -> Vec<EntityId> {
        self.values
            .keys()
            .filter(|id| other.values.contains_key(id))
            .copied()
            .collect()
    }

    /// Restriction to the given ids (unobserved ids are ignored), keeping the
    /// name and preprocessing flag.
    pub fn subset<I>(&self, ids: I) -> Result<InputSignal>
    where
        I: IntoIterator<Item = EntityId>,
    {
        let values: BTreeMap<EntityId, f64> = ids
            .into_iter()
            .filter_map(|id| self.values.get(&id).map(|&v| (id, v)))
            .collect();
        let mut out = InputSignal::new(self.name.clone(), values)?;
        out.log_preprocessed = self.log_preprocessed;
        Ok(out)
    }
}

/// A named collection of signals in insertion order, names unique.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SignalSet {
    signals: Vec<InputSignal>,
}

impl SignalSet {
    pub fn new(signals: Vec<InputSignal>) -> Result<Self> {
        for (i, s) in signals.iter().enumerate() {
            if signals[..i].iter().any(|t| t.name == s.name) {
                return Err(Error::Contract(format!("duplicate signal name {:?}", s.name)));
            }
        }
        Ok(Self { signals })
    }

    pub fn push(&mut self, signal: InputSignal) -> Result<()> {
        if self.signals.iter().any(|s| s.name == signal.name) {
            return Err(Error::Contract(format!("duplicate signal name {:?}", signal.name)));
        }
        self.signals.push(signal);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InputSignal> {
        self.signals.iter()
    }

    pub fn get(&self, name: &str) -> Option<&InputSignal> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.signals.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name)
    }

    pub fn signal(&self, idx: usize) -> &InputSignal {
        &self.signals[idx]
    }

    /// Log-preprocesses every signal except the named exclusions.
    /// Unknown exclusion names are a config error.
    pub fn preprocess_log(&mut self, skip: &[String]) -> Result<()> {
        for name in skip {
            if !self.signals.iter().any(|s| &s.name == name) {
                return Err(Error::UnknownSignal(name.clone()));
            }
        }
        for s in &mut self.signals {
            if !skip.contains(&s.name) {
                s.apply_log()?;
            }
        }
        Ok(())
    }
}

/// Loads one `entity<TAB>value` signal file. Every referenced entity must
/// exist in the graph; duplicates and malformed values are parse errors.
pub fn load_signal(path: &Path, kg: &KnowledgeGraph, name: &str) -> Result<InputSignal> {
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut values = BTreeMap::new();
    for (lineno, raw) in BufReader::new(file).lines().enumerate() {
        let raw = raw.map_err(|source| Error::Io {
            path: path_str.clone(),
            source,
        })?;
        let line = raw.trim_end_matches('\r');
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let (entity, value) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: lineno + 1,
            message: "expected entity name followed by a tab".into(),
        })?;
        let id = kg.entity_id(entity).ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: lineno + 1,
            message: format!("unknown entity {entity:?}"),
        })?;
        let v: f64 = value.trim().parse().map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: lineno + 1,
            message: format!("invalid number {value:?}: {e}"),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("signal values must be non-negative and finite, found {v}"),
            });
        }
        if values.insert(id, v).is_some() {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: lineno + 1,
                message: format!("duplicate entry for entity {entity:?}"),
            });
        }
    }
    InputSignal::new(name, values)
}

/// Softmax of a score vector: the probability that each item ranks first.
/// The max is subtracted before exponentiation, so the result is invariant
/// under adding a constant to every score.
pub fn top_one_probabilities(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "top-one probabilities need at least one score");
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Average ranks (1-based), ties sharing the mean of their rank span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("ranks need finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-aware Spearman rank correlation: Pearson correlation of average ranks.
/// Undefined (None) for fewer than two pairs or when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "spearman inputs must align");
    if xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
