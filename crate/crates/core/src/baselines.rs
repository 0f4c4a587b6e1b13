//! Random-walk importance baselines over the collapsed directed multigraph:
//! PageRank, signal-personalized PageRank, and a hub/authority walk with
//! restarts toward the signal distribution.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::signals::InputSignal;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkConfig {
    pub damping: f64,
    /// Stop when the L1 change of a power-iteration sweep drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Authority restart weight of the hub/authority walk.
    pub har_alpha: f64,
    /// Hub restart weight.
    pub har_beta: f64,
    /// Relation-score update weight; 0 freezes relations at uniform.
    pub har_gamma: f64,
    pub har_iterations: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 200,
            har_alpha: 0.15,
            har_beta: 0.15,
            har_gamma: 0.0,
            har_iterations: 30,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config("damping must lie in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Multiplicity-weighted out-edges of the collapsed graph: for each node, the
/// distinct targets with their edge counts, plus the total out-multiplicity.
fn collapsed_out_edges(kg: &KnowledgeGraph) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
    let n = kg.entity_count();
    let mut maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    let mut out_total = vec![0.0; n];
    for t in kg.triples() {
        *maps[t.subject.idx()].entry(t.object.idx()).or_insert(0.0) += 1.0;
        out_total[t.subject.idx()] += 1.0;
    }
    let edges = maps
        .into_iter()
        .map(|m| {
            let mut v: Vec<(usize, f64)> = m.into_iter().collect();
            v.sort_unstable_by_key(|&(j, _)| j);
            v
        })
        .collect();
    (edges, out_total)
}

/// Power iteration with the given teleport distribution. Mass leaving
/// dangling nodes is redistributed uniformly.
fn power_iteration(kg: &KnowledgeGraph, teleport: &[f64], config: &WalkConfig) -> Vec<f64> {
    let n = kg.entity_count();
    let (edges, out_total) = collapsed_out_edges(kg);
    let d = config.damping;
    let uniform = 1.0 / n as f64;

    let mut x = vec![uniform; n];
    for _ in 0..config.max_iterations {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for i in 0..n {
            if out_total[i] == 0.0 {
                dangling += x[i];
                continue;
            }
            let scale = x[i] / out_total[i];
            for &(j, w) in &edges[i] {
                next[j] += scale * w;
            }
        }
        let mut change = 0.0;
        for i in 0..n {
            let v = d * (next[i] + dangling * uniform) + (1.0 - d) * teleport[i];
            change += (v - x[i]).abs();
            next[i] = v;
        }
        x = next;
        if change < config.tolerance {
            break;
        }
    }
    x
}

/// PageRank over the collapsed multigraph: parallel edges weight transitions
/// by multiplicity, teleportation is uniform. The result sums to 1.
pub fn pagerank(kg: &KnowledgeGraph, config: &WalkConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if kg.entity_count() == 0 {
        return Err(Error::EmptyGraph("pagerank input".into()));
    }
    let n = kg.entity_count();
    let teleport = vec![1.0 / n as f64; n];
    Ok(power_iteration(kg, &teleport, config))
}

/// Normalizes a signal into a teleport distribution over all nodes.
fn teleport_from_signal(kg: &KnowledgeGraph, signal: &InputSignal) -> Result<Vec<f64>> {
    let total: f64 = signal.values().values().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateTeleport {
            name: signal.name().to_string(),
        });
    }
    let mut teleport = vec![0.0; kg.entity_count()];
    for (&id, &v) in signal.values() {
        teleport[id.idx()] = v / total;
    }
    Ok(teleport)
}

/// PageRank whose teleportation lands on the signal's entities in proportion
/// to their observed values; nodes outside the signal get zero teleport mass.
pub fn personalized_pagerank(
    kg: &KnowledgeGraph,
    signal: &InputSignal,
    config: &WalkConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let teleport = teleport_from_signal(kg, signal)?;
    Ok(power_iteration(kg, &teleport, config))
}

/// Hub/authority walk with restarts: both score vectors start at the
/// normalized signal; each sweep pushes hub mass along per-predicate
/// out-normalized edges into authorities and authority mass along
/// per-predicate in-normalized edges into hubs, mixes the restart back in,
/// and L1-normalizes. Relations stay uniformly weighted (the relation-update
/// weight is zero). The output is the elementwise max of the two vectors.
pub fn har(kg: &KnowledgeGraph, signal: &InputSignal, config: &WalkConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = kg.entity_count();
    let q = teleport_from_signal(kg, signal)?;

    // per-(node, predicate) multiplicities for edge normalization
    let mut out_count: HashMap<(usize, usize), f64> = HashMap::new();
    let mut in_count: HashMap<(usize, usize), f64> = HashMap::new();
    for t in kg.triples() {
        *out_count.entry((t.subject.idx(), t.predicate.idx())).or_insert(0.0) += 1.0;
        *in_count.entry((t.object.idx(), t.predicate.idx())).or_insert(0.0) += 1.0;
    }
    let rel_weight = 1.0 / kg.predicate_count().max(1) as f64;

    let mut hub = q.clone();
    let mut auth = q.clone();
    for _ in 0..config.har_iterations {
        // authorities gather hub mass, each hub spreading per predicate
        let mut auth_next = vec![0.0; n];
        for t in kg.triples() {
            let (s, rho, o) = (t.subject.idx(), t.predicate.idx(), t.object.idx());
            auth_next[o] += rel_weight * hub[s] / out_count[&(s, rho)];
        }
        for i in 0..n {
            auth_next[i] = (1.0 - config.har_alpha) * auth_next[i] + config.har_alpha * q[i];
        }
        l1_normalize(&mut auth_next);
        auth = auth_next;

        // hubs gather the fresh authority mass along incoming normalization
        let mut hub_next = vec![0.0; n];
        for t in kg.triples() {
            let (s, rho, o) = (t.subject.idx(), t.predicate.idx(), t.object.idx());
            hub_next[s] += rel_weight * auth[o] / in_count[&(o, rho)];
        }
        for i in 0..n {
            hub_next[i] = (1.0 - config.har_beta) * hub_next[i] + config.har_beta * q[i];
        }
        l1_normalize(&mut hub_next);
        hub = hub_next;
    }

    Ok((0..n).map(|i| hub[i].max(auth[i])).collect())
}

fn l1_normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        for x in v {
            *x /= sum;
        }
    }
}
