//! Cluster training: full-batch Adam with validation-based early stopping,
//! rank-correlation similarity between signal clusters, and the iterative
//! train/compare/merge procedure that isolates contradictory signals.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{forward, init_params, EstimatorConfig, EstimatorParams};
use crate::evalbench::ndcg_scores;
use crate::kg::{EntityId, KnowledgeGraph, NodeFeatures};
use crate::objective::{adam_step, gradients, AdamState, LossConfig};
use crate::seeding::derive_seed;
use crate::signals::{spearman, InputSignal, SignalSet};

/// How the primary cluster is chosen once clustering has converged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorityPolicy {
    /// Most member signals; ties fall back to quality, then to the
    /// lexicographically smallest member name.
    Size,
    /// Best validation ranking quality; ties fall back to size, then name.
    Quality,
    /// The cluster containing the named signal.
    Preference(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lr: f64,
    pub max_iterations: usize,
    /// Iterations without validation improvement tolerated before stopping.
    pub patience: usize,
    /// Share of each signal's observations held out for early stopping.
    pub validation_fraction: f64,
    /// Clusters merge while their similarity exceeds this threshold.
    pub merge_threshold: f64,
    /// Observation overlap needed before two signals are compared directly.
    pub min_direct_overlap: usize,
    pub loss: LossConfig,
    pub estimator: EstimatorConfig,
    pub policy: PriorityPolicy,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            max_iterations: 3000,
            patience: 30,
            validation_fraction: 0.15,
            merge_threshold: 0.6,
            min_direct_overlap: 50,
            loss: LossConfig::default(),
            estimator: EstimatorConfig::default(),
            policy: PriorityPolicy::Size,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive and finite".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("at least one training iteration is required".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        if !self.merge_threshold.is_finite() || self.merge_threshold > 1.0 {
            return Err(Error::Config(
                "merge threshold must be finite and at most 1".into(),
            ));
        }
        Ok(())
    }
}

/// One training iteration as recorded in the log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub loss: f64,
    /// Mean validation NDCG@100 over the cluster's usable members.
    pub val_ndcg: f64,
}

/// Result of training one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters restored from the best validation iteration.
    pub params: EstimatorParams,
    /// Importance estimates of the restored parameters.
    pub z: Vec<f64>,
    /// Best mean validation NDCG@100; recomputing it from `params` gives
    /// back exactly this value.
    pub quality: f64,
    pub log: Vec<TrainLogEntry>,
    /// Members with too few observations to hold out a validation set.
    pub excluded: Vec<String>,
}

/// A trained group of mutually consistent signals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalCluster {
    /// Member signal names, sorted.
    pub members: Vec<String>,
    pub excluded: Vec<String>,
    pub params: EstimatorParams,
    pub z: Vec<f64>,
    pub quality: f64,
}

/// Cluster compositions and their pairwise similarities for one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSimilarities {
    pub clusters: Vec<Vec<String>>,
    /// Symmetric matrix; `None` marks the diagonal and incomparable pairs.
    pub matrix: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub clusters: Vec<SignalCluster>,
    pub history: Vec<RoundSimilarities>,
    /// Index of the primary cluster under the configured policy.
    pub primary: usize,
    /// Importance estimates of the primary cluster.
    pub z: Vec<f64>,
}

struct ValidationSplit {
    train: InputSignal,
    val: Vec<(EntityId, f64)>,
}

/// Holds out a seeded validation slice of one signal. Returns `None` when the
/// signal is too small to keep at least two training observations.
fn validation_split(signal: &InputSignal, config: &TrainingConfig) -> Option<ValidationSplit> {
    let n = signal.len();
    if n < 3 {
        return None;
    }
    let held = ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let mut ids: Vec<EntityId> = signal.domain().collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["validation", signal.name()]));
    ids.shuffle(&mut rng);
    let (val_ids, train_ids) = ids.split_at(held);
    let mut val: Vec<(EntityId, f64)> = val_ids
        .iter()
        .map(|&id| (id, signal.get(id).expect("id from domain")))
        .collect();
    val.sort_unstable_by_key(|(id, _)| id.0);
    let train = signal
        .subset(train_ids.iter().copied())
        .expect("at least two training observations remain");
    Some(ValidationSplit { train, val })
}

/// Trains one cluster with full-batch Adam, early-stopping on the mean
/// validation NDCG@100 of its members and restoring the best parameters.
/// Members too small to spare a validation slice are excluded; a cluster
/// with no usable member cannot be trained.
pub fn train_single_cluster(
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    members: &[&InputSignal],
    config: &TrainingConfig,
    warm_start: Option<&EstimatorParams>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut splits = Vec::new();
    let mut excluded = Vec::new();
    for signal in members {
        match validation_split(signal, config) {
            Some(split) => splits.push(split),
            None => excluded.push(signal.name().to_string()),
        }
    }
    if splits.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let train_refs: Vec<&InputSignal> = splits.iter().map(|s| &s.train).collect();
    let validation_ndcg = |z: &[f64]| -> Result<f64> {
        let mut total = 0.0;
        for split in &splits {
            total += ndcg_scores(z, &split.val, 100)?;
        }
        Ok(total / splits.len() as f64)
    };

    let mut params = match warm_start {
        Some(p) => p.clone(),
        None => {
            let mut names: Vec<&str> = vec!["init"];
            names.extend(members.iter().map(|s| s.name()));
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &names));
            init_params(&config.estimator, kg, features.dim(), &mut rng)?
        }
    };
    let mut adam = AdamState::new(params.param_count());
    let mut log = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut stale = 0;
    for iteration in 0..config.max_iterations {
        let bundle = gradients(
            &params,
            &config.estimator,
            &config.loss,
            kg,
            features,
            &train_refs,
            iteration as u64,
        )?;
        let val_ndcg = validation_ndcg(&bundle.z)?;
        log.push(TrainLogEntry {
            iteration,
            loss: bundle.loss,
            val_ndcg,
        });
        if val_ndcg > best_val {
            best_val = val_ndcg;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
        adam_step(&mut adam, &mut params, &bundle.grads, config.lr, 0.9, 0.999);
    }

    let z = forward(&best_params, &config.estimator, kg, features)?.z;
    let quality = validation_ndcg(&z)?;
    Ok(TrainOutcome {
        params: best_params,
        z,
        quality,
        log,
        excluded,
    })
}

/// Rank correlation between two signals. Signals sharing enough observed
/// entities are compared directly; otherwise each signal's observations are
/// compared against the estimates of the other signal's cluster, taking the
/// stronger of the two agreements. `None` means no comparison is defined.
fn signal_similarity(
    sig_i: &InputSignal,
    sig_j: &InputSignal,
    z_of_i: &[f64],
    z_of_j: &[f64],
    min_direct_overlap: usize,
) -> Option<f64> {
    let overlap = sig_i.overlap(sig_j);
    if overlap.len() >= min_direct_overlap {
        let xs: Vec<f64> = overlap.iter().map(|&id| sig_i.get(id).expect("overlap")).collect();
        let ys: Vec<f64> = overlap.iter().map(|&id| sig_j.get(id).expect("overlap")).collect();
        return spearman(&xs, &ys);
    }
    let against = |sig: &InputSignal, z: &[f64]| -> Option<f64> {
        let obs: Vec<f64> = sig.values().values().copied().collect();
        let est: Vec<f64> = sig.domain().map(|id| z[id.idx()]).collect();
        spearman(&obs, &est)
    };
    match (against(sig_i, z_of_j), against(sig_j, z_of_i)) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    }
}

/// Mean defined similarity over all cross-cluster member pairs.
pub fn cluster_similarity(
    a: &SignalCluster,
    b: &SignalCluster,
    signals: &SignalSet,
    config: &TrainingConfig,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for m in &a.members {
        for n in &b.members {
            let sig_m = signals.get(m).expect("member signal exists");
            let sig_n = signals.get(n).expect("member signal exists");
            if let Some(s) =
                signal_similarity(sig_m, sig_n, &a.z, &b.z, config.min_direct_overlap)
            {
                sum += s;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn train_round(
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &SignalSet,
    config: &TrainingConfig,
    memberships: &[Vec<String>],
    warm: &[Option<EstimatorParams>],
) -> Result<Vec<SignalCluster>> {
    memberships
        .par_iter()
        .zip(warm.par_iter())
        .map(|(members, warm_start)| {
            let mut refs = Vec::with_capacity(members.len());
            for name in members {
                refs.push(signals.get(name).ok_or_else(|| {
                    Error::Contract(format!("cluster member {name:?} is not in the signal set"))
                })?);
            }
            let outcome =
                train_single_cluster(kg, features, &refs, config, warm_start.as_ref())?;
            Ok(SignalCluster {
                members: members.clone(),
                excluded: outcome.excluded,
                params: outcome.params,
                z: outcome.z,
                quality: outcome.quality,
            })
        })
        .collect()
}

fn cluster_loop(
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &SignalSet,
    config: &TrainingConfig,
    mut memberships: Vec<Vec<String>>,
    mut warm: Vec<Option<EstimatorParams>>,
) -> Result<ClusteringResult> {
    config.validate()?;
    if memberships.is_empty() {
        return Err(Error::EmptyInput("signal set".into()));
    }
    let mut history = Vec::new();
    loop {
        let clusters = train_round(kg, features, signals, config, &memberships, &warm)?;

        let k = clusters.len();
        let mut matrix: Vec<Vec<Option<f64>>> = vec![vec![None; k]; k];
        for a in 0..k {
            for b in (a + 1)..k {
                let sim = cluster_similarity(&clusters[a], &clusters[b], signals, config);
                matrix[a][b] = sim;
                matrix[b][a] = sim;
            }
        }
        history.push(RoundSimilarities {
            clusters: memberships.clone(),
            matrix,
        });

        // Average-linkage agglomeration over this round's clusters. Group
        // linkage is the mean defined similarity across member signal pairs,
        // so chains of merges stay transitive within the round.
        let pair_sim = |x: &[String], y: &[String], zx: &[f64], zy: &[f64]| -> (f64, usize) {
            let mut sum = 0.0;
            let mut count = 0;
            for m in x {
                for n in y {
                    if let Some(s) = signal_similarity(
                        signals.get(m).expect("member exists"),
                        signals.get(n).expect("member exists"),
                        zx,
                        zy,
                        config.min_direct_overlap,
                    ) {
                        sum += s;
                        count += 1;
                    }
                }
            }
            (sum, count)
        };
        let mut groups: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        loop {
            let linkage = |ga: &[usize], gb: &[usize]| -> Option<f64> {
                let mut sum = 0.0;
                let mut count = 0;
                for &a in ga {
                    for &b in gb {
                        let (s, c) = pair_sim(
                            &clusters[a].members,
                            &clusters[b].members,
                            &clusters[a].z,
                            &clusters[b].z,
                        );
                        sum += s;
                        count += c;
                    }
                }
                (count > 0).then(|| sum / count as f64)
            };
            let mut best: Option<(usize, usize, f64)> = None;
            for a in 0..groups.len() {
                for b in (a + 1)..groups.len() {
                    if let Some(sim) = linkage(&groups[a], &groups[b]) {
                        if sim > config.merge_threshold
                            && best.is_none_or(|(_, _, s)| sim > s)
                        {
                            best = Some((a, b, sim));
                        }
                    }
                }
            }
            match best {
                Some((a, b, _)) => {
                    let merged = groups.remove(b);
                    groups[a].extend(merged);
                }
                None => break,
            }
        }

        if groups.len() == k {
            let primary = select_primary_cluster(&clusters, &config.policy)?;
            return Ok(ClusteringResult {
                z: clusters[primary].z.clone(),
                primary,
                clusters,
                history,
            });
        }

        memberships = Vec::with_capacity(groups.len());
        warm = Vec::with_capacity(groups.len());
        for group in &groups {
            let mut names: Vec<String> = group
                .iter()
                .flat_map(|&i| clusters[i].members.iter().cloned())
                .collect();
            names.sort_unstable();
            memberships.push(names);
            // a merged cluster resumes from its largest constituent
            let largest = group
                .iter()
                .copied()
                .max_by_key(|&i| (clusters[i].members.len(), std::cmp::Reverse(i)))
                .expect("groups are non-empty");
            warm.push(Some(clusters[largest].params.clone()));
        }
    }
}

/// Trains every signal in its own cluster, then repeatedly merges clusters
/// whose estimates and observations agree (rank correlation above the merge
/// threshold) and retrains, until the clustering is stable. Returns the final
/// clusters, the per-round similarity history, and the primary estimates.
pub fn run_algorithm1(
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    signals: &SignalSet,
    config: &TrainingConfig,
) -> Result<ClusteringResult> {
    let memberships: Vec<Vec<String>> = signals
        .iter()
        .map(|s| vec![s.name().to_string()])
        .collect();
    let warm = vec![None; memberships.len()];
    cluster_loop(kg, features, signals, config, memberships, warm)
}

/// Picks the cluster whose estimates the caller should consume.
pub fn select_primary_cluster(
    clusters: &[SignalCluster],
    policy: &PriorityPolicy,
) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::EmptyInput("cluster list".into()));
    }
    let lex = |i: usize| clusters[i].members.first().map(String::as_str).unwrap_or("");
    let better = |i: usize, j: usize, primary: fn(&SignalCluster) -> (usize, f64)| -> bool {
        let (pi, qi) = primary(&clusters[i]);
        let (pj, qj) = primary(&clusters[j]);
        (pi, qi, std::cmp::Reverse(lex(i))) > (pj, qj, std::cmp::Reverse(lex(j)))
    };
    match policy {
        PriorityPolicy::Size => Ok((0..clusters.len())
            .reduce(|best, i| if better(i, best, |c| (c.members.len(), c.quality)) { i } else { best })
            .expect("non-empty")),
        PriorityPolicy::Quality => {
            // quality is an NDCG mean, totally ordered on [0, 1]
            let key = |c: &SignalCluster| (c.quality, c.members.len());
            Ok((0..clusters.len())
                .reduce(|best, i| {
                    let (qi, si) = key(&clusters[i]);
                    let (qb, sb) = key(&clusters[best]);
                    if (qi, si, std::cmp::Reverse(lex(i))) > (qb, sb, std::cmp::Reverse(lex(best))) {
                        i
                    } else {
                        best
                    }
                })
                .expect("non-empty"))
        }
        PriorityPolicy::Preference(name) => clusters
            .iter()
            .position(|c| c.members.iter().any(|m| m == name))
            .ok_or_else(|| Error::Policy(format!("no cluster contains signal {name:?}"))),
    }
}

/// Adds new signals to an existing clustering without retraining from
/// scratch: previous clusters keep their parameters as warm starts, each new
/// signal starts as a singleton, and the train/compare/merge loop resumes.
/// Returns the extended signal set alongside the new clustering.
pub fn add_signals_incremental(
    previous: &ClusteringResult,
    existing: &SignalSet,
    new_signals: Vec<InputSignal>,
    kg: &KnowledgeGraph,
    features: &NodeFeatures,
    config: &TrainingConfig,
) -> Result<(SignalSet, ClusteringResult)> {
    for cluster in &previous.clusters {
        for member in &cluster.members {
            if existing.get(member).is_none() {
                return Err(Error::Contract(format!(
                    "previous cluster member {member:?} is missing from the signal set"
                )));
            }
        }
    }
    let mut set = existing.clone();
    let mut memberships: Vec<Vec<String>> =
        previous.clusters.iter().map(|c| c.members.clone()).collect();
    let mut warm: Vec<Option<EstimatorParams>> = previous
        .clusters
        .iter()
        .map(|c| Some(c.params.clone()))
        .collect();
    for signal in new_signals {
        memberships.push(vec![signal.name().to_string()]);
        warm.push(None);
        set.push(signal)?;
    }
    let result = cluster_loop(kg, features, &set, config, memberships, warm)?;
    Ok((set, result))
}
