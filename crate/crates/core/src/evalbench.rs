//! Evaluation harness: ranking metrics, cross-validation folds, scoped
//! evaluation reports, a forecasting split, downstream prediction tasks, a
//! synthetic benchmark generator, and the rebel-signal ablation experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{Days, NaiveDate};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Entity, EntityId, KnowledgeGraph, NodeFeatures, PredicateId, Triple};
use crate::objective::{adam_step_flat, AdamState};
use crate::seeding::derive_seed;
use crate::signals::{top_one_probabilities, InputSignal, SignalSet};
use crate::trainer::{run_algorithm1, ClusteringResult, TrainingConfig};

/// Normalized discounted cumulative gain at cutoff `k` over the entities
/// present in both lists. Candidates are ranked by estimate, descending, with
/// ties broken by ascending entity id so the metric is deterministic. Gains
/// are the truth values as given; an all-zero truth list scores 1.0 because
/// every ranking of worthless items is equally ideal.
pub fn ndcg_at_k(
    estimates: &[(EntityId, f64)],
    truths: &[(EntityId, f64)],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Contract("ndcg cutoff must be at least 1".into()));
    }
    let est: HashMap<EntityId, f64> = estimates.iter().copied().collect();
    let mut overlap: Vec<(EntityId, f64, f64)> = Vec::new();
    for &(id, truth) in truths {
        if let Some(&score) = est.get(&id) {
            if !score.is_finite() || !truth.is_finite() {
                return Err(Error::NonFinite("ndcg input".into()));
            }
            if truth < 0.0 {
                return Err(Error::Contract(format!(
                    "negative relevance {truth} for entity {}",
                    id.0
                )));
            }
            overlap.push((id, score, truth));
        }
    }
    if overlap.is_empty() {
        return Err(Error::EmptyInput("ndcg overlap".into()));
    }
    overlap.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0 .0.cmp(&b.0 .0)));
    let discounted = |gains: &mut dyn Iterator<Item = f64>| -> f64 {
        gains
            .take(k)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let dcg = discounted(&mut overlap.iter().map(|&(_, _, t)| t));
    let mut ideal: Vec<f64> = overlap.iter().map(|&(_, _, t)| t).collect();
    ideal.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let idcg = discounted(&mut ideal.into_iter());
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg / idcg)
}

/// NDCG of a full score vector against `(entity, truth)` pairs.
pub fn ndcg_scores(scores: &[f64], truths: &[(EntityId, f64)], k: usize) -> Result<f64> {
    let estimates: Vec<(EntityId, f64)> = truths
        .iter()
        .map(|&(id, _)| (id, scores[id.idx()]))
        .collect();
    ndcg_at_k(&estimates, truths, k)
}

/// A signal's observations as `(entity, value)` pairs in ascending id order.
pub fn signal_pairs(signal: &InputSignal) -> Vec<(EntityId, f64)> {
    signal.values().iter().map(|(&id, &v)| (id, v)).collect()
}

fn fold_ids(
    ids: &[EntityId],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<EntityId>, Vec<EntityId>)>> {
    if k < 2 || ids.len() < k {
        return Err(Error::Fold {
            domain: ids.len(),
            folds: k,
        });
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let end = start + size;
        let mut test: Vec<EntityId> = shuffled[start..end].to_vec();
        let mut train: Vec<EntityId> = shuffled[..start]
            .iter()
            .chain(&shuffled[end..])
            .copied()
            .collect();
        test.sort_unstable_by_key(|id| id.0);
        train.sort_unstable_by_key(|id| id.0);
        folds.push((train, test));
        start = end;
    }
    Ok(folds)
}

/// Splits a signal's observed entities into `k` disjoint test partitions of
/// near-equal size (within one element), each paired with the complementary
/// training set. The shuffle is seeded, so folds are reproducible.
pub fn make_folds(
    signal: &InputSignal,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<EntityId>, Vec<EntityId>)>> {
    let domain: Vec<EntityId> = signal.domain().collect();
    fold_ids(&domain, k, seed)
}

/// Candidate pool for an evaluation: the whole graph, or one entity type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScopeRule {
    Generic,
    Typed(String),
}

impl fmt::Display for ScopeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeRule::Generic => write!(f, "generic"),
            ScopeRule::Typed(t) => write!(f, "type:{t}"),
        }
    }
}

/// Whether the evaluated signal participated in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "ID")]
    InDomain,
    #[serde(rename = "OOD")]
    OutOfDomain,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainTag::InDomain => write!(f, "ID"),
            DomainTag::OutOfDomain => write!(f, "OOD"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub signal: String,
    pub k: usize,
    pub ndcg: f64,
    pub domain: DomainTag,
    pub scope: String,
    pub closed_world: bool,
}

/// Evaluation output plus the provenance needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<EvalRow>,
    pub seed: u64,
    pub config_hash: String,
}

/// Scores a full estimate vector against one signal. Under the closed-world
/// reading every candidate missing from the signal counts as relevance zero;
/// otherwise only observed candidates are ranked.
pub fn evaluate(
    estimates: &[f64],
    signal: &InputSignal,
    kg: &KnowledgeGraph,
    scope: &ScopeRule,
    closed_world: bool,
    ks: &[usize],
    domain: DomainTag,
) -> Result<Vec<EvalRow>> {
    if estimates.len() != kg.entity_count() {
        return Err(Error::Dimension {
            context: "estimate vector".into(),
            expected: kg.entity_count(),
            found: estimates.len(),
        });
    }
    let candidates: Vec<EntityId> = match scope {
        ScopeRule::Generic => kg.entity_ids().collect(),
        ScopeRule::Typed(t) => kg.entities_of_type(t),
    };
    if candidates.is_empty() {
        return Err(Error::EmptyInput(format!("evaluation scope {scope}")));
    }
    let truths: Vec<(EntityId, f64)> = if closed_world {
        candidates
            .iter()
            .map(|&id| (id, signal.get(id).unwrap_or(0.0)))
            .collect()
    } else {
        candidates
            .iter()
            .filter_map(|&id| signal.get(id).map(|v| (id, v)))
            .collect()
    };
    if truths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "signal {:?} has no observations inside scope {scope}",
            signal.name()
        )));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        rows.push(EvalRow {
            signal: signal.name().to_string(),
            k,
            ndcg: ndcg_scores(estimates, &truths, k)?,
            domain,
            scope: scope.to_string(),
            closed_world,
        });
    }
    Ok(rows)
}

/// A temporal split of one signal by entity timestamp.
#[derive(Debug, Clone)]
pub struct ForecastSplit {
    /// Observations on entities dated strictly before the cutoff.
    pub train: InputSignal,
    /// Observations on entities dated at or after the cutoff.
    pub test: InputSignal,
    /// Observed entities without a timestamp, dropped from both sides.
    pub dropped: usize,
}

pub fn forecasting_split(
    kg: &KnowledgeGraph,
    signal: &InputSignal,
    cutoff: NaiveDate,
) -> Result<ForecastSplit> {
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    let mut dropped = 0;
    for id in signal.domain() {
        match kg.entity(id).timestamp {
            Some(ts) if ts < cutoff => train_ids.push(id),
            Some(_) => test_ids.push(id),
            None => dropped += 1,
        }
    }
    if train_ids.is_empty() {
        return Err(Error::Split(format!(
            "no observed entity of {:?} predates the cutoff {cutoff}",
            signal.name()
        )));
    }
    if test_ids.is_empty() {
        return Err(Error::Split(format!(
            "no observed entity of {:?} is at or after the cutoff {cutoff}",
            signal.name()
        )));
    }
    Ok(ForecastSplit {
        train: signal.subset(train_ids)?,
        test: signal.subset(test_ids)?,
        dropped,
    })
}

/// Monotone transform linking a coherent synthetic signal to the latent
/// importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    Square,
    ExpScaled,
}

impl Transform {
    fn apply(self, v: f64, exp_scale: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Square => v * v,
            Transform::ExpScaled => (v / exp_scale).exp(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSignalSpec {
    pub transform: Transform,
    /// Standard deviation of the multiplicative log-normal observation noise.
    pub noise: f64,
    /// Fraction of in-scope entities that receive an observation.
    pub observation_fraction: f64,
    /// Restrict the signal to one entity type; `None` covers every entity.
    pub scope: Option<String>,
}

impl Default for SynthSignalSpec {
    fn default() -> Self {
        Self {
            transform: Transform::Identity,
            noise: 0.1,
            observation_fraction: 0.2,
            scope: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub nodes: usize,
    pub predicates: usize,
    /// Edges attached per newly arriving node.
    pub edges_per_node: usize,
    /// Location of the log-normal latent importance.
    pub latent_mu: f64,
    pub latent_sigma: f64,
    pub feature_dim: usize,
    /// Additive noise mixed into each informative feature column.
    pub feature_noise: f64,
    /// Coherent signals, each a monotone transform of the latent importance.
    pub coherent: Vec<SynthSignalSpec>,
    /// Number of rebel signals; each permutes a coherent recipe's values so
    /// it carries no information about the latent importance.
    pub rebels: usize,
    /// Entity type labels are assigned round-robin over this many types.
    pub entity_types: usize,
    pub with_timestamps: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 100,
            predicates: 3,
            edges_per_node: 3,
            latent_mu: 0.0,
            latent_sigma: 1.0,
            feature_dim: 8,
            feature_noise: 0.1,
            coherent: vec![SynthSignalSpec::default()],
            rebels: 0,
            entity_types: 1,
            with_timestamps: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::Config("synthetic graph needs at least 2 nodes".into()));
        }
        if self.predicates == 0 || self.edges_per_node == 0 {
            return Err(Error::Config(
                "synthetic graph needs at least one predicate and one edge per node".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if !(self.latent_sigma > 0.0 && self.latent_sigma.is_finite()) {
            return Err(Error::Config("latent sigma must be positive and finite".into()));
        }
        if self.feature_noise < 0.0 {
            return Err(Error::Config("feature noise must be non-negative".into()));
        }
        if self.entity_types == 0 {
            return Err(Error::Config("at least one entity type is required".into()));
        }
        if self.rebels > 0 && self.coherent.is_empty() {
            return Err(Error::Config(
                "rebel signals permute coherent recipes, so at least one coherent signal is required".into(),
            ));
        }
        for (i, spec) in self.coherent.iter().enumerate() {
            if !(spec.observation_fraction > 0.0 && spec.observation_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "observation fraction of signal {i} must lie in (0, 1]"
                )));
            }
            if spec.noise < 0.0 {
                return Err(Error::Config(format!(
                    "observation noise of signal {i} must be non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// A generated benchmark instance, along with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub kg: KnowledgeGraph,
    pub features: NodeFeatures,
    pub signals: SignalSet,
    /// Latent importance per entity, in id order.
    pub latent: Vec<f64>,
    pub coherent_names: Vec<String>,
    pub rebel_names: Vec<String>,
}

fn synth_signal(
    name: &str,
    spec: &SynthSignalSpec,
    kg: &KnowledgeGraph,
    latent: &[f64],
    exp_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<InputSignal> {
    let candidates: Vec<EntityId> = match &spec.scope {
        None => kg.entity_ids().collect(),
        Some(t) => kg.entities_of_type(t),
    };
    if candidates.is_empty() {
        return Err(Error::Config(format!(
            "signal scope {:?} matches no entity",
            spec.scope
        )));
    }
    let count = ((spec.observation_fraction * candidates.len() as f64).round() as usize)
        .clamp(1, candidates.len());
    let mut observed: Vec<EntityId> = rand::seq::index::sample(rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    observed.sort_unstable_by_key(|id| id.0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let values: BTreeMap<EntityId, f64> = observed
        .into_iter()
        .map(|id| {
            let base = spec.transform.apply(latent[id.idx()], exp_scale);
            (id, base * (spec.noise * unit.sample(rng)).exp())
        })
        .collect();
    InputSignal::new(name, values)
}

/// Generates a preferential-attachment multigraph with typed nodes, a
/// log-normal latent importance, informative node features, coherent signals
/// (monotone transforms of the latent importance under multiplicative
/// noise), and optional rebel signals whose values are permuted so they
/// contradict every coherent signal. Fully determined by `config.seed`.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");

    let entities: Vec<Entity> = (0..config.nodes)
        .map(|i| Entity {
            name: format!("v{i}"),
            entity_type: format!("t{}", i % config.entity_types),
            timestamp: config.with_timestamps.then(|| {
                epoch
                    .checked_add_days(Days::new(rng.gen_range(0..7305u64)))
                    .expect("date in range")
            }),
        })
        .collect();
    let predicates: Vec<String> = (0..config.predicates).map(|p| format!("r{p}")).collect();

    // Urn-based preferential attachment: the urn holds each node once plus
    // once per incident edge, so drawing uniformly is degree+1 sampling.
    let mut urn: Vec<usize> = vec![0];
    let mut triples = Vec::with_capacity((config.nodes - 1) * config.edges_per_node);
    for i in 1..config.nodes {
        urn.push(i);
        for _ in 0..config.edges_per_node {
            let target = loop {
                let t = urn[rng.gen_range(0..urn.len())];
                if t != i {
                    break t;
                }
            };
            let predicate = PredicateId(rng.gen_range(0..config.predicates as u32));
            let (subject, object) = if rng.gen_bool(0.5) {
                (i, target)
            } else {
                (target, i)
            };
            triples.push(Triple {
                subject: EntityId(subject as u32),
                predicate,
                object: EntityId(object as u32),
            });
            urn.push(i);
            urn.push(target);
        }
    }
    let kg = KnowledgeGraph::from_parts(entities, predicates, triples)?;

    let lognormal = LogNormal::new(config.latent_mu, config.latent_sigma)
        .map_err(|e| Error::Config(format!("latent distribution: {e}")))?;
    let latent: Vec<f64> = (0..config.nodes).map(|_| lognormal.sample(&mut rng)).collect();

    // Features are noisy linear readouts of the standardized latent score,
    // so they are informative without handing the estimator the answer.
    let mean = latent.iter().sum::<f64>() / latent.len() as f64;
    let var = latent.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / latent.len() as f64;
    let std = var.sqrt().max(1e-12);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let col_weights: Vec<f64> = (0..config.feature_dim).map(|_| unit.sample(&mut rng)).collect();
    let mut cells = Vec::with_capacity(config.nodes * config.feature_dim);
    for &v in &latent {
        let standardized = (v - mean) / std;
        for w in &col_weights {
            cells.push(w * standardized + config.feature_noise * unit.sample(&mut rng));
        }
    }
    let features = NodeFeatures::new(
        Array2::from_shape_vec((config.nodes, config.feature_dim), cells)
            .expect("cell count matches shape"),
    )?;

    let max_latent = latent.iter().cloned().fold(f64::MIN, f64::max);
    // Caps the exponent at 10 so the exponential transform stays finite.
    let exp_scale = (max_latent / 10.0).max(1.0);

    let mut signals = Vec::new();
    let mut coherent_names = Vec::new();
    for (i, spec) in config.coherent.iter().enumerate() {
        let name = format!("s{i}");
        signals.push(synth_signal(&name, spec, &kg, &latent, exp_scale, &mut rng)?);
        coherent_names.push(name);
    }
    let mut rebel_names = Vec::new();
    for r in 0..config.rebels {
        let spec = &config.coherent[r % config.coherent.len()];
        let name = format!("rebel{r}");
        let coherent_like = synth_signal(&name, spec, &kg, &latent, exp_scale, &mut rng)?;
        // Permuting the values across the observed entities severs the link
        // to the latent importance while keeping the marginal distribution.
        let ids: Vec<EntityId> = coherent_like.domain().collect();
        let mut values: Vec<f64> = ids.iter().map(|&id| coherent_like.get(id).expect("observed")).collect();
        values.shuffle(&mut rng);
        let rebel = InputSignal::new(&name, ids.into_iter().zip(values).collect())?;
        signals.push(rebel);
        rebel_names.push(name);
    }

    Ok(SynthData {
        kg,
        features,
        signals: SignalSet::new(signals)?,
        latent,
        coherent_names,
        rebel_names,
    })
}

/// Linear-model training policy for the downstream prediction task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub folds: usize,
    pub lambda: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda: 1e-3,
            lr: 0.05,
            iterations: 400,
            seed: 0,
        }
    }
}

/// Cross-validated ranking quality of one feature configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRow {
    pub configuration: String,
    pub ndcg10_mean: f64,
    pub ndcg10_std: f64,
    pub ndcg100_mean: f64,
    pub ndcg100_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains a linear ranker on one column set and scores it on the test fold.
fn fold_ndcg(
    columns: &[Vec<f64>],
    truths: &[f64],
    train: &[usize],
    test: &[usize],
    test_ids: &[EntityId],
    config: &PredictionConfig,
) -> Result<(f64, f64)> {
    let d = columns.len();
    // Per-column standardization from training statistics keeps Adam's step
    // size meaningful across wildly different signal scales.
    let mut mu = vec![0.0; d];
    let mut sigma = vec![1.0; d];
    for (c, col) in columns.iter().enumerate() {
        let (m, s) = mean_std(&train.iter().map(|&i| col[i]).collect::<Vec<_>>());
        mu[c] = m;
        sigma[c] = if s > 1e-12 { s } else { 1.0 };
    }
    let standardized = |row: usize, c: usize| (columns[c][row] - mu[c]) / sigma[c];

    let target_probs = top_one_probabilities(&train.iter().map(|&i| truths[i]).collect::<Vec<_>>());
    let mut theta = vec![0.0; d + 1];
    let mut adam = AdamState::new(d + 1);
    for _ in 0..config.iterations {
        let scores: Vec<f64> = train
            .iter()
            .map(|&i| (0..d).map(|c| theta[c] * standardized(i, c)).sum::<f64>() + theta[d])
            .collect();
        let q = top_one_probabilities(&scores);
        let mut grads = vec![0.0; d + 1];
        for (pos, &i) in train.iter().enumerate() {
            let dz = q[pos] - target_probs[pos];
            for (c, g) in grads.iter_mut().take(d).enumerate() {
                *g += dz * standardized(i, c);
            }
            grads[d] += dz;
        }
        for c in 0..d {
            grads[c] += config.lambda * theta[c];
        }
        adam_step_flat(&mut adam, &mut theta, &grads, config.lr, 0.9, 0.999);
    }

    let estimates: Vec<(EntityId, f64)> = test
        .iter()
        .zip(test_ids)
        .map(|(&i, &id)| {
            (id, (0..d).map(|c| theta[c] * standardized(i, c)).sum::<f64>() + theta[d])
        })
        .collect();
    let truth_pairs: Vec<(EntityId, f64)> = test
        .iter()
        .zip(test_ids)
        .map(|(&i, &id)| (id, truths[i]))
        .collect();
    Ok((
        ndcg_at_k(&estimates, &truth_pairs, 10)?,
        ndcg_at_k(&estimates, &truth_pairs, 100)?,
    ))
}

/// Predicts one signal from others with a cross-validated linear ranker.
/// Reports a baseline configuration using the feature signals alone, then one
/// configuration per augmentation (a named full-graph score vector appended
/// as an extra feature column). Only entities observed in the target and in
/// every feature signal are eligible; fewer than 10 such entities make the
/// task meaningless.
pub fn signal_prediction_task(
    target: &InputSignal,
    feature_signals: &[&InputSignal],
    augmentations: &[(String, Vec<f64>)],
    config: &PredictionConfig,
) -> Result<Vec<PredictionRow>> {
    let eligible: Vec<EntityId> = target
        .domain()
        .filter(|&id| feature_signals.iter().all(|f| f.get(id).is_some()))
        .collect();
    if eligible.len() < 10 {
        return Err(Error::Task(format!(
            "only {} entities carry the target and every feature; at least 10 are required",
            eligible.len()
        )));
    }
    let folds = fold_ids(
        &eligible,
        config.folds,
        derive_seed(config.seed, &["prediction", target.name()]),
    )?;
    let row_of: HashMap<EntityId, usize> =
        eligible.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let truths: Vec<f64> = eligible
        .iter()
        .map(|&id| target.get(id).expect("eligible entity is observed"))
        .collect();
    let base_columns: Vec<Vec<f64>> = feature_signals
        .iter()
        .map(|f| {
            eligible
                .iter()
                .map(|&id| f.get(id).expect("eligible entity is observed"))
                .collect()
        })
        .collect();

    let mut configurations: Vec<(String, Vec<Vec<f64>>)> =
        vec![("features".to_string(), base_columns.clone())];
    for (name, scores) in augmentations {
        let mut cols = base_columns.clone();
        cols.push(eligible.iter().map(|&id| scores[id.idx()]).collect());
        configurations.push((format!("features+{name}"), cols));
    }

    let mut rows = Vec::with_capacity(configurations.len());
    for (name, columns) in &configurations {
        let mut at10 = Vec::with_capacity(folds.len());
        let mut at100 = Vec::with_capacity(folds.len());
        for (train_ids, test_ids) in &folds {
            let train: Vec<usize> = train_ids.iter().map(|id| row_of[id]).collect();
            let test: Vec<usize> = test_ids.iter().map(|id| row_of[id]).collect();
            let (n10, n100) = fold_ndcg(columns, &truths, &train, &test, test_ids, config)?;
            at10.push(n10);
            at100.push(n100);
        }
        let (m10, s10) = mean_std(&at10);
        let (m100, s100) = mean_std(&at100);
        rows.push(PredictionRow {
            configuration: name.clone(),
            ndcg10_mean: m10,
            ndcg10_std: s10,
            ndcg100_mean: m100,
            ndcg100_std: s100,
        });
    }
    Ok(rows)
}

/// Held-out ranking quality of one coherent signal under both arms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RebelOutcome {
    pub signal: String,
    /// NDCG@100 using the scores of the signal's own cluster.
    pub handled_ndcg: f64,
    /// NDCG@100 when every signal is forced into a single pool.
    pub unhandled_ndcg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RebelStatus {
    pub name: String,
    /// True when the rebel shares no cluster with any coherent signal.
    pub isolated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RebelReport {
    pub coherent: Vec<RebelOutcome>,
    pub rebels: Vec<RebelStatus>,
    pub handled_clusters: Vec<Vec<String>>,
    pub unhandled_clusters: Vec<Vec<String>>,
}

fn cluster_of(result: &ClusteringResult, name: &str) -> usize {
    result
        .clusters
        .iter()
        .position(|c| c.members.iter().any(|m| m == name))
        .expect("every signal belongs to exactly one cluster")
}

/// Generates a benchmark, holds out 20% of every signal, and contrasts
/// clustered training against an ablated run whose merge threshold drops to
/// -1 once the first round is over, pooling all comparable signals. When the
/// first round makes no merge the run is already over at that point, so the
/// ablated arm equals the clustered one.
pub fn rebel_experiment(
    synth: &SynthConfig,
    training: &TrainingConfig,
) -> Result<RebelReport> {
    let data = synth_generate(synth)?;
    let mut full = data.signals;
    full.preprocess_log(&[])?;

    let mut train_signals = Vec::with_capacity(full.len());
    let mut heldout: HashMap<String, Vec<(EntityId, f64)>> = HashMap::new();
    for sig in full.iter() {
        let folds = make_folds(sig, 5, derive_seed(training.seed, &["holdout", sig.name()]))?;
        let (train_ids, test_ids) = &folds[0];
        train_signals.push(sig.subset(train_ids.iter().copied())?);
        heldout.insert(
            sig.name().to_string(),
            test_ids
                .iter()
                .map(|&id| (id, sig.get(id).expect("held-out id is observed")))
                .collect(),
        );
    }
    let train_set = SignalSet::new(train_signals)?;

    let handled = run_algorithm1(&data.kg, &data.features, &train_set, training)?;
    // Forcing the threshold down only matters once a first merge has fired;
    // the merge order up to that point is threshold-independent.
    let round_one_merged = handled.history.first().is_some_and(|round| {
        round
            .matrix
            .iter()
            .flatten()
            .flatten()
            .any(|&sim| sim > training.merge_threshold)
    });
    let unhandled = if round_one_merged {
        let mut ablated = training.clone();
        ablated.merge_threshold = -1.0;
        run_algorithm1(&data.kg, &data.features, &train_set, &ablated)?
    } else {
        handled.clone()
    };

    let mut coherent = Vec::with_capacity(data.coherent_names.len());
    for name in &data.coherent_names {
        let truth = &heldout[name];
        let handled_z = &handled.clusters[cluster_of(&handled, name)].z;
        let unhandled_z = &unhandled.clusters[cluster_of(&unhandled, name)].z;
        coherent.push(RebelOutcome {
            signal: name.clone(),
            handled_ndcg: ndcg_scores(handled_z, truth, 100)?,
            unhandled_ndcg: ndcg_scores(unhandled_z, truth, 100)?,
        });
    }
    let rebel_set: HashSet<&str> = data.rebel_names.iter().map(String::as_str).collect();
    let rebels = data
        .rebel_names
        .iter()
        .map(|name| {
            let members = &handled.clusters[cluster_of(&handled, name)].members;
            RebelStatus {
                name: name.clone(),
                isolated: members.iter().all(|m| rebel_set.contains(m.as_str())),
            }
        })
        .collect();
    Ok(RebelReport {
        coherent,
        rebels,
        handled_clusters: handled.clusters.iter().map(|c| c.members.clone()).collect(),
        unhandled_clusters: unhandled.clusters.iter().map(|c| c.members.clone()).collect(),
    })
}
