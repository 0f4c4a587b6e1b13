//! Inference of latent node importance in multi-relational knowledge graphs
//! from multiple partially observed, mutually conflicting signals.
//!
//! The crate provides the graph and signal data model, an attention-based
//! importance estimator with analytic gradients, a clustering training loop
//! that isolates disagreeing signals, classic random-walk baselines, and an
//! evaluation harness with ranking metrics, cross-validation, and a synthetic
//! benchmark generator.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod evalbench;
pub mod kg;
pub mod objective;
pub mod seeding;
pub mod signals;
pub mod trainer;

pub use baselines::WalkConfig;
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, EstimatorParams, ForwardTrace};
pub use evalbench::{
    EvalRow, EvaluationReport, PredictionConfig, RebelReport, ScopeRule, SynthConfig, SynthData,
};
pub use kg::{Entity, EntityId, KnowledgeGraph, NodeFeatures, PredicateId, Triple, ValidationReport};
pub use objective::{AdamState, GradCheckOptions, GradCheckReport, GradientBundle, LossConfig};
pub use signals::{InputSignal, SignalSet};
pub use trainer::{ClusteringResult, PriorityPolicy, SignalCluster, TrainingConfig};
