//! One module per subcommand, plus the config builders they share.

pub mod baseline;
pub mod eval;
pub mod forecast;
pub mod gradcheck;
pub mod predict;
pub mod synth;
pub mod train;
pub mod validate;

use kgrank_core::{EstimatorConfig, LossConfig, PriorityPolicy, TrainingConfig, WalkConfig};

use crate::config::{usage, CliResult, RunConfig};

/// Unset keys fall back to the library defaults, so a config file only needs
/// to name what it changes.
pub(crate) fn estimator_config(run: &RunConfig) -> CliResult<EstimatorConfig> {
    let d = EstimatorConfig::default();
    Ok(EstimatorConfig {
        layers: run.parse_or("estimator.layers", d.layers)?,
        heads: run.parse_or("estimator.heads", d.heads)?,
        pred_dim: run.parse_or("estimator.pred_dim", d.pred_dim)?,
        hidden_dim: run.parse("estimator.hidden_dim")?,
        leaky_slope: run.parse_or("estimator.leaky_slope", d.leaky_slope)?,
        ..d
    })
}

pub(crate) fn loss_config(run: &RunConfig, seed: u64) -> CliResult<LossConfig> {
    let d = LossConfig::default();
    Ok(LossConfig {
        lambda: run.parse_or("loss.lambda", d.lambda)?,
        nu: run.parse_or("loss.nu", d.nu)?,
        edge_sample_fraction: run.parse_or("loss.edge_sample_fraction", d.edge_sample_fraction)?,
        seed,
    })
}

pub(crate) fn training_config(run: &RunConfig, seed: u64) -> CliResult<TrainingConfig> {
    let d = TrainingConfig::default();
    let policy = match run.get("train.policy") {
        None => d.policy.clone(),
        Some("size") => PriorityPolicy::Size,
        Some("quality") => PriorityPolicy::Quality,
        Some(other) => match other.strip_prefix("prefer:") {
            Some(name) if !name.is_empty() => PriorityPolicy::Preference(name.to_string()),
            _ => {
                return Err(usage(format!(
                    "invalid value `{other}` for `train.policy`: expected size, quality, or prefer:<signal>"
                )))
            }
        },
    };
    Ok(TrainingConfig {
        lr: run.parse_or("train.lr", d.lr)?,
        max_iterations: run.parse_or("train.max_iterations", d.max_iterations)?,
        patience: run.parse_or("train.patience", d.patience)?,
        validation_fraction: run.parse_or("train.validation_fraction", d.validation_fraction)?,
        merge_threshold: run.parse_or("train.merge_threshold", d.merge_threshold)?,
        min_direct_overlap: run.parse_or("train.min_direct_overlap", d.min_direct_overlap)?,
        loss: loss_config(run, seed)?,
        estimator: estimator_config(run)?,
        policy,
        seed,
    })
}

pub(crate) fn walk_config(run: &RunConfig) -> CliResult<WalkConfig> {
    let d = WalkConfig::default();
    Ok(WalkConfig {
        damping: run.parse_or("walk.damping", d.damping)?,
        tolerance: run.parse_or("walk.tolerance", d.tolerance)?,
        max_iterations: run.parse_or("walk.max_iterations", d.max_iterations)?,
        har_alpha: run.parse_or("walk.har_alpha", d.har_alpha)?,
        har_beta: run.parse_or("walk.har_beta", d.har_beta)?,
        har_gamma: run.parse_or("walk.har_gamma", d.har_gamma)?,
        har_iterations: run.parse_or("walk.har_iterations", d.har_iterations)?,
    })
}

/// Ranking cut points such as `10,100`.
pub(crate) fn ks_list(run: &RunConfig, key: &str) -> CliResult<Vec<usize>> {
    match run.list(key) {
        None => Ok(vec![10, 100]),
        Some(items) => {
            let mut ks = Vec::with_capacity(items.len());
            for item in items {
                let k = item
                    .parse::<usize>()
                    .map_err(|e| usage(format!("invalid value `{item}` for `{key}`: {e}")))?;
                ks.push(k);
            }
            if ks.is_empty() {
                return Err(usage(format!("`{key}` needs at least one cut point")));
            }
            Ok(ks)
        }
    }
}
