//! Analytic-gradient verification against central finite differences.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use kgrank_core::estimator::init_params;
use kgrank_core::objective::grad_check;
use kgrank_core::{GradCheckOptions, InputSignal};

use crate::commands::{estimator_config, loss_config};
use crate::config::{usage, write_json, CliResult, RunConfig};
use crate::dataset;

/// Initializes seeded parameters on the given dataset and compares every
/// analytic derivative of the training loss with a central difference
/// quotient. Exits 0 only when the worst relative error stays below
/// `gradcheck.rel_tolerance`.
pub fn exec(run: &RunConfig) -> CliResult<i32> {
    let seed = run.seed()?;
    let out = run.output_dir()?;
    let graph = dataset::load_graph(run)?;
    let (features, _) = dataset::load_features(run, &graph)?;
    let signals = dataset::load_signals(run, &graph)?;
    if signals.is_empty() {
        return Err(usage("gradcheck needs at least one signal.<name> entry"));
    }
    let est = estimator_config(run)?;
    let loss = loss_config(run, seed)?;
    let d = GradCheckOptions::default();
    let opts = GradCheckOptions {
        step: run.parse_or("gradcheck.step", d.step)?,
        max_entries: run.parse_or("gradcheck.max_entries", d.max_entries)?,
        kink_tolerance: run.parse_or("gradcheck.kink_tolerance", d.kink_tolerance)?,
        rel_tolerance: run.parse_or("gradcheck.rel_tolerance", d.rel_tolerance)?,
        seed,
        reg_step: d.reg_step,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = init_params(&est, &graph, features.dim(), &mut rng)?;
    let refs: Vec<&InputSignal> = signals.iter().collect();
    let report = grad_check(&params, &est, &loss, &graph, &features, &refs, &opts)?;
    let pass = report.max_rel_error < opts.rel_tolerance;

    let payload = json!({
        "max_rel_error": report.max_rel_error,
        "checked": report.checked,
        "skipped": report.skipped,
        "tolerance": opts.rel_tolerance,
        "pass": pass,
    });
    write_json(&out.join("gradcheck.json"), &run.report(payload)?)?;
    println!(
        "gradcheck: max relative error {:.3e} over {} entries ({} skipped): {}",
        report.max_rel_error,
        report.checked,
        report.skipped,
        if pass { "pass" } else { "fail" }
    );
    Ok(if pass { 0 } else { 1 })
}
