//! Command-line front end for knowledge-graph importance inference.
//!
//! Every subcommand is driven by the same flat `key = value` configuration
//! (see [`config`]); outputs land in the `output` directory together with a
//! JSON report echoing the effective configuration and its digest, so any
//! run can be reproduced from its artifacts alone.

mod commands;
mod config;
mod dataset;

use std::process;

use clap::{Args, Parser, Subcommand};

use config::{failed, usage, CliResult, RunConfig};

const CONFIG_HELP: &str = "\
Subcommands read a flat `key = value` config file (--config PATH) and accept
`--key value` overrides, for example:

    kgrank train --config run.cfg --seed 42 --single-signal watchers

Common keys: triples, metadata, features, signal.<name>, output, seed,
threads. `seed` and `output` are always required. Keys may be written with
their namespace (--train.lr) or bare when unambiguous for the command
(--lr). See `kgrank <command> --help` for the command's own keys.";

#[derive(Parser)]
#[command(
    name = "kgrank",
    version,
    about = "Infer latent node importance in a knowledge graph from partially observed signals",
    after_help = CONFIG_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset for structural and value problems.
    #[command(after_help = "Exits 0 only when no violation is found. \
Keys: triples, metadata, features, signal.<name>, output, seed.")]
    Validate(CommonArgs),

    /// Cluster signals, train estimators, and write importance scores.
    #[command(after_help = "Writes z.tsv (scores of the primary cluster), \
cluster-<i>.json checkpoints, and clustering.json.
Keys: train.{lr, max_iterations, patience, validation_fraction, \
merge_threshold, min_direct_overlap, policy, signals, single_signal, log, \
log_skip}, loss.{lambda, nu, edge_sample_fraction}, estimator.{layers, \
heads, pred_dim, hidden_dim, leaky_slope}.")]
    Train(CommonArgs),

    /// Score an estimate file against observed signals.
    #[command(after_help = "Keys: eval.{scores, ks, closed_world, scope, \
clusters, signals}. `eval.scores` is a z.tsv-style file; `eval.clusters` \
is a clustering.json used to tag signals ID or OOD.")]
    Eval(CommonArgs),

    /// Score entities with a random-walk reference algorithm.
    #[command(after_help = "Writes baseline-<algo>.tsv. `ppr` and `har` \
restart from `baseline.signal`. Keys: baseline.signal, walk.{damping, \
tolerance, max_iterations, har_alpha, har_beta, har_gamma, har_iterations}.")]
    Baseline {
        /// Walk algorithm.
        #[arg(value_parser = ["pr", "ppr", "har"])]
        algo: String,
        #[command(flatten)]
        args: CommonArgs,
    },

    /// Predict one signal from the others by cross-validated regression.
    #[command(after_help = "Keys: predict.{target, folds, lambda, lr, \
iterations, augment}. `predict.augment = pr,ppr` adds walk scores as \
feature columns.")]
    Predict(CommonArgs),

    /// Train on observations before a cutoff date, score on the rest.
    #[command(after_help = "Keys: forecast.{signal, cutoff, ks} plus the \
train/loss/estimator keys. `forecast.cutoff` is a YYYY-MM-DD date matched \
against entity timestamps.")]
    Forecast(CommonArgs),

    /// Generate a synthetic benchmark dataset with known ground truth.
    #[command(after_help = "Writes triples.tsv, metadata.tsv, features.tsv, \
latent.tsv, signal-<name>.tsv, and a synth.json manifest with per-file \
digests. Keys: synth.{nodes, predicates, edges_per_node, latent_mu, \
latent_sigma, feature_dim, feature_noise, transforms, noise, \
observation_fraction, scope, rebels, entity_types, with_timestamps}.")]
    Synth(CommonArgs),

    /// Compare analytic gradients with central finite differences.
    #[command(after_help = "Exits 0 only when the worst relative error is \
below `gradcheck.rel_tolerance` (default 1e-4). Keys: gradcheck.{step, \
max_entries, kink_tolerance, rel_tolerance} plus loss/estimator keys.")]
    Gradcheck(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// `--key value` pairs; `--config PATH` loads a config file first and
    /// the remaining pairs override its entries.
    #[arg(
        value_name = "--KEY VALUE",
        allow_hyphen_values = true,
        trailing_var_arg = true,
        num_args = 0..
    )]
    overrides: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            process::exit(err.exit_code());
        }
    }
}

fn dispatch(command: &Command) -> CliResult<i32> {
    let (name, tokens): (&'static str, &[String]) = match command {
        Command::Validate(args) => ("validate", &args.overrides),
        Command::Train(args) => ("train", &args.overrides),
        Command::Eval(args) => ("eval", &args.overrides),
        Command::Baseline { args, .. } => ("baseline", &args.overrides),
        Command::Predict(args) => ("predict", &args.overrides),
        Command::Forecast(args) => ("forecast", &args.overrides),
        Command::Synth(args) => ("synth", &args.overrides),
        Command::Gradcheck(args) => ("gradcheck", &args.overrides),
    };
    let run = RunConfig::from_args(name, tokens)?;

    if let Some(threads) = run.parse::<usize>("threads")? {
        if threads == 0 {
            return Err(usage("`threads` must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| failed(format!("cannot size the worker pool: {e}")))?;
    }

    match command {
        Command::Validate(_) => commands::validate::exec(&run),
        Command::Train(_) => commands::train::exec(&run),
        Command::Eval(_) => commands::eval::exec(&run),
        Command::Baseline { algo, .. } => commands::baseline::exec(&run, algo),
        Command::Predict(_) => commands::predict::exec(&run),
        Command::Forecast(_) => commands::forecast::exec(&run),
        Command::Synth(_) => commands::synth::exec(&run),
        Command::Gradcheck(_) => commands::gradcheck::exec(&run),
    }
}
