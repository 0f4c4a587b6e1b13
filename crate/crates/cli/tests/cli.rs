//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn kgrank<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_kgrank"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {path:?}: {e}"))
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// `--key value` arguments pointing at the bundled toy dataset, with a tiny
/// model so training runs take milliseconds.
fn toy_args(out: &Path) -> Vec<String> {
    [
        "--triples",
        &fixture("triples.tsv"),
        "--metadata",
        &fixture("metadata.tsv"),
        "--features",
        &fixture("features.tsv"),
        "--signal.citations",
        &fixture("signal-citations.tsv"),
        "--signal.downloads",
        &fixture("signal-downloads.tsv"),
        "--output",
        &out.display().to_string(),
        "--seed",
        "7",
        "--estimator.layers",
        "1",
        "--estimator.heads",
        "2",
        "--estimator.pred_dim",
        "3",
        "--train.max_iterations",
        "120",
        "--train.patience",
        "12",
        "--train.min_direct_overlap",
        "4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn with_command(command: &[&str], args: &[String]) -> Vec<String> {
    let mut all: Vec<String> = command.iter().map(|s| s.to_string()).collect();
    all.extend(args.iter().cloned());
    all
}

#[test]
fn validate_accepts_a_consistent_dataset() {
    let dir = TempDir::new().unwrap();
    let output = kgrank(with_command(&["validate"], &toy_args(dir.path())));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("validate: ok"));

    let report = read_json(&dir.path().join("validate.json"));
    assert_eq!(report["clean"], serde_json::json!(true));
    assert_eq!(report["entity_count"], serde_json::json!(10));
    assert_eq!(report["seed"], serde_json::json!(7));
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(report["config"]["seed"], serde_json::json!("7"));
}

#[test]
fn validate_lists_dangling_signal_entities() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "ghost\t5\np1\t1\n").unwrap();
    let mut args = toy_args(dir.path());
    args.extend(["--signal.bad".to_string(), bad.display().to_string()]);

    let output = kgrank(with_command(&["validate"], &args));
    assert_eq!(exit_code(&output), 1);
    assert!(stdout(&output).contains("unknown entity"));

    let report = read_json(&dir.path().join("validate.json"));
    assert_eq!(report["clean"], serde_json::json!(false));
    let violations = report["violations"].as_array().unwrap();
    assert!(violations.iter().any(|v| v.as_str().unwrap().contains("ghost")));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    let seed_at = args.iter().position(|a| a == "--seed").unwrap();
    args.drain(seed_at..seed_at + 2);

    let output = kgrank(with_command(&["validate"], &args));
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("seed"));
}

#[test]
fn unknown_keys_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    args.extend(["--frobnicate".to_string(), "1".to_string()]);
    let output = kgrank(with_command(&["validate"], &args));
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("unknown configuration key"));
}

#[test]
fn training_restricted_to_one_signal_yields_one_cluster() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    args.extend(["--single-signal".to_string(), "citations".to_string()]);

    let output = kgrank(with_command(&["train"], &args));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let report = read_json(&dir.path().join("clustering.json"));
    let clusters = report["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 1);
    assert_eq!(clusters[0]["members"], serde_json::json!(["citations"]));
    assert!(dir.path().join("cluster-0.json").exists());

    let z = fs::read_to_string(dir.path().join("z.tsv")).unwrap();
    assert_eq!(z.lines().count(), 10, "one score per entity");
    for line in z.lines() {
        let (_, score) = line.split_once('\t').unwrap();
        assert!(score.parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn unknown_signal_names_are_usage_errors() {
    let dir = TempDir::new().unwrap();

    let mut args = toy_args(dir.path());
    args.extend(["--single-signal".to_string(), "nope".to_string()]);
    let output = kgrank(with_command(&["train"], &args));
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("unknown signal"));

    let mut args = toy_args(dir.path());
    args.extend(["--signal".to_string(), "nope".to_string()]);
    let output = kgrank(with_command(&["baseline", "ppr"], &args));
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("unknown signal"));
}

#[test]
fn training_reruns_reproduce_z_byte_for_byte() {
    let workspace = TempDir::new().unwrap();
    let config = workspace.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "triples = {}\nfeatures = {}\nsignal.citations = {}\nsignal.downloads = {}\n\
             seed = 7\nestimator.layers = 1\nestimator.heads = 2\nestimator.pred_dim = 3\n\
             train.max_iterations = 120\ntrain.patience = 12\ntrain.min_direct_overlap = 4\n",
            fixture("triples.tsv"),
            fixture("features.tsv"),
            fixture("signal-citations.tsv"),
            fixture("signal-downloads.tsv"),
        ),
    )
    .unwrap();
    let config = config.display().to_string();

    let out1 = workspace.path().join("first");
    let out2 = workspace.path().join("second");
    for (out, threads) in [(&out1, "4"), (&out2, "1")] {
        let output = kgrank([
            "train",
            "--config",
            &config,
            "--output",
            &out.display().to_string(),
            "--threads",
            threads,
        ]);
        assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    }

    let first = fs::read(out1.join("z.tsv")).unwrap();
    let second = fs::read(out2.join("z.tsv")).unwrap();
    assert_eq!(first, second, "same config file, same bytes");
}

#[test]
fn commands_leave_input_files_untouched() {
    let dir = TempDir::new().unwrap();
    let inputs: Vec<PathBuf> = [
        "triples.tsv",
        "metadata.tsv",
        "features.tsv",
        "signal-citations.tsv",
        "signal-downloads.tsv",
    ]
    .iter()
    .map(|name| PathBuf::from(fixture(name)))
    .collect();
    let before: Vec<Vec<u8>> = inputs.iter().map(|p| fs::read(p).unwrap()).collect();

    let output = kgrank(with_command(&["train"], &toy_args(dir.path())));
    assert_eq!(exit_code(&output), 0);
    let output = kgrank(with_command(&["baseline", "pr"], &toy_args(dir.path())));
    assert_eq!(exit_code(&output), 0);

    for (path, old) in inputs.iter().zip(&before) {
        assert_eq!(&fs::read(path).unwrap(), old, "{path:?} was modified");
    }
}

#[test]
fn eval_scores_estimates_and_tags_training_domains() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    args.extend(["--single-signal".to_string(), "citations".to_string()]);
    let output = kgrank(with_command(&["train"], &args));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let mut args = toy_args(dir.path());
    args.extend([
        "--scores".to_string(),
        dir.path().join("z.tsv").display().to_string(),
        "--clusters".to_string(),
        dir.path().join("clustering.json").display().to_string(),
    ]);
    let output = kgrank(with_command(&["eval"], &args));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let report = read_json(&dir.path().join("eval.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4, "two signals at k = 10, 100");
    for row in rows {
        let expected = if row["signal"] == "citations" { "ID" } else { "OOD" };
        assert_eq!(row["domain"], serde_json::json!(expected));
        let ndcg = row["ndcg"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&ndcg));
    }

    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.starts_with("signal,k,ndcg,domain,scope,closed_world"));
    assert_eq!(csv.lines().count(), 5, "header plus four rows");
}

#[test]
fn pagerank_is_uniform_on_a_cycle() {
    let dir = TempDir::new().unwrap();
    let triples = dir.path().join("cycle.tsv");
    fs::write(&triples, "c0\tnext\tc1\nc1\tnext\tc2\nc2\tnext\tc3\nc3\tnext\tc4\nc4\tnext\tc0\n")
        .unwrap();

    let output = kgrank([
        "baseline",
        "pr",
        "--triples",
        &triples.display().to_string(),
        "--output",
        &dir.path().display().to_string(),
        "--seed",
        "1",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let scores: Vec<f64> = fs::read_to_string(dir.path().join("baseline-pr.tsv"))
        .unwrap()
        .lines()
        .map(|line| line.split_once('\t').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 5);
    for &score in &scores {
        assert_eq!(score, scores[0], "every node alike on a cycle");
        assert!((score - 0.2).abs() < 1e-12);
    }
}

#[test]
fn gradcheck_passes_on_the_bundled_fixture() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    // bilinear edge term active: pred_dim matches the projected width
    args.extend(["--nu".to_string(), "0.4".to_string()]);

    let output = kgrank(with_command(&["gradcheck"], &args));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("pass"));

    let report = read_json(&dir.path().join("gradcheck.json"));
    assert_eq!(report["pass"], serde_json::json!(true));
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert!(report["checked"].as_u64().unwrap() > 0);
}

#[test]
fn synthetic_datasets_validate_cleanly() {
    let dir = TempDir::new().unwrap();
    let synth_out = dir.path().join("data");
    let output = kgrank([
        "synth",
        "--seed",
        "11",
        "--output",
        &synth_out.display().to_string(),
        "--nodes",
        "50",
        "--transforms",
        "identity,square",
        "--rebels",
        "1",
        "--with-timestamps",
        "true",
        "--entity-types",
        "2",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let manifest = read_json(&synth_out.join("synth.json"));
    let files = manifest["files"].as_object().unwrap();
    assert_eq!(files.len(), 7, "four dataset files plus three signals");
    for digest in files.values() {
        assert_eq!(digest.as_str().unwrap().len(), 64);
    }

    let path = |name: &str| synth_out.join(name).display().to_string();
    let output = kgrank([
        "validate",
        "--seed",
        "11",
        "--output",
        &dir.path().join("check").display().to_string(),
        "--triples",
        &path("triples.tsv"),
        "--metadata",
        &path("metadata.tsv"),
        "--features",
        &path("features.tsv"),
        "--signal.s0",
        &path("signal-s0.tsv"),
        "--signal.s1",
        &path("signal-s1.tsv"),
        "--signal.rebel0",
        &path("signal-rebel0.tsv"),
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
}

#[test]
fn synthetic_checksums_are_stable_across_runs() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path| {
        [
            "synth",
            "--seed",
            "11",
            "--nodes",
            "40",
            "--transforms",
            "identity,exp-scaled",
            "--output",
            &out.display().to_string(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
    };
    let first_out = dir.path().join("first");
    let second_out = dir.path().join("second");
    assert_eq!(exit_code(&kgrank(args(&first_out))), 0);
    assert_eq!(exit_code(&kgrank(args(&second_out))), 0);

    let first = read_json(&first_out.join("synth.json"));
    let second = read_json(&second_out.join("synth.json"));
    assert_eq!(first["files"], second["files"], "same seed, same bytes");

    let third_out = dir.path().join("third");
    let mut reseeded = args(&third_out);
    reseeded[2] = "12".to_string();
    assert_eq!(exit_code(&kgrank(reseeded)), 0);
    let third = read_json(&third_out.join("synth.json"));
    assert_ne!(first["files"], third["files"], "checksums track content");
}

#[test]
fn forecast_trains_before_the_cutoff_and_scores_after() {
    let dir = TempDir::new().unwrap();
    let mut args = toy_args(dir.path());
    args.extend([
        "--signal".to_string(),
        "citations".to_string(),
        "--cutoff".to_string(),
        "2008-01-01".to_string(),
    ]);
    let output = kgrank(with_command(&["forecast"], &args));
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let report = read_json(&dir.path().join("forecast.json"));
    assert_eq!(report["train_observations"], serde_json::json!(3));
    assert_eq!(report["test_observations"], serde_json::json!(3));
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn predict_reports_each_feature_configuration() {
    let dir = TempDir::new().unwrap();
    let synth_out = dir.path().join("data");
    let output = kgrank([
        "synth",
        "--seed",
        "5",
        "--output",
        &synth_out.display().to_string(),
        "--nodes",
        "60",
        "--transforms",
        "identity,square",
        "--observation-fraction",
        "0.8",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let path = |name: &str| synth_out.join(name).display().to_string();
    let output = kgrank([
        "predict",
        "--seed",
        "5",
        "--output",
        &dir.path().display().to_string(),
        "--triples",
        &path("triples.tsv"),
        "--signal.s0",
        &path("signal-s0.tsv"),
        "--signal.s1",
        &path("signal-s1.tsv"),
        "--target",
        "s0",
        "--augment",
        "pr",
        "--folds",
        "3",
    ]);
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));

    let report = read_json(&dir.path().join("predict.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2, "bare features and features+pr");
    assert_eq!(rows[0]["configuration"], serde_json::json!("features"));
    assert_eq!(rows[1]["configuration"], serde_json::json!("features+pr"));

    let csv = fs::read_to_string(dir.path().join("predict.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header plus two rows");
}

#[test]
fn example_config_file_drives_the_pipeline() {
    let dir = TempDir::new().unwrap();
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let output = Command::new(env!("CARGO_BIN_EXE_kgrank"))
        .current_dir(&root)
        .args([
            "validate",
            "--config",
            "crates/cli/fixtures/example.cfg",
            "--output",
            &dir.path().display().to_string(),
        ])
        .output()
        .expect("binary spawns");
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
}

#[test]
fn reports_echo_the_configuration_hash() {
    let dir = TempDir::new().unwrap();
    let output = kgrank(with_command(&["validate"], &toy_args(dir.path())));
    assert_eq!(exit_code(&output), 0);
    let first = read_json(&dir.path().join("validate.json"));

    let output = kgrank(with_command(&["validate"], &toy_args(dir.path())));
    assert_eq!(exit_code(&output), 0);
    let second = read_json(&dir.path().join("validate.json"));
    assert_eq!(first["config_hash"], second["config_hash"]);

    let mut args = toy_args(dir.path());
    let seed_at = args.iter().position(|a| a == "--seed").unwrap();
    args[seed_at + 1] = "8".to_string();
    let output = kgrank(with_command(&["validate"], &args));
    assert_eq!(exit_code(&output), 0);
    let reseeded = read_json(&dir.path().join("validate.json"));
    assert_ne!(first["config_hash"], reseeded["config_hash"]);
}
