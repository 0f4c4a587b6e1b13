//! Flat `key = value` run configuration shared by every subcommand.
//!
//! A run is described by a config file, command-line `--key value` pairs, or
//! both; the pairs override file entries. Keys are dotted (`loss.lambda`,
//! `signal.watchers`); on the command line the dots may be dropped for keys
//! that are unambiguous for the invoked subcommand, and hyphens are accepted
//! in place of underscores (`--single-signal` means `train.single_signal`).
//! The full effective map is echoed, with a digest, into every report so a
//! run can be reproduced from any of its outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Failure surface of the binary: invocation mistakes exit with 2, data and
/// computation failures with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<kgrank_core::Error> for CliError {
    fn from(err: kgrank_core::Error) -> Self {
        match err {
            // naming a signal that does not exist is an invocation mistake
            kgrank_core::Error::UnknownSignal(_) => CliError::Usage(err.to_string()),
            _ => CliError::Failed(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn failed(msg: impl Into<String>) -> CliError {
    CliError::Failed(msg.into())
}

/// Keys that live outside any namespace.
const GLOBAL_KEYS: &[&str] = &["triples", "metadata", "features", "output", "seed", "threads"];

/// Every recognized dotted key, grouped by namespace. `signal.<name>` is the
/// one open-ended family and is handled separately.
const NAMESPACES: &[(&str, &[&str])] = &[
    (
        "train",
        &[
            "lr",
            "max_iterations",
            "patience",
            "validation_fraction",
            "merge_threshold",
            "min_direct_overlap",
            "policy",
            "signals",
            "single_signal",
            "log",
            "log_skip",
        ],
    ),
    ("loss", &["lambda", "nu", "edge_sample_fraction"]),
    ("estimator", &["layers", "heads", "pred_dim", "hidden_dim", "leaky_slope"]),
    (
        "walk",
        &[
            "damping",
            "tolerance",
            "max_iterations",
            "har_alpha",
            "har_beta",
            "har_gamma",
            "har_iterations",
        ],
    ),
    ("eval", &["scores", "ks", "closed_world", "scope", "clusters", "signals"]),
    ("baseline", &["signal"]),
    ("predict", &["target", "folds", "lambda", "lr", "iterations", "augment"]),
    ("forecast", &["signal", "cutoff", "ks"]),
    (
        "synth",
        &[
            "nodes",
            "predicates",
            "edges_per_node",
            "latent_mu",
            "latent_sigma",
            "feature_dim",
            "feature_noise",
            "transforms",
            "noise",
            "observation_fraction",
            "scope",
            "rebels",
            "entity_types",
            "with_timestamps",
        ],
    ),
    ("gradcheck", &["step", "max_entries", "kink_tolerance", "rel_tolerance"]),
];

/// Namespaces searched, in order, when a command-line key carries no dot.
/// The first namespace is the command's own; the rest hold the module
/// configs the command forwards.
fn search_namespaces(command: &str) -> &'static [&'static str] {
    match command {
        "train" => &["train", "loss", "estimator"],
        "eval" => &["eval"],
        "baseline" => &["baseline", "walk"],
        "predict" => &["predict", "walk"],
        "forecast" => &["forecast", "train", "loss", "estimator"],
        "synth" => &["synth"],
        "gradcheck" => &["gradcheck", "loss", "estimator"],
        _ => &[],
    }
}

/// Hyphens are written as underscores internally; signal names are user data
/// and pass through untouched.
fn normalize_key(raw: &str) -> String {
    match raw.strip_prefix("signal.") {
        Some(name) => format!("signal.{name}"),
        None => raw.replace('-', "_"),
    }
}

fn known_key(key: &str) -> bool {
    if let Some(name) = key.strip_prefix("signal.") {
        return !name.is_empty();
    }
    match key.split_once('.') {
        Some((ns, field)) => NAMESPACES
            .iter()
            .any(|(name, fields)| *name == ns && fields.contains(&field)),
        None => GLOBAL_KEYS.contains(&key),
    }
}

fn resolve_key(command: &str, raw: &str) -> CliResult<String> {
    let key = normalize_key(raw);
    if key.contains('.') {
        if known_key(&key) {
            return Ok(key);
        }
        return Err(usage(format!("unknown configuration key `--{raw}`")));
    }
    if GLOBAL_KEYS.contains(&key.as_str()) {
        return Ok(key);
    }
    for ns in search_namespaces(command) {
        let (_, fields) = NAMESPACES
            .iter()
            .find(|(name, _)| name == ns)
            .expect("namespace table covers every searched namespace");
        if fields.contains(&key.as_str()) {
            return Ok(format!("{ns}.{key}"));
        }
    }
    Err(usage(format!("unknown configuration key `--{raw}` for `{command}`")))
}

/// Parses a flat config file: one `key = value` per line, `#` comments and
/// blank lines ignored, later duplicates winning.
fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| failed(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}:{}: expected `key = value`", path.display(), lineno + 1))
        })?;
        let key = normalize_key(key.trim());
        if key == "config" {
            return Err(usage(format!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                lineno + 1
            )));
        }
        if !known_key(&key) {
            return Err(usage(format!(
                "{}:{}: unknown configuration key `{key}`",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// The effective configuration of one invocation.
#[derive(Debug)]
pub struct RunConfig {
    command: &'static str,
    map: BTreeMap<String, String>,
}

impl RunConfig {
    /// Builds the effective map from the trailing `--key value` tokens of a
    /// subcommand. A `--config PATH` pair, wherever it appears, loads the
    /// file first; every other pair overrides it. `--key=value` also works.
    pub fn from_args(command: &'static str, tokens: &[String]) -> CliResult<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut iter = tokens.iter();
        while let Some(token) = iter.next() {
            let Some(body) = token.strip_prefix("--") else {
                return Err(usage(format!("expected `--key value`, found `{token}`")));
            };
            if let Some((key, value)) = body.split_once('=') {
                pairs.push((key.to_string(), value.to_string()));
            } else {
                let value = iter
                    .next()
                    .ok_or_else(|| usage(format!("--{body} is missing its value")))?;
                pairs.push((body.to_string(), value.clone()));
            }
        }

        let mut config_path: Option<PathBuf> = None;
        let mut overrides = Vec::new();
        for (key, value) in pairs {
            if normalize_key(&key) == "config" {
                if config_path.is_some() {
                    return Err(usage("--config may be given only once"));
                }
                config_path = Some(PathBuf::from(value));
            } else {
                overrides.push((key, value));
            }
        }

        let mut map = match &config_path {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        for (raw, value) in overrides {
            map.insert(resolve_key(command, &raw)?, value);
        }
        Ok(RunConfig { command, map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> CliResult<&str> {
        self.get(key)
            .ok_or_else(|| usage(format!("`{key}` is required for `{}`", self.command)))
    }

    pub fn parse<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| usage(format!("invalid value `{raw}` for `{key}`: {e}"))),
        }
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> CliResult<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    /// Every run must pin its seed; without one the outputs would not be
    /// reproducible from the echoed configuration.
    pub fn seed(&self) -> CliResult<u64> {
        match self.get("seed") {
            None => Err(usage("`seed` is required; set it in the config file or pass --seed")),
            Some(_) => Ok(self.parse("seed")?.expect("seed key is present")),
        }
    }

    /// Comma-separated list value; surrounding whitespace per item ignored.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|raw| {
            raw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    /// All `signal.<name>` entries, alphabetical by name.
    pub fn signal_paths(&self) -> Vec<(String, PathBuf)> {
        self.map
            .iter()
            .filter_map(|(key, value)| {
                key.strip_prefix("signal.")
                    .map(|name| (name.to_string(), PathBuf::from(value)))
            })
            .collect()
    }

    /// Creates the output directory if needed and returns it.
    pub fn output_dir(&self) -> CliResult<PathBuf> {
        let dir = self.require_path("output")?;
        fs::create_dir_all(&dir)
            .map_err(|e| failed(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// Digest of the canonical `key = value` rendering of the effective map.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (key, value) in &self.map {
            hasher.update(key.as_bytes());
            hasher.update(b" = ");
            hasher.update(value.as_bytes());
            hasher.update(b"\n");
        }
        format!("{:x}", hasher.finalize())
    }

    /// Wraps a payload in the provenance header every report carries:
    /// command, seed, the full effective configuration, and its digest.
    pub fn report(&self, payload: serde_json::Value) -> CliResult<serde_json::Value> {
        let mut object = serde_json::Map::new();
        object.insert("command".into(), self.command.into());
        object.insert("seed".into(), self.seed()?.into());
        object.insert(
            "config".into(),
            serde_json::to_value(&self.map).expect("string map serializes"),
        );
        object.insert("config_hash".into(), self.hash().into());
        match payload {
            serde_json::Value::Object(fields) => object.extend(fields),
            other => {
                object.insert("result".into(), other);
            }
        }
        Ok(serde_json::Value::Object(object))
    }
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| failed(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}
