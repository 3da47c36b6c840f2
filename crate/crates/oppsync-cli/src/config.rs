//! Layered run configuration: built-in defaults, then an optional TOML
//! file, then explicit command-line flags, each layer overriding the one
//! below. The file mirrors the flags one to one so a sweep script can pin
//! a whole experiment in a single file and vary just a flag or two.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use oppsync::crdt::PayloadKind;
use oppsync::protocol::ProtocolMode;

/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "OPPSYNC_OUT_DIR";

/// Error classification carried through `anyhow`, mapped to the process
/// exit code in `main`: bad flag combinations exit 1, unreadable or
/// malformed inputs exit 2, violated protocol invariants exit 3.
#[derive(Debug)]
pub enum Fail {
    Usage(String),
    Input(String),
    Invariant(String),
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Usage(msg) | Fail::Input(msg) | Fail::Invariant(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for Fail {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Fail::Usage(msg.into()).into()
}

pub fn input(msg: impl Into<String>) -> anyhow::Error {
    Fail::Input(msg.into()).into()
}

pub fn invariant(msg: impl Into<String>) -> anyhow::Error {
    Fail::Invariant(msg.into()).into()
}

/// Scenario family produced by `gen`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Street-grid walkers with pedestrians churning through.
    Churn,
    /// Static replicas synchronized by buses on fixed lines.
    Bus,
    /// Wandering ground replicas covered by airborne relays.
    Disaster,
    /// Two isolated replicas bridged by one shuttling relay.
    Bridge,
}

/// How change notices reach standing neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationKind {
    Immediate,
    Periodic,
}

/// Batch selection strategy of relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Unique-provider records first, then greedy cover, then pruning.
    Singles,
    /// Plain greedy cover, kept as the comparison baseline.
    PureGreedy,
}

/// Protocol variant, mirroring the library enum for clap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Basic,
    Enhanced,
}

impl From<Mode> for ProtocolMode {
    fn from(m: Mode) -> ProtocolMode {
        match m {
            Mode::Basic => ProtocolMode::Basic,
            Mode::Enhanced => ProtocolMode::Enhanced,
        }
    }
}

/// The flag mirror loadable from `--config`. Every field is optional; an
/// absent field falls through to the built-in default. Unknown keys are
/// rejected so typos do not silently lose a setting.
#[derive(Debug, Default, Clone, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,

    // sim inputs and protocol knobs
    pub trace: Option<PathBuf>,
    pub app: Option<PathBuf>,
    pub relay_ratio: Option<f64>,
    pub mode: Option<Mode>,
    pub propagation: Option<PropagationKind>,
    pub period_ms: Option<u64>,
    pub selection: Option<Selection>,
    pub payload: Option<PayloadKind>,
    pub base_latency_ms: Option<u64>,
    pub latency_per_kb_ms: Option<u64>,
    pub end_at_ms: Option<u64>,
    pub validate: Option<bool>,

    // gen knobs
    pub shape: Option<Shape>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub relays: Option<usize>,
    pub rate: Option<f64>,
    pub duration_s: Option<u64>,
    pub updates: Option<usize>,
    pub update_until_s: Option<u64>,

    // sweep knobs
    pub ratios: Option<Vec<f64>>,
    pub seeds: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| input(format!("config {}: {e}", path.display())))
    }
}

/// Output directory resolution order: flag, config file, environment,
/// current directory.
pub fn resolve_out_dir(flag: Option<PathBuf>, file: &FileConfig) -> PathBuf {
    flag.or_else(|| file.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Flag-beats-file-beats-default resolution for one setting.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] but with no default: the setting must come from a flag or
/// the config file.
pub fn need<T>(flag: Option<T>, file: Option<T>, what: &str) -> anyhow::Result<T> {
    flag.or(file).ok_or_else(|| {
        usage(format!(
            "{what} must be given as a flag or in the config file"
        ))
    })
}
