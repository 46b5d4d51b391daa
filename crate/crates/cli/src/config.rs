use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use supergbd::pipeline::PipelineConfig;
use supergbd::synthgen::SceneSpec;
use supergbd::tinynet::TrainConfig;

pub const SEED_ENV: &str = "SUPERGBD_SEED";

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(supergbd::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "invalid arguments: {msg}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<supergbd::Error> for CliError {
    fn from(e: supergbd::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Validation errors of user-supplied settings are usage errors.
pub fn check(r: supergbd::Result<()>) -> CliResult<()> {
    r.map_err(|e| usage(e.to_string()))
}

/// Settings file layered under the command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scene: SceneSpec,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    /// Flag, then config file, then `SUPERGBD_SEED`, then 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}

pub fn existing_dir(path: &Path, what: &str) -> CliResult<PathBuf> {
    if path.is_dir() {
        Ok(path.to_path_buf())
    } else {
        Err(usage(format!("{what} directory {} does not exist", path.display())))
    }
}

pub fn existing_file(path: &Path, what: &str) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path.to_path_buf())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// `P/N` as the positive share `P / (P + N)`.
pub fn parse_pn_ratio(s: &str) -> Result<f64, String> {
    let (p, n) = s.split_once('/').ok_or_else(|| format!("expected P/N, got `{s}`"))?;
    let p: f64 = p.trim().parse().map_err(|_| format!("bad positive share in `{s}`"))?;
    let n: f64 = n.trim().parse().map_err(|_| format!("bad negative share in `{s}`"))?;
    if !(p > 0.0 && n > 0.0 && p.is_finite() && n.is_finite()) {
        return Err(format!("both shares of `{s}` must be positive"));
    }
    Ok(p / (p + n))
}
