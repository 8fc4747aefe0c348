//! Config-file merging, run provenance and exit-status mapping.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const OUT_DIR_ENV: &str = "HDMDC_OUT_DIR";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            EXIT_CONFIG => "config",
            EXIT_DATA => "data",
            EXIT_NUMERICAL => "numerical",
            _ => "internal",
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "exit_code": self.code, "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<hdmdc::Error> for CliError {
    fn from(e: hdmdc::Error) -> Self {
        let code = match e.kind() {
            hdmdc::ErrorKind::Config => EXIT_CONFIG,
            hdmdc::ErrorKind::Data => EXIT_DATA,
            hdmdc::ErrorKind::Numerical => EXIT_NUMERICAL,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

pub fn load_config(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn to_json(v: impl Serialize) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::config(e.to_string()))
}

/// Layers top-level config keys, then the `[section]` table, then explicit flags.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&toml::Table>, section: &str) -> CliResult<T> {
    let mut merged = Map::new();
    if let Some(cfg) = config {
        for (k, v) in cfg {
            if !v.is_table() {
                merged.insert(k.clone(), to_json(v)?);
            }
        }
        if let Some(toml::Value::Table(t)) = cfg.get(section) {
            for (k, v) in t {
                merged.insert(k.clone(), to_json(v)?);
            }
        }
    }
    if let Value::Object(cli) = to_json(flags)? {
        for (k, v) in cli {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::config(format!("[{section}] {e}")))
}

/// Output directory: flag or config value, then the environment, then the working directory.
pub fn output_dir(explicit: Option<&Path>, config: Option<&toml::Table>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = config.and_then(|c| c.get("out-dir")).and_then(|v| v.as_str()) {
        return PathBuf::from(p);
    }
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Provenance lines written at the top of every output.
#[derive(Debug, Clone)]
pub struct RunHeader {
    pub command: &'static str,
    pub config_sha256: String,
    pub seeds: Vec<(String, u64)>,
}

impl RunHeader {
    /// Hashes the resolved settings, output path excluded.
    pub fn new<T: Serialize>(command: &'static str, resolved: &T) -> CliResult<Self> {
        let mut value = to_json(resolved)?;
        if let Value::Object(m) = &mut value {
            m.remove("out");
        }
        let canonical = value.to_string();
        Ok(RunHeader { command, config_sha256: hex::encode(Sha256::digest(canonical.as_bytes())), seeds: Vec::new() })
    }

    pub fn with_seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.push((name.to_string(), seed));
        self
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("hdmdc_version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("command".to_string(), self.command.to_string()),
            ("config_sha256".to_string(), self.config_sha256.clone()),
        ];
        out.extend(self.seeds.iter().map(|(k, v)| (k.clone(), v.to_string())));
        out
    }

    /// `key: value` lines without the comment marker.
    pub fn lines(&self) -> Vec<String> {
        self.pairs().into_iter().map(|(k, v)| format!("{k}: {v}")).collect()
    }
}
