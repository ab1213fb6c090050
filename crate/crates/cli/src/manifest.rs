use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use vecagree_core::digest::sha256_hex;

/// Relative output paths are resolved under this directory when it is set.
pub const OUT_DIR_ENV: &str = "VECAGREE_OUT_DIR";

pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record for one command. Everything except the timestamps
/// is a function of the parameters.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// SHA-256 of the canonical JSON result.
    pub result_digest: String,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn start(command: &str, params: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            tool: "vecagree",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            params,
            seeds,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            result_digest: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, result: &impl Serialize) {
        let json = serde_json::to_vec(result).expect("results serialize");
        self.result_digest = sha256_hex(&json);
        self.finished_unix_ms = now_ms();
    }

    pub fn record_output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs.push(OutputDigest { path: path.display().to_string(), sha256: sha256_hex(bytes) });
    }
}

/// `<path>.manifest.json`
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
