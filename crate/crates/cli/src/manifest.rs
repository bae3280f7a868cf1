use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log1p_nmf::FitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything needed to repeat and audit a `fit` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command_line: Vec<String>,
    pub input: PathBuf,
    pub input_sha256: Option<String>,
    pub config: FitConfig,
    pub seed: u64,
    pub effective_c: f64,
    /// `converged`, `max_iters` or `error`.
    pub status: String,
    pub error: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub final_exact_loglik: Option<f64>,
    pub final_poisson_loglik: Option<f64>,
    pub empty_factors: Vec<usize>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, input: PathBuf, checksum: String, config: FitConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line,
            input,
            input_sha256: Some(checksum),
            seed: config.seed,
            effective_c: config.c.effective(),
            config,
            status: "running".into(),
            error: None,
            converged: false,
            iterations: 0,
            loglik_trace: Vec::new(),
            final_exact_loglik: None,
            final_poisson_loglik: None,
            empty_factors: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
