//! JSON report documents.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Identifiers of the estimator formulas a report's numbers come from.
/// Bump an entry whenever the corresponding formula changes.
pub const FORMULA_VERSIONS: [(&str, &str); 8] = [
    ("xeb_fidelity", "xeb-ls/1: sum((m-u)(e-u)) / sum((e-u)^2)"),
    (
        "f_single",
        "f-single/1: (2^n prod(2+p_i^m) + 3^n - prod(3+p_i^m) - 4^n) / (6^n + 3^n - 2*4^n)",
    ),
    (
        "p_multi_leading",
        "p-multi-leading/1: 1 - c_n sum(e_i), c_n = (3/4) / (1 - 4^-n)",
    ),
    ("refined_gate", "refined-ratio/1: p_int / (1 - c_n sum(e_i))"),
    ("naive_gate", "naive-ratio/1: p_int / (1 - sum(e_i))"),
    ("average_fidelity", "avg-fidelity/1: ((d-1) p + 1) / d"),
    ("irb_survival", "irb-survival/1: (s - 1/d) / (1 - 1/d)"),
    ("error_rate", "error-rate/1: e_i = 1 - p_i"),
];

#[derive(Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    /// SHA-256 of the config file, or of the data files for `fit`.
    pub input_hash: String,
    pub inputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` pins it.
    pub generated_at: u64,
    pub formula_versions: BTreeMap<&'static str, &'static str>,
    pub threads: usize,
}

impl Metadata {
    pub fn new(command: &'static str, seed: u64, inputs: &[&Path]) -> Result<Self> {
        let mut hasher = Sha256::new();
        for path in inputs {
            hasher.update(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?);
        }
        let input_hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        let generated_at = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            input_hash,
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            generated_at,
            formula_versions: FORMULA_VERSIONS.into_iter().collect(),
            threads: rayon::current_num_threads(),
        })
    }
}

#[derive(Serialize)]
pub struct Report<B: Serialize> {
    pub metadata: Metadata,
    pub notes: Vec<String>,
    /// Files written next to the report.
    pub files: Vec<PathBuf>,
    #[serde(flatten)]
    pub body: B,
}

/// Writes `report` as pretty JSON with keys sorted at every level.
pub fn write_report<B: Serialize>(dir: &Path, report: &Report<B>) -> Result<PathBuf> {
    // serde_json's map is ordered by key, so the round trip sorts the keys
    let value = serde_json::to_value(report)?;
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    let path = dir.join("report.json");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
