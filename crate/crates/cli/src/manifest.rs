//! Run manifest: everything needed to audit or reproduce a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use anchorinv::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the config file bytes, hex encoded.
    pub config_hash: String,
    pub master_seed: u64,
    pub threads: usize,
    pub stage_seeds: BTreeMap<String, u64>,
    pub anchor_locations: Vec<[f64; 2]>,
    pub candidates: usize,
    pub realizations: usize,
    pub k: usize,
    pub ess: f64,
    pub degenerate_count: usize,
    /// (kappa, posterior weight) pairs.
    pub kappa_marginal: Vec<(f64, f64)>,
    #[serde(default)]
    pub dependence: Vec<DependenceEntry>,
    #[serde(default)]
    pub anchor_selection: Option<AnchorSelectionEntry>,
    pub timings_ms: BTreeMap<String, u128>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DependenceEntry {
    pub dataset_a: usize,
    pub dataset_b: usize,
    pub score: f64,
    pub null_quantile_95: f64,
    pub exceeds_null: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorSelectionEntry {
    pub chosen: usize,
    pub stabilized: bool,
    /// (count, rms-to-next) pairs; the last count has no successor.
    pub trace: Vec<(usize, Option<f64>)>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let file = std::fs::File::create(dir.join(MANIFEST_NAME))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let file = std::fs::File::open(&path).map_err(|_| {
            Error::Config(format!(
                "run directory {} has no {MANIFEST_NAME}; run `anchorinv invert` first",
                dir.display()
            ))
        })?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
