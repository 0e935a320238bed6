use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::simulate::SimulationConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Command together with its fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum Invocation {
    Simulate(SimulationConfig),
    Fit(RunConfig),
    Sensitivity(RunConfig),
    Countries(RunConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub invocation: Invocation,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("manifest {}: {e}", path.display())))
    }

    /// Fails when an input file changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<(), Failure> {
        for input in &self.inputs {
            let now = FileDigest::of(&input.path)?;
            if now.sha256 != input.sha256 {
                return Err(Failure::input(format!(
                    "input {} changed since the run (sha256 {} != {})",
                    input.path.display(),
                    now.sha256,
                    input.sha256
                )));
            }
        }
        Ok(())
    }
}
