use std::path::{Path, PathBuf};

use crate::failure::Failure;
use crate::manifest::{sha256_hex, FileDigest, Invocation, RunManifest, MANIFEST_FILE};

/// One output file, held in memory until the run has finished.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &'static str, bytes: Vec<u8>) -> Self {
        Self { name, bytes }
    }

    pub fn json<T: serde::Serialize>(name: &'static str, value: &T) -> Result<Self, Failure> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Self::new(name, bytes))
    }
}

/// Writes the artifacts and the manifest into `out`.
pub fn write_run(
    out: &Path,
    invocation: Invocation,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    artifacts: &[Artifact],
    started_at: String,
) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = out.join(a.name);
        std::fs::write(&path, &a.bytes).map_err(|e| Failure::io(&path, e))?;
        outputs.push(FileDigest {
            path: PathBuf::from(a.name),
            sha256: sha256_hex(&a.bytes),
        });
    }
    let inputs = inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?;
    let manifest = RunManifest {
        invocation,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        outputs,
        started_at,
        finished_at: now(),
    };
    let a = Artifact::json(MANIFEST_FILE, &manifest)?;
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, &a.bytes).map_err(|e| Failure::io(&path, e))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Failure::input(e.to_string()))
}
