//! Per-command run record: content hashes of inputs and outputs, effective
//! parameters, versions and wall time.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jumplab::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA: &str = "jumplab.manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub jumplab: String,
    pub schema: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub versions: Versions,
    pub parameters: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Analyses the data did not support; their outputs are absent.
    pub refusals: Vec<String>,
    /// Varies between runs; everything else is reproducible.
    pub timing: Timing,
}

pub fn digest(path: &Path) -> Result<FileDigest, Error> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Collects what a command read and wrote while it runs.
pub struct Recorder {
    command: String,
    started: Instant,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    pub refusals: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            inputs: Vec::new(),
            outputs: Vec::new(),
            refusals: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    /// Keep a value, or note a refusal and carry on; input errors propagate.
    pub fn attempt<T>(&mut self, what: &str, r: Result<T, Error>) -> Result<Option<T>, Error> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.is_refusal() => {
                self.refusals.push(format!("{what}: {e}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Hash everything and write `manifest.json` into `dir`.
    pub fn finish<P: Serialize>(mut self, dir: &Path, parameters: &P) -> Result<Manifest, Error> {
        self.inputs.sort();
        self.outputs.sort();
        let manifest = Manifest {
            command: self.command,
            versions: Versions {
                jumplab: env!("CARGO_PKG_VERSION").to_string(),
                schema: SCHEMA.to_string(),
            },
            parameters: serde_json::to_value(parameters)?,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            refusals: self.refusals,
            timing: Timing {
                started_at: self.started_at,
                wall_time_s: self.started.elapsed().as_secs_f64(),
            },
        };
        jumplab::io::write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}
