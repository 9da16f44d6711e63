use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of one run, written to `<primary output>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    /// `(path, sha256)` of every input file.
    pub inputs: Vec<(PathBuf, String)>,
    pub seed: Option<u64>,
    pub artifacts: Vec<PathBuf>,
    pub duration_secs: f64,
}

pub(crate) fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub(crate) fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub(crate) struct Recorder {
    command: &'static str,
    argv: Vec<String>,
    start: Instant,
    inputs: Vec<(PathBuf, String)>,
}

impl Recorder {
    pub(crate) fn start(command: &'static str, argv: &[String]) -> Self {
        Self {
            command,
            argv: argv.to_vec(),
            start: Instant::now(),
            inputs: Vec::new(),
        }
    }

    /// Digests `path` before it is read, so the manifest describes the
    /// bytes actually consumed.
    pub(crate) fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    pub(crate) fn finish(
        self,
        config: serde_json::Value,
        seed: Option<u64>,
        artifacts: Vec<PathBuf>,
    ) -> Result<RunManifest> {
        let primary = artifacts
            .first()
            .cloned()
            .ok_or_else(|| Error::InvalidConfig("run produced no artifact".into()))?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            config,
            inputs: self.inputs,
            seed,
            artifacts,
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        let path = manifest_path(&primary);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(manifest)
    }
}
