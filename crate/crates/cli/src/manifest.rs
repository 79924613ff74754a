//! Run manifests and atomic file output.
//!
//! Every command that writes files drops a `manifest.toml` beside them
//! recording what produced the output set: the subcommand, the effective
//! configuration after preset/config-file/flag layering, the seed when
//! randomness is involved, input paths as given on the command line, output
//! paths relative to the manifest, a completion timestamp, and the engine
//! version. Reissuing the recorded command on the recorded inputs reproduces
//! every output byte for byte; only the timestamp line differs.

use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Provenance record written alongside every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    pub engine_version: String,
    /// RFC 3339 completion time; the only field that varies across reruns.
    pub timestamp: String,
    /// Seed every random choice flowed from; absent for deterministic
    /// commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Input paths exactly as given on the command line.
    pub inputs: Vec<String>,
    /// Output files relative to this manifest's directory.
    pub outputs: Vec<String>,
    /// Effective configuration snapshot after all overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<toml::Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: None,
        }
    }

    /// Snapshots any serializable configuration into the manifest.
    pub fn with_config<T: Serialize>(mut self, cfg: &T) -> Result<Self> {
        self.config =
            Some(toml::Value::try_from(cfg).context("serializing the effective configuration")?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing the run manifest")?;
        write_atomic(path, text.as_bytes())
    }
}

/// Writes through a temporary file in the destination directory and renames
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Converts a path to the string form stored in manifests.
pub fn path_str(path: &Path) -> String {
    path.display().to_string()
}
