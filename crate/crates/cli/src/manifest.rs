//! Run manifests: what was run, on which inputs, and what it produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use archimax::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::io::{sha256_file, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub seed: Option<u64>,
    /// Parsed configuration file, if the command read one.
    pub config: Option<serde_json::Value>,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub wall_seconds: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut s = primary_output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("archimax".to_string(), archimax::VERSION.to_string()),
        ("archimax-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

impl Manifest {
    pub fn write(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary_output);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::domain(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for f in &self.inputs {
            if FileDigest::of(&self.cwd.join(&f.path))?.sha256 != f.sha256 {
                changed.push(f.path.clone());
            }
        }
        Ok(changed)
    }
}
