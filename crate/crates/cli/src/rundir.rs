use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io, CliError, Result};

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a command's outputs. Holds no
/// timestamps, so deterministic runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub precision: Option<String>,
    pub config: serde_json::Value,
    pub config_digest: Option<String>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed: None,
            deterministic: false,
            precision: None,
            config: serde_json::Value::Null,
            config_digest: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(io(path))?;
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

/// An output directory that records the digest of every file written
/// through it.
pub struct RunDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl RunDir {
    /// Creates `root`, which must be absent or empty.
    pub fn create(root: &Path) -> Result<Self> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(io(root))?;
            if entries.next().is_some() {
                return Err(CliError::Usage(format!("output directory {} is not empty", root.display())));
            }
        }
        std::fs::create_dir_all(root).map_err(io(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        std::fs::write(&path, bytes.as_ref()).map_err(io(&path))?;
        self.record(rel, bytes.as_ref());
        Ok(path)
    }

    /// Lets `produce` write `rel` itself, then records the result.
    pub fn write_with(&mut self, rel: &str, produce: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io(parent))?;
        }
        produce(&path)?;
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        self.record(rel, &bytes);
        Ok(path)
    }

    /// Records a file that something else already wrote under the root.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let path = self.path(rel);
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        self.record(rel, &bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.written.retain(|e| e.path != rel);
        self.written.push(FileEntry {
            path: rel.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    /// Writes `manifest.json` listing every recorded file.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        manifest.outputs = std::mem::take(&mut self.written);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.path("manifest.json");
        std::fs::write(&path, text).map_err(io(&path))?;
        Ok(path)
    }
}
