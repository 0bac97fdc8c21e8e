//! Output directory handling and the artifact manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        Ok(OutputDir { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Hashes every file under the directory and writes the manifest.
    /// Lock and temporary files are skipped.
    pub fn finish(&self, command: &str, seed: Option<u64>) -> Result<Manifest> {
        let mut artifacts = Vec::new();
        collect(&self.dir, &self.dir, &mut artifacts)?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            artifacts,
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(manifest)
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<()> {
    let read = fs::read_dir(dir).map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
    for entry in read {
        let path = entry.map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let name = rel.to_string_lossy();
        if name == MANIFEST_FILE || name.ends_with(".lock") || name.ends_with(".tmp") {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        out.push(Artifact {
            path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            bytes: bytes.len() as u64,
            sha256: hex_digest(&bytes),
        });
    }
    Ok(())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
