//! Output directory handling: every command writes its files under `--out`
//! and finishes with a `manifest.json` listing each produced file and its
//! content hash.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

pub struct OutputDir {
    root: PathBuf,
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest {
    files: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))
            .map_err(crate::CliError::from)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Absolute path for a named output file, registered for the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let path = self.root.join(name);
        self.files.push(path.clone());
        path
    }

    /// Write the manifest over the registered files and return its path.
    pub fn write_manifest(&self) -> CliResult<PathBuf> {
        let mut entries = Vec::with_capacity(self.files.len());
        for path in &self.files {
            let bytes = fs::read(path)
                .with_context(|| format!("cannot hash output {}", path.display()))
                .map_err(crate::CliError::from)?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            let digest = hasher.finalize();
            let mut sha256 = String::with_capacity(64);
            for byte in digest {
                sha256.push_str(&format!("{byte:02x}"));
            }
            let relative = path
                .strip_prefix(&self.root)
                .unwrap_or(path)
                .display()
                .to_string();
            entries.push(ManifestEntry {
                path: relative,
                sha256,
                bytes: bytes.len() as u64,
            });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest_path = self.root.join("manifest.json");
        let json = serde_json::to_string_pretty(&Manifest { files: entries })
            .expect("manifest serializes");
        fs::write(&manifest_path, json.as_bytes())
            .with_context(|| format!("cannot write {}", manifest_path.display()))
            .map_err(crate::CliError::from)?;
        Ok(manifest_path)
    }
}

/// Pretty-printed, key-ordered JSON for machine-readable outputs.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .context("serialization failed")
        .map_err(crate::CliError::from)?;
    fs::write(path, format!("{json}\n"))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(crate::CliError::from)?;
    Ok(())
}
