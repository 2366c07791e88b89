//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.json";
const INCOMPLETE: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub base_seed: u64,
    pub tool_version: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

/// Canonical JSON: object keys sorted, no whitespace.
pub fn canonical_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    // serde_json::Value keeps object keys in sorted order
    let value = serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn config_hash<T: Serialize>(v: &T) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(canonical_json(v)?.as_bytes())))
}

/// An output directory that stays marked incomplete until `finish`.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    manifest: String,
    marker: String,
}

impl Outputs {
    pub fn create(dir: &Path, command: &str) -> Result<Self, CliError> {
        Self::with_names(dir, command, RUN_MANIFEST.into(), INCOMPLETE.into())
    }

    /// Outputs centred on one file; the manifest and marker sit beside it.
    pub fn for_file(path: &Path, command: &str) -> Result<(Self, String), CliError> {
        let name = path
            .file_name()
            .ok_or_else(|| CliError::Validation(format!("--out {} is not a file path", path.display())))?
            .to_string_lossy()
            .into_owned();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let o = Self::with_names(&dir, command, format!("{name}.manifest.json"), format!("{name}.incomplete"))?;
        Ok((o, name))
    }

    fn with_names(dir: &Path, command: &str, manifest: String, marker: String) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mp = dir.join(&marker);
        fs::write(&mp, format!("{command} did not finish\n")).map_err(|e| CliError::io(&mp, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            manifest,
            marker,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Record a file written by someone else; `path` must lie inside the directory.
    pub fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.files.push(rel.to_string_lossy().replace('\\', "/"));
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.record(&p.clone());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// CSV with full round-trip precision for every number.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        self.write_text(name, &csv_text(header, rows))
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, base_seed: u64) -> Result<RunManifest, CliError> {
        let mut outputs = std::mem::take(&mut self.files);
        outputs.sort();
        outputs.dedup();
        let m = RunManifest {
            command: command.to_string(),
            config_hash: config_hash(config)?,
            base_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        };
        let name = self.manifest.clone();
        self.write_json(&name, &m)?;
        let marker = self.dir.join(&self.marker);
        fs::remove_file(&marker).map_err(|e| CliError::io(&marker, e))?;
        Ok(m)
    }
}

pub fn csv_text(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
