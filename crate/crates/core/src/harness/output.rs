//! Run directories: every file goes through one collector, which removes what it
//! wrote unless the run is committed with a manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::{Error, Result};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "MINNAERT_OUTPUT_ROOT";

pub const MANIFEST_NAME: &str = "manifest.toml";

/// Resolves `dir` against `$MINNAERT_OUTPUT_ROOT` when it is relative.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub files: Vec<String>,
    pub runtime_s: f64,
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    /// Writes `name` through `body`; the file is tracked even if `body` fails.
    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
        let path = self.root.join(name);
        let file = File::create(&path)?;
        self.written.push(path.clone());
        let mut out = BufWriter::new(file);
        body(&mut out)?;
        out.flush()?;
        Ok(path)
    }

    /// Writes the manifest and keeps the files.
    pub fn commit(
        mut self,
        command: &str,
        config: &ExperimentConfig,
        runtime_s: f64,
        notes: Vec<String>,
    ) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: self.files(),
            runtime_s,
            notes,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Numerical(format!("manifest: {e}")))?;
        let path = self.write(MANIFEST_NAME, |w| Ok(w.write_all(text.as_bytes())?))?;
        self.committed = true;
        Ok(path)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}
