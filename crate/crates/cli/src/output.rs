//! Output bookkeeping: files written by a command are removed again if it fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    /// Registers `path` for cleanup and makes sure its parent exists.
    pub fn claim(&mut self, path: &Path) -> CliResult<PathBuf> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            self.ensure_dir(parent)?;
        }
        self.files.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn ensure_dir(&mut self, dir: &Path) -> CliResult<()> {
        if dir.is_dir() {
            return Ok(());
        }
        // record each missing ancestor so cleanup removes only what we created
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.dirs.extend(missing);
        Ok(())
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> CliResult<()> {
        let path = self.claim(path)?;
        let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| CliError::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Data(format!("cannot serialise report: {e}")))?;
        text.push('\n');
        self.write_text(path, &text)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            if f.exists() {
                log::debug!("removing partial output {}", f.display());
                let _ = fs::remove_file(f);
            }
        }
        // dirs were recorded deepest first
        for d in &self.dirs {
            let _ = fs::remove_dir(d);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> CliResult<InputRecord> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputRecord {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn hash_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CliResult<Vec<InputRecord>> {
    paths.into_iter().map(hash_file).collect()
}

/// Common header of every JSON report.
#[derive(Debug, Serialize)]
pub struct Provenance<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: C,
    pub inputs: Vec<InputRecord>,
}

impl<C: Serialize> Provenance<C> {
    pub fn new(command: &'static str, config: C, inputs: Vec<InputRecord>) -> Self {
        Self {
            tool: "coalmap",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs,
        }
    }
}
