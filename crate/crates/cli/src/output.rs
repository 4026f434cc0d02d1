use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use fractal_spectra::spectrum::fmt_g12;

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub fractal_spectra: &'static str,
    pub cli: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub versions: Versions,
    pub threads: usize,
    pub timings: Vec<Timing>,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The single writer of a run: every file goes through here so the manifest
/// cannot miss one.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        let entry = OutputFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        };
        match self.files.iter_mut().find(|f| f.path == name) {
            Some(old) => *old = entry,
            None => self.files.push(entry),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    /// Writes the manifest itself; it lists everything written before it.
    pub fn finish(self, command: &str, config: Value, timings: Vec<Timing>) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            versions: Versions {
                fractal_spectra: env!("CARGO_PKG_VERSION"),
                cli: env!("CARGO_PKG_VERSION"),
            },
            threads: rayon::current_num_threads(),
            timings,
            outputs: self.files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_g12(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// RFC-4180 CSV with LF line endings and 12-digit floats.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
