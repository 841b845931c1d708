//! CSV tables and the run manifest.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64`. Tables are rendered in memory; nothing reaches the output
//! directory until compute has finished.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<bool>> for Cell {
    fn from(v: Option<bool>) -> Self {
        v.map_or(Cell::Empty, Cell::Bool)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// One logical table, written as one CSV file.
#[derive(Clone, Debug)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.to_owned(), header: header.iter().map(|h| (*h).to_owned()).collect(), rows: Vec::new() }
    }

    /// Appends a row; its width must match the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header of {}", self.file);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub status: Status,
    pub config: RunConfig,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub warnings: Vec<String>,
    /// Command-specific headline numbers (fits, fractions, selected seeds).
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }
}

/// Creates `dir`, refuses to clobber a previous run unless `overwrite`, and
/// proves the directory writable before any compute starts.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("output directory {}: {e}", dir.display())))?;
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        if !overwrite {
            return Err(CliError::Usage(format!(
                "{} already holds a run; pass --overwrite to replace it",
                dir.display()
            )));
        }
        if let Ok(old) = Manifest::read(&manifest) {
            for entry in old.outputs {
                let _ = fs::remove_file(dir.join(entry.file));
            }
        }
        fs::remove_file(&manifest).map_err(|e| CliError::io(&manifest, e))?;
    }
    let probe = dir.join(".bjmetro-write-probe");
    fs::write(&probe, b"").map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Writes every table and returns their checksums; on error removes what it wrote.
pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<OutputEntry>, CliError> {
    let mut written: Vec<PathBuf> = Vec::new();
    let mut entries = Vec::new();
    for t in tables {
        let bytes = t.to_csv();
        let path = dir.join(&t.file);
        if let Err(e) = fs::write(&path, &bytes) {
            for p in written.iter().chain([&path]) {
                let _ = fs::remove_file(p);
            }
            return Err(CliError::io(path, e));
        }
        written.push(path);
        entries.push(OutputEntry { file: t.file.clone(), sha256: sha256_hex(&bytes), rows: t.rows.len() });
    }
    Ok(entries)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv() {
        let mut t = Table::new("t.csv", &["x", "flag", "note"]);
        let values = [std::f64::consts::PI, 1e-300, -2.5e17, 0.1 + 0.2];
        for v in values {
            t.push(vec![v.into(), true.into(), Cell::Empty]);
        }
        let text = String::from_utf8(t.to_csv()).unwrap();
        assert!(text.starts_with("x,flag,note\n"));
        assert!(!text.contains('\r'));
        for (line, v) in text.lines().skip(1).zip(values) {
            let parsed: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn checksum_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_are_rejected() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec![1.0.into()]);
    }
}
