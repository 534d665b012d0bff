use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ManifestEntry;
use crate::error::{Error, Result};

/// Shortest representation that parses back to the same `f64`, with `.` as
/// decimal separator and exponent notation for very large or small values.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A value that can be written as one CSV field.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format_f64(*self)
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {
        $(impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_cell!(usize, u64, i32, bool, str, String);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

/// Builds a CSV row from heterogeneous values.
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::experiments::output::Cell::cell(&$x)),*]
    };
}
pub(crate) use row;

/// One CSV file before it is written.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }
}

/// A written file with its digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn write(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(OutputFile { path, sha256, rows });
        Ok(())
    }

    /// Writes an RFC-4180 CSV: header row, CRLF record ends, fields quoted
    /// only when needed.
    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&table.header)?;
        for r in &table.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(name, &bytes, table.rows.len())
    }

    /// Writes a pretty-printed JSON sidecar.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes(), 0)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub(super) fn entries(&self) -> Vec<ManifestEntry> {
        self.files
            .iter()
            .map(|f| ManifestEntry {
                file: f.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: f.sha256.clone(),
                rows: f.rows,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_without_locale() {
        for x in [0.1, 1.0, -2.5e-12, 1e300, 123456.789, f64::MIN_POSITIVE] {
            let s = format_f64(x);
            assert!(!s.contains(','));
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_quotes_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new(dir.path());
        let mut t = Table::new(&["name", "x"]);
        t.push(row!["a,b", 0.5]);
        t.push(row!["plain", 2usize]);
        out.csv("t.csv", &t).unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "name,x\r\n\"a,b\",0.5\r\nplain,2\r\n");
        let f = &out.files()[0];
        assert_eq!(f.rows, 2);
        assert_eq!(f.sha256.len(), 64);
    }
}
