//! CSV and JSON emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::RunError;

/// A CSV table: `#` preamble lines, a header row, then records.
#[derive(Debug, Clone)]
pub struct Table {
    pub preamble: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { preamble: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.preamble.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Output directory; every file in it has exactly one writer.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, RunError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| RunError::io("create output directory", &root, e))?;
        Ok(OutputDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<PathBuf, RunError> {
        let path = self.root.join(name);
        let stage = format!("write {name}");
        let io = |e: std::io::Error| RunError::io(&stage, &path, e);
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        for line in &table.preamble {
            writeln!(w, "# {line}").map_err(io)?;
        }
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let wrap = |e: csv::Error| RunError::io(&stage, &path, e.into());
        csv.write_record(&table.header).map_err(wrap)?;
        for r in &table.rows {
            csv.write_record(r).map_err(wrap)?;
        }
        csv.flush().map_err(io)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, RunError> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| RunError::io(&format!("write {name}"), &path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }
}
