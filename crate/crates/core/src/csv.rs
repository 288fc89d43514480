//! Tabular output in a fixed dialect: comma separated, `.` decimal point,
//! 17 significant digits, header row, LF line endings. Files are written
//! to a temporary sibling and renamed into place.

use std::io::{self, Write};
use std::path::Path;

/// `{:.16e}` gives 17 significant digits and round-trips every `f64`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // Normalize -0.0 so sign noise never shows up in diffs.
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn extend(&mut self, other: Table) {
        assert_eq!(self.header, other.header, "tables with different headers");
        self.rows.extend(other.rows);
    }

    pub fn render(&self) -> String {
        let mut w = ::csv::WriterBuilder::new().terminator(::csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        for line in std::iter::once(&self.header).chain(&self.rows) {
            w.write_record(line).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("ASCII output")
    }

    /// Writes to `path` via a temporary file in the same directory.
    pub fn write_atomic(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => d,
        None => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
