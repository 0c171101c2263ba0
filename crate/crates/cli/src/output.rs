//! Report rendering and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Format;
use crate::error::{CliError, CliResult};

/// Header plus string rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// A finished command: the deterministic report in both formats, whether
/// every check held, and wall-clock metadata kept out of the report.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: String,
    pub json: String,
    pub table: Table,
    pub passed: bool,
    pub summary: String,
    pub timings: Vec<Timing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
    #[serde(rename = "limitSeconds", skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

impl Outcome {
    pub fn new<T: Serialize>(command: &str, report: &T, table: Table, passed: bool, summary: String) -> Self {
        let mut json = serde_json::to_string_pretty(report).expect("reports serialize");
        json.push('\n');
        Outcome { command: command.to_string(), json, table, passed, summary, timings: Vec::new() }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json.clone(),
            Format::Csv => self.table.to_csv(),
        }
    }
}

#[derive(Serialize)]
pub struct Metadata<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub workers: usize,
    #[serde(rename = "elapsedSeconds")]
    pub elapsed_seconds: f64,
    #[serde(rename = "unixTime")]
    pub unix_time: u64,
    pub timings: &'a [Timing],
}

/// `<out>.meta.json` next to the report.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let err = |source| CliError::Write { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(contents.as_bytes()).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Shortest round-trip text of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_commas() {
        let mut t = Table::new(&["cyl", "mass"]);
        t.push(vec!["+:0,1".into(), num(0.5)]);
        assert_eq!(t.to_csv(), "cyl,mass\n\"+:0,1\",0.5\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(meta_path(&p), dir.path().join("r.json.meta.json"));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
