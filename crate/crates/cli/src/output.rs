//! Artifacts are assembled in memory and written only once a run has
//! succeeded, so a failed run leaves nothing behind.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A named table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv_bytes(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell))?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }

    fn json_bytes(&self) -> CliResult<Vec<u8>> {
        let records: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        let mut bytes = serde_json::to_vec_pretty(&records)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub results: Value,
    pub tables: Vec<Table>,
    /// Pre-encoded files such as raw fields and PGM images.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(results: impl Serialize) -> CliResult<Self> {
        Ok(Self { results: serde_json::to_value(results)?, tables: Vec::new(), files: Vec::new() })
    }
}

/// `results.json`: version, kind, config echo and results. Keys are sorted
/// and no timestamps are written, so identical inputs give identical bytes.
pub fn results_document(kind: &str, config: &impl Serialize, results: &Value) -> CliResult<Vec<u8>> {
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "kind": kind,
        "config": serde_json::to_value(config)?,
        "results": results,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_all(dir: &Path, results_json: &[u8], artifacts: &Artifacts, format: Format) -> CliResult<Vec<String>> {
    let mut files: Vec<(String, Vec<u8>)> = vec![("results.json".into(), results_json.to_vec())];
    for t in &artifacts.tables {
        match format {
            Format::Csv => files.push((format!("{}.csv", t.name), t.csv_bytes()?)),
            Format::Json => files.push((format!("{}.json", t.name), t.json_bytes()?)),
        }
    }
    files.extend(artifacts.files.iter().cloned());
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        fs::write(dir.join(&name), bytes)?;
        written.push(name);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new("t", &["b", "a"]);
        t.push(vec![json!(1.5), json!("x")]);
        t.push(vec![Value::Null, json!(true)]);
        t
    }

    #[test]
    fn csv_keeps_column_order() {
        let text = String::from_utf8(table().csv_bytes().unwrap()).unwrap();
        assert_eq!(text, "b,a\n1.5,x\n,true\n");
    }

    #[test]
    fn json_records_are_stable() {
        let a = table().json_bytes().unwrap();
        assert_eq!(a, table().json_bytes().unwrap());
        let v: Value = serde_json::from_slice(&a).unwrap();
        assert_eq!(v[0]["b"], json!(1.5));
        assert_eq!(v[1]["a"], json!(true));
    }

    #[test]
    fn writes_only_into_the_requested_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("nested/out");
        let mut art = Artifacts::new(json!({"x": 1})).unwrap();
        art.tables.push(table());
        art.files.push(("blob.raw".into(), vec![1, 2, 3]));
        let doc = results_document("oam", &json!({"seed": 1}), &art.results).unwrap();
        let names = write_all(&dir, &doc, &art, Format::Json).unwrap();
        assert_eq!(names, ["results.json", "t.json", "blob.raw"]);
        let v: Value = serde_json::from_slice(&std::fs::read(dir.join("results.json")).unwrap()).unwrap();
        assert_eq!(v["kind"], "oam");
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    }
}
