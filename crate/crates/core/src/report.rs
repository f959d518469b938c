//! Tabular output in CSV or JSON Lines.
//!
//! Floats are written in their shortest round-trip form, so identical runs
//! produce identical bytes and nothing is lost on reparsing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GasketError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Empty,
}

impl Value {
    fn csv_field(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => s.clone(),
            Value::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => (*i).into(),
            Value::Float(x) => serde_json::Number::from_f64(*x)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Bool(b) => (*b).into(),
            Value::Str(s) => s.clone().into(),
            Value::Empty => serde_json::Value::Null,
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<u64> for Value {
    fn from(x: u64) -> Self {
        Value::Int(x as i64)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Bool(x)
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Str(x.to_string())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Str(x)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(x: Option<T>) -> Self {
        x.map_or(Value::Empty, Into::into)
    }
}

/// Run parameters stamped onto every row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub depth: usize,
    pub seed: u64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    rows: Vec<Vec<Value>>,
    provenance: Option<Provenance>,
}

const PROVENANCE_COLUMNS: [&str; 3] = ["depth", "seed", "c"];

impl Table {
    /// A table whose rows carry the `(depth, seed, c)` columns first.
    pub fn new(name: impl Into<String>, columns: &[&str], provenance: Provenance) -> Self {
        Table {
            name: name.into(),
            columns: PROVENANCE_COLUMNS
                .iter()
                .chain(columns)
                .map(|c| c.to_string())
                .collect(),
            rows: Vec::new(),
            provenance: Some(provenance),
        }
    }

    /// A table without provenance columns.
    pub fn bare(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            provenance: None,
        }
    }

    pub fn push(&mut self, values: Vec<Value>) {
        let mut row = Vec::with_capacity(self.columns.len());
        if let Some(p) = self.provenance {
            row.push(Value::from(p.depth));
            row.push(Value::from(p.seed));
            row.push(Value::from(p.c));
        }
        row.extend(values);
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width does not match the columns of table `{}`",
            self.name
        );
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Csv => self.render_csv(),
            OutputFormat::Jsonl => Ok(self.render_jsonl()),
        }
    }

    fn render_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| GasketError::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::csv_field))
                .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| GasketError::Io(std::io::Error::other(e.to_string())))
    }

    fn render_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for row in &self.rows {
            let obj: serde_json::Map<String, serde_json::Value> = self
                .columns
                .iter()
                .cloned()
                .zip(row.iter().map(Value::json))
                .collect();
            out.extend(serde_json::Value::Object(obj).to_string().into_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Write `<dir>/<name>.<ext>`, creating `dir` if needed.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        fs::write(&path, self.render(format)?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(
            "demo",
            &["word", "x"],
            Provenance {
                depth: 2,
                seed: 7,
                c: 0.5,
            },
        );
        t.push(vec!["12".into(), 0.1.into()]);
        t.push(vec!["13".into(), Value::Empty]);
        t
    }

    #[test]
    fn csv_layout() {
        let text = String::from_utf8(sample().render(OutputFormat::Csv).unwrap()).unwrap();
        assert_eq!(text, "depth,seed,c,word,x\n2,7,0.5,12,0.1\n2,7,0.5,13,\n");
    }

    #[test]
    fn jsonl_layout() {
        let text = String::from_utf8(sample().render(OutputFormat::Jsonl).unwrap()).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"depth":2,"seed":7,"c":0.5,"word":"12","x":0.1}"#);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, 41.0 / 225.0] {
            assert_eq!(
                format_float(x).parse::<f64>().unwrap().to_bits(),
                x.to_bits()
            );
        }
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn row_width_is_checked() {
        let mut t = Table::bare("t", &["a"]);
        t.push(vec![1usize.into(), 2usize.into()]);
    }

    #[test]
    fn writes_into_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = sample()
            .write(&dir.path().join("nested"), OutputFormat::Jsonl)
            .unwrap();
        assert!(path.ends_with("demo.jsonl"));
        assert!(path.exists());
    }
}
