//! Flat records and their table, CSV and JSON-lines renderings.
//!
//! Record fields keep insertion order. Numbers are written with 15
//! significant digits so reports diff cleanly and reparse to the same
//! values; non-finite numbers become empty CSV cells and JSON `null`.

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    #[value(alias = "delimiter-separated")]
    Csv,
    #[value(alias = "structured-records")]
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Table => "txt",
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(pub Vec<(String, Value)>);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.0.push((key.into(), value.into()));
        self
    }
}

/// `{:.14e}`: 15 significant digits, exact enough to diff and reparse.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        String::new()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Num(x) => fmt_num(*x),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => s.clone(),
        Value::Null => String::new(),
    }
}

fn table_cell(v: &Value) -> String {
    match v {
        Value::Num(x) if !x.is_finite() => "-".into(),
        Value::Num(x) if *x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e7) => format!("{x:.6e}"),
        Value::Num(x) => format!("{x:.6}"),
        Value::Null => "-".into(),
        other => cell(other),
    }
}

fn json_value(v: &Value) -> String {
    match v {
        Value::Num(x) if x.is_finite() => fmt_num(*x),
        Value::Num(_) | Value::Null => "null".into(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => serde_json::Value::String(s.clone()).to_string(),
    }
}

/// Union of keys in first-seen order.
fn columns(records: &[Record]) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for r in records {
        for (k, _) in &r.0 {
            if !cols.contains(k) {
                cols.push(k.clone());
            }
        }
    }
    cols
}

fn lookup<'a>(r: &'a Record, key: &str) -> Option<&'a Value> {
    r.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
}

pub fn render(records: &[Record], format: Format) -> CliResult<String> {
    match format {
        Format::Jsonl => {
            let mut out = String::new();
            for r in records {
                let fields: Vec<String> =
                    r.0.iter()
                        .map(|(k, v)| format!("{}:{}", serde_json::Value::String(k.clone()), json_value(v)))
                        .collect();
                out.push('{');
                out.push_str(&fields.join(","));
                out.push_str("}\n");
            }
            Ok(out)
        }
        Format::Csv => {
            let cols = columns(records);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&cols).map_err(|e| CliError::Runtime(e.to_string()))?;
            for r in records {
                let row: Vec<String> = cols.iter().map(|c| lookup(r, c).map_or(String::new(), cell)).collect();
                w.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
        }
        Format::Table => {
            let cols = columns(records);
            let rows: Vec<Vec<String>> = records
                .iter()
                .map(|r| cols.iter().map(|c| lookup(r, c).map_or("-".into(), table_cell)).collect())
                .collect();
            let widths: Vec<usize> = (0..cols.len())
                .map(|k| rows.iter().map(|r| r[k].chars().count()).chain([cols[k].chars().count()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[String]| {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            let mut out = line(&cols);
            for r in &rows {
                out.push_str(&line(r));
            }
            Ok(out)
        }
    }
}

/// Files produced by a command; nothing touches the disk until `commit`.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_records(&mut self, stem: &str, records: &[Record], format: Format) -> CliResult<()> {
        let text = render(records, format)?;
        self.add(format!("{stem}.{}", format.extension()), text);
        Ok(())
    }

    pub fn commit(&self, dir: &Path) -> CliResult<()> {
        for (name, bytes) in &self.files {
            write_atomic(dir, name, bytes)?;
        }
        Ok(())
    }
}

/// Writes `dir/name` through a temporary sibling and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.join(name).display()));
    fs::create_dir_all(dir).map_err(io)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, dir.join(name)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        let mut a = Record::new();
        a.push("slot", 0usize).push("profit", 1.0 / 3.0).push("status", "optimal");
        let mut b = Record::new();
        b.push("slot", 1usize).push("profit", f64::NAN).push("note", "a, \"b\"");
        vec![a, b]
    }

    #[test]
    fn numbers_keep_fifteen_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "3.33333333333333e-1");
        let back: f64 = fmt_num(123456.789012345).parse().unwrap();
        assert!((back - 123456.789012345).abs() <= 1e-14 * 123456.8);
        assert_eq!(fmt_num(f64::INFINITY), "");
    }

    #[test]
    fn jsonl_lines_parse_back() {
        let text = render(&sample(), Format::Jsonl).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["status"], "optimal");
        assert!((lines[0]["profit"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(lines[1]["profit"].is_null());
        assert_eq!(lines[1]["note"], "a, \"b\"");
    }

    #[test]
    fn csv_uses_the_union_of_columns() {
        let text = render(&sample(), Format::Csv).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["slot", "profit", "status", "note"]);
        let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(&rows[1][1], "");
        assert_eq!(&rows[1][3], "a, \"b\"");
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "x.txt", b"hi").unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, ["x.txt"]);
    }
}
