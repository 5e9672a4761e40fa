//! Small column tables written as CSV or JSON lines.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(u64),
    Bool(bool),
    Empty,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
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

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Six decimals with trailing zeros trimmed; never `-0`.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" => "0".to_string(),
        _ => s.to_string(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Str(s) => csv_field(s),
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Str(s) => Value::String(s.clone()),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table { name: name.to_string(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}: row width", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Cell::text).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// One object per row, tagged with the table name.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            // built by hand to keep keys in column order
            out.push_str("{\"table\":");
            out.push_str(&Value::String(self.name.clone()).to_string());
            for (c, cell) in self.columns.iter().zip(row) {
                write!(out, ",{}:{}", Value::String((*c).to_string()), cell.json()).expect("string write");
            }
            out.push_str("}\n");
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Jsonl => self.to_jsonl(),
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes each table to `dir/<name>.<ext>`, or all of them to stdout.
pub fn emit(tables: &[Table], format: Format, dir: Option<&Path>) -> Result<()> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            for t in tables {
                write_file(&dir.join(format!("{}.{}", t.name, format.extension())), &t.render(format))?;
            }
        }
        None => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                if format == Format::Csv {
                    if i > 0 {
                        out.push('\n');
                    }
                    writeln!(out, "# {}", t.name).expect("string write");
                }
                out.push_str(&t.render(format));
            }
            print!("{out}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_short_and_stable() {
        assert_eq!(fmt_num(0.4), "0.4");
        assert_eq!(fmt_num(58.0 / 120.0), "0.483333");
        assert_eq!(fmt_num(-1e-9), "0");
        assert_eq!(fmt_num(1.0), "1");
    }

    #[test]
    fn csv_and_jsonl() {
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec!["x,y".into(), 0.5.into(), Cell::Empty]);
        assert_eq!(t.to_csv(), "a,b,c\n\"x,y\",0.5,\n");
        assert_eq!(t.to_jsonl(), "{\"table\":\"t\",\"a\":\"x,y\",\"b\":0.5,\"c\":null}\n");
    }
}
