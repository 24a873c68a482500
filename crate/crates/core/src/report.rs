//! Plain CSV tables with `#`-prefixed metadata lines.

use std::io::Write;

use crate::error::Result;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Formats a float so that it parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses a table written by [`CsvTable::write_to`]. Values are kept as text.
    pub fn parse(text: &str) -> Self {
        let mut table = Self::default();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix("# ") {
                if let Some((k, v)) = meta.split_once('=') {
                    table.meta.push((k.to_string(), v.to_string()));
                }
            } else if table.columns.is_empty() {
                table.columns = line.split(',').map(str::to_string).collect();
            } else if !line.is_empty() {
                table.rows.push(line.split(',').map(str::to_string).collect());
            }
        }
        table
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}
