//! Delimited-text previews.

use std::fmt::{self, Write};

use chrono::{NaiveDate, NaiveDateTime};

/// Rows inspected per column for the type sniff.
const SNIFF_ROWS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Integer,
    Real,
    Date,
    Text,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Date => "date",
            ColumnType::Text => "text",
        })
    }
}

fn cell_type(cell: &str) -> ColumnType {
    let cell = cell.trim();
    if cell.parse::<i64>().is_ok() {
        ColumnType::Integer
    } else if cell.parse::<f64>().is_ok() {
        ColumnType::Real
    } else if is_date(cell) {
        ColumnType::Date
    } else {
        ColumnType::Text
    }
}

fn is_date(cell: &str) -> bool {
    ["%Y-%m-%d", "%Y/%m/%d", "%d.%m.%Y"]
        .iter()
        .any(|f| NaiveDate::parse_from_str(cell, f).is_ok())
        || ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
            .iter()
            .any(|f| NaiveDateTime::parse_from_str(cell, f).is_ok())
}

fn merge(a: ColumnType, b: ColumnType) -> ColumnType {
    use ColumnType::*;
    match (a, b) {
        (x, y) if x == y => x,
        (Integer, Real) | (Real, Integer) => Real,
        _ => Text,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TablePreview {
    pub columns: Vec<(String, ColumnType)>,
    /// Data rows, header excluded.
    pub row_count: usize,
    /// Header line followed by up to `preview_rows` data lines, each exactly
    /// as it appears in the source (line terminator removed).
    pub raw_lines: Vec<String>,
}

impl TablePreview {
    pub fn scan(bytes: &[u8], delimiter: u8, preview_rows: usize) -> Result<Self, csv::Error> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(delimiter)
            .from_reader(bytes);
        let mut record = csv::ByteRecord::new();
        let mut starts: Vec<usize> = Vec::new();
        let mut header: Vec<String> = Vec::new();
        let mut types: Vec<Option<ColumnType>> = Vec::new();
        let mut rows = 0usize;
        let mut seen_header = false;

        loop {
            let start = reader.position().byte() as usize;
            if !reader.read_byte_record(&mut record)? {
                break;
            }
            if starts.len() <= preview_rows + 1 {
                starts.push(start);
            }
            if !seen_header {
                seen_header = true;
                header = record.iter().map(|f| String::from_utf8_lossy(f).trim().to_string()).collect();
                types = vec![None; header.len()];
                continue;
            }
            if rows < SNIFF_ROWS {
                for (i, field) in record.iter().enumerate().take(types.len()) {
                    let cell = String::from_utf8_lossy(field);
                    if cell.trim().is_empty() {
                        continue;
                    }
                    let t = cell_type(&cell);
                    types[i] = Some(types[i].map_or(t, |prev| merge(prev, t)));
                }
            }
            rows += 1;
        }
        let end = reader.position().byte() as usize;
        if starts.len() <= preview_rows + 1 {
            starts.push(end);
        }

        let raw_lines = starts
            .windows(2)
            .take(preview_rows + 1)
            .map(|w| {
                let raw = String::from_utf8_lossy(&bytes[w[0]..w[1]]);
                raw.trim_matches(['\n', '\r']).to_string()
            })
            .collect();
        let columns = header
            .into_iter()
            .zip(types)
            .map(|(name, t)| (name, t.unwrap_or(ColumnType::Text)))
            .collect();
        Ok(TablePreview { columns, row_count: rows, raw_lines })
    }

    pub fn render(&self, preview_rows: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rows: {} (header excluded)", self.row_count);
        let cols: Vec<String> = self.columns.iter().map(|(n, t)| format!("{n}:{t}")).collect();
        let _ = writeln!(out, "columns ({}): {}", self.columns.len(), cols.join(", "));
        let shown = self.raw_lines.len().saturating_sub(1).min(preview_rows);
        let _ = writeln!(out, "preview (header + {shown} rows):");
        for line in self.raw_lines.iter().take(shown + 1) {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
