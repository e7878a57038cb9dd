use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::OutputFormat;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    /// Floats use 17 significant digits so values round-trip exactly.
    fn render(&self) -> Option<String> {
        match self {
            Cell::Num(v) if v.is_finite() => Some(format!("{v:.16e}")),
            Cell::Num(_) | Cell::Empty => None,
            Cell::Int(v) => Some(v.to_string()),
            Cell::Text(s) => Some(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Num(v) => Some(v),
            Cell::Int(v) => Some(v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, name: &str) -> Option<&Cell> {
        self.column(name).map(|c| &self.rows[row][c])
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.render().unwrap_or_default()))
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut out = String::from("[\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str("  {");
            for (j, (name, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                out.push_str(&serde_json::to_string(name)?);
                out.push_str(": ");
                match (cell, cell.render()) {
                    (Cell::Text(s), _) => out.push_str(&serde_json::to_string(s)?),
                    (_, Some(num)) => out.push_str(&num),
                    (_, None) => out.push_str("null"),
                }
            }
            out.push('}');
            if i + 1 < self.rows.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("]\n");
        Ok(out)
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Writes `table` to `path`, or to stdout when `path` is `None`.
pub fn emit(table: &Table, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let text = table.render(format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_row() -> Table {
        let mut t = Table::new(&["method", "value", "n", "note"]);
        t.push(vec![
            "lime".into(),
            Cell::Num(0.1 + 0.2),
            Cell::Int(256),
            Cell::Empty,
        ]);
        t
    }

    #[test]
    fn empty_table_is_rejected() {
        let t = Table::new(&["a"]);
        assert!(matches!(t.to_csv(), Err(Error::EmptyTable)));
        assert!(matches!(t.to_json(), Err(Error::EmptyTable)));
    }

    #[test]
    fn json_round_trips_bit_exactly() {
        let t = one_row();
        let parsed: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        let v = parsed[0]["value"].as_f64().unwrap();
        assert_eq!(v.to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(parsed[0]["n"], 256);
        assert!(parsed[0]["note"].is_null());
    }

    #[test]
    fn csv_quotes_commas() {
        let mut t = Table::new(&["error"]);
        t.push(vec!["bad, worse".into()]);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv, "error\r\n\"bad, worse\"\r\n");
    }

    #[test]
    fn csv_seventeen_digits() {
        let csv = one_row().to_csv().unwrap();
        let line = csv.lines().nth(1).unwrap();
        let field = line.split(',').nth(1).unwrap();
        assert_eq!(field, "3.0000000000000004e-1");
        assert_eq!(field.parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
