//! Generic rectangular tables and delimited text I/O.
//!
//! Every tabular artifact (datasets, person-moment tables, risk curves,
//! population-time layouts) goes through this module so the on-disk format
//! is uniform: header line, fixed column order, reals written with 17
//! significant digits so a write→read round trip is bit-exact.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Text(s) => s.trim().parse().ok(),
        }
    }

    pub fn as_text(&self) -> String {
        match self {
            Value::Real(v) => format_real(*v),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

/// 17 significant digits; round-trips any finite f64 exactly.
pub fn format_real(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{:.16e}", v).unwrap();
    s
}

/// Rectangular table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    /// Serialize with the given delimiter (`b','` or `b'\t'`).
    pub fn write_delimited(&self, path: &Path, delimiter: u8) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)?;
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            if row.len() != self.columns.len() {
                return Err(Error::InvalidArgument(format!(
                    "ragged table: row has {} cells, header has {}",
                    row.len(),
                    self.columns.len()
                )));
            }
            wtr.write_record(row.iter().map(|v| v.as_text()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_delimited(path, b',')
    }

    /// Read a header-bearing delimited file. Cells that parse as f64 become
    /// `Real`, everything else stays `Text`.
    pub fn read_delimited(path: &Path, delimiter: u8) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(true)
            .from_path(path)?;
        let columns: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != columns.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    rec.len(),
                    columns.len()
                )));
            }
            let row = rec
                .iter()
                .map(|cell| {
                    let t = cell.trim();
                    match t.parse::<f64>() {
                        Ok(v) if !t.is_empty() => Value::Real(v),
                        _ => Value::Text(t.to_string()),
                    }
                })
                .collect();
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        Table::read_delimited(path, b',')
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn header_only_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let t = Table::new(vec!["a".into(), "b".into()]);
        t.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n");
        let back = Table::read_csv(&path).unwrap();
        assert_eq!(back.columns, vec!["a", "b"]);
        assert!(back.rows.is_empty());
    }

    #[test]
    fn format_real_round_trips_pi() {
        let v = std::f64::consts::PI;
        let s = format_real(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn tab_delimiter() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let mut t = Table::new(vec!["x".into(), "label".into()]);
        t.push_row(vec![Value::Real(1.5), Value::Text("a,b".into())]);
        t.write_delimited(&path, b'\t').unwrap();
        let back = Table::read_delimited(&path, b'\t').unwrap();
        assert_eq!(back.rows[0][1], Value::Text("a,b".into()));
    }

    proptest! {
        #[test]
        fn real_values_round_trip_exactly(vals in proptest::collection::vec(
            prop_oneof![
                any::<f64>().prop_filter("finite", |v| v.is_finite()),
                (-1e6f64..1e6).prop_map(|v| v),
            ],
            1..20,
        )) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            let mut t = Table::new(vec!["v".into()]);
            for v in &vals {
                t.push_row(vec![Value::Real(*v)]);
            }
            t.write_csv(&path).unwrap();
            let back = Table::read_csv(&path).unwrap();
            for (row, v) in back.rows.iter().zip(&vals) {
                let got = row[0].as_real().unwrap();
                prop_assert_eq!(got.to_bits(), v.to_bits());
            }
        }
    }
}
