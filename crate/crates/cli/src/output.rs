//! CSV and JSON serialization of result tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    /// Floats use 17 significant digits in scientific notation, independent of locale.
    fn csv_field(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

/// Column-ordered result rows plus optional comment lines after the data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_field)).map_err(io)?;
        }
        let mut bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        for line in &self.footer {
            writeln!(bytes, "# {line}").map_err(|e| CliError::Io(e.to_string()))?;
        }
        Ok(bytes)
    }

    /// Rows as objects keyed by column name.
    pub fn data_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// `{"data": …, "meta": …}`, pretty-printed with a trailing newline.
pub fn json_document(data: Value, meta: Value) -> Result<Vec<u8>, CliError> {
    let mut doc = Map::new();
    doc.insert("data".to_string(), data);
    doc.insert("meta".to_string(), meta);
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc)).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Write to `path`, or to stdout when no path is given.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789] {
            let s = Cell::Float(x).csv_field();
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(Cell::Float(0.5).csv_field(), "5.0000000000000000e-1");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::Text("eta".into()), Cell::Int(3)]);
        t.footer.push("normalization=1".into());
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\neta,3\n# normalization=1\n");
    }

    #[test]
    fn json_rows_mirror_columns() {
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![Cell::Float(0.25), Cell::Float(f64::NAN)]);
        let v = t.data_json();
        assert_eq!(v[0]["x"], Value::from(0.25));
        assert_eq!(v[0]["y"], Value::Null);
    }
}
