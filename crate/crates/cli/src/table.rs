//! Rectangular output tables with a fixed column order, rendered as CSV
//! (floats at 12 significant digits) or as a JSON array of row objects.

use serde_json::{Map, Number, Value};

use crate::CliError;

#[derive(Clone, Debug)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// Clamping a non-finite value would mask a formula bug, so refuse to
    /// emit it instead.
    pub fn check_finite(&self) -> Result<(), CliError> {
        for (r, row) in self.rows.iter().enumerate() {
            for (cell, name) in row.iter().zip(&self.columns) {
                if let Cell::Float(x) = cell {
                    if !x.is_finite() {
                        return Err(CliError::Numeric(format!(
                            "column {name} in row {r} is not finite ({x})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(render_csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut object = Map::new();
                for (cell, name) in row.iter().zip(&self.columns) {
                    object.insert(name.to_string(), json_cell(cell));
                }
                Value::Object(object)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&Value::Array(rows)).expect("finite cells");
        text.push('\n');
        text
    }
}

fn render_csv_cell(cell: &Cell) -> String {
    match cell {
        Cell::Float(x) => format!("{x:.11e}"),
        Cell::Int(x) => x.to_string(),
        Cell::Bool(x) => x.to_string(),
        Cell::Text(x) => x.clone(),
    }
}

fn json_cell(cell: &Cell) -> Value {
    match cell {
        Cell::Float(x) => Value::Number(Number::from_f64(*x).expect("checked finite")),
        Cell::Int(x) => Value::Number(Number::from(*x)),
        Cell::Bool(x) => Value::Bool(*x),
        Cell::Text(x) => Value::String(x.clone()),
    }
}
