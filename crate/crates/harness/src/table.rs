//! Result tables and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Floats carry 17 significant digits, enough to recover every bit.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub preset: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Seconds spent per row; kept apart from the deterministic columns.
    pub wall_seconds: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            wall_seconds: Vec::new(),
            provenance: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>, seconds: f64) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
        self.wall_seconds.push(seconds);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column; panics on unknown names.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let j = self.col(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Rows whose `key` column equals `value`.
    pub fn filter(&self, key: &str, value: &Cell) -> ResultTable {
        let j = self.col(key).unwrap_or_else(|| panic!("no column {key}"));
        let mut out = ResultTable::new(&self.columns.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        for (r, t) in self.rows.iter().zip(&self.wall_seconds) {
            let same = match (&r[j], value) {
                (Cell::Float(a), Cell::Float(b)) => a.to_bits() == b.to_bits(),
                (a, b) => a == b,
            };
            if same {
                out.push(r.clone(), *t);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.is_empty() {
            return Err(HarnessError::EmptyTable);
        }
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| HarnessError::Io(e.into());
        wr.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            wr.write_record(r.iter().map(Cell::render)).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| HarnessError::Io(e.into());
        wr.write_record(["row", "wall_seconds"]).map_err(io)?;
        for (i, t) in self.wall_seconds.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{t:.6}")]).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Parse a CSV written by [`ResultTable::write_csv`]. Integers, floats
    /// and text are told apart by their spelling.
    pub fn read_csv<R: Read>(r: R) -> Result<ResultTable> {
        let mut rd = csv::Reader::from_reader(r);
        let io = |e: csv::Error| HarnessError::Io(e.into());
        let columns: Vec<String> = rd.headers().map_err(io)?.iter().map(String::from).collect();
        let mut t = ResultTable {
            columns,
            rows: Vec::new(),
            wall_seconds: Vec::new(),
            provenance: None,
        };
        for rec in rd.records() {
            let rec = rec.map_err(io)?;
            let row = rec
                .iter()
                .map(|s| {
                    if let Ok(i) = s.parse::<i64>() {
                        Cell::Int(i)
                    } else if let Ok(x) = s.parse::<f64>() {
                        Cell::Float(x)
                    } else {
                        Cell::Text(s.to_string())
                    }
                })
                .collect();
            t.push(row, 0.0);
        }
        Ok(t)
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    tielab::stats::mean_sd(xs)
}
