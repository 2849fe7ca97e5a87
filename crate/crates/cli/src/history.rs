//! CSV iteration histories.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

/// One CSV cell.
pub enum Cell {
    Int(usize),
    Float(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl History {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width must match the header");
        self.rows.push(
            cells
                .into_iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    // shortest round-trip representation
                    Cell::Float(v) => format!("{v:e}"),
                })
                .collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}
