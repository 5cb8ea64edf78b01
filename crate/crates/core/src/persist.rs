//! On-disk artifacts: CSV tables, checkpoints and run reports.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{checkpoint, SpectralField};

/// Header plus rows of already-formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Shortest round-trip decimal form; identical bits give identical text.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.push_cells(row.into_iter().map(fmt_num).collect());
    }

    pub fn push_cells(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv_string())
    }

    /// Parse a table written by [`CsvTable::write`].
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or("empty csv")?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<String> = line.split(',').map(str::to_string).collect();
            if cells.len() != header.len() {
                return Err(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len()));
            }
            rows.push(cells);
        }
        Ok(CsvTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let at = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[at].parse().unwrap_or(f64::NAN)).collect())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_checkpoint(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    checkpoint::write(path, field, t)
}

pub fn read_checkpoint(path: &Path) -> Result<(SpectralField, f64)> {
    checkpoint::read(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_match_header_width() {
        let mut t = CsvTable::new(&["a", "b", "c"]);
        t.push(vec![1.0, 2.5e-7, f64::NAN]);
        t.push(vec![-0.0, 1e300, 3.0]);
        let text = t.to_csv_string();
        let parsed = CsvTable::parse(&text).unwrap();
        assert_eq!(parsed, t);
        for line in text.lines() {
            assert_eq!(line.split(',').count(), 3);
        }
        assert_eq!(parsed.column("b").unwrap()[0], 2.5e-7);
    }

    #[test]
    #[should_panic]
    fn ragged_row_rejected() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.push(vec![1.0]);
    }

    #[test]
    fn number_format_roundtrips() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -4.4e-300, 0.0] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn write_creates_parent_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/c.csv");
        let mut t = CsvTable::new(&["x"]);
        t.push(vec![1.0]);
        t.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x\n1e0\n");
    }
}
