//! CSV artifacts and the run manifest.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PideError, Result};

/// Version tag written into every CSV header comment.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Hex SHA-256 of the configuration bytes.
pub fn config_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
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
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "pass" } else { "fail" }.into())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text with a `# levy-pide <name> v<N> digest=<hex>` first line.
    pub fn render(&self, digest: &str) -> Result<String> {
        let mut out = format!("# levy-pide {} v{CSV_SCHEMA_VERSION} digest={digest}\n", self.name);
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| PideError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| PideError::Io(e.to_string()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    pub fn write(&self, dir: &Path, digest: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut f = File::create(&path)?;
        f.write_all(self.render(digest)?.as_bytes())?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub points: usize,
    pub half_width: f64,
    pub centre: f64,
    pub padding: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeEcho {
    pub kind: String,
    pub steps: usize,
    pub dt: f64,
    pub gradient: String,
    pub drift_sign: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_digest: String,
    pub versions: Vec<(String, String)>,
    pub grid: Option<GridEcho>,
    pub scheme: Option<SchemeEcho>,
    pub threads: usize,
    pub seedless: bool,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub passed: bool,
}

impl RunManifest {
    pub fn module_versions() -> Vec<(String, String)> {
        let v = env!("CARGO_PKG_VERSION").to_string();
        [
            "levy_measures",
            "bessel_scale",
            "shift_solver",
            "nonlocal_operator",
            "pide_solver",
            "pricing_cli",
        ]
        .iter()
        .map(|m| (m.to_string(), v.clone()))
        .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.toml");
        let text = toml::to_string(self).map_err(|e| PideError::Io(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            config_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 12.164203195593, 1e-300, -2.5e17] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn table_render() {
        let mut t = CsvTable::new("demo", &["a", "b"]);
        t.push(vec![1.5.into(), "x".into()]);
        let s = t.render("00").unwrap();
        assert!(s.starts_with("# levy-pide demo v1 digest=00\na,b\n"));
        assert!(s.contains("1.5000000000000000e0,x"));
    }
}
