//! Tables and timestamp files written to the output directory, each with a
//! provenance header.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nvcavity::photostats::PhotonStream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL: &str = "nvcavity";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampFormat {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Flag(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x.into())
    }
}

impl From<u8> for Cell {
    fn from(x: u8) -> Self {
        Cell::Int(x.into())
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Flag(b) => json!(b),
        }
    }
}

/// Builds a table row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table `{}`", self.name);
        self.rows.push(row);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Two-column quantity/value table.
    pub fn quantities(name: &str, rows: impl IntoIterator<Item = (&'static str, Cell)>) -> Self {
        let mut t = Self::new(name, &["quantity", "value"]);
        for (q, v) in rows {
            t.push(vec![q.into(), v]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes `resolved`, the fully defaulted configuration of the run.
    pub fn new(subcommand: &str, seed: u64, resolved: &Value) -> Self {
        let canonical = serde_json::to_vec(&json!({ "subcommand": subcommand, "seed": seed, "config": resolved }))
            .expect("config serializes");
        Self { tool: TOOL, version: VERSION, subcommand: subcommand.into(), config_sha256: sha256_hex(&canonical), seed }
    }

    fn header_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# subcommand: {}\n# config_sha256: {}\n# seed: {}\n",
            self.tool, self.version, self.subcommand, self.config_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory of one run. Remembers every file written so that a
/// failed run can report its partial results.
#[derive(Debug)]
pub struct Sink {
    dir: PathBuf,
    format: Format,
    provenance: Option<Provenance>,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: PathBuf, format: Format) -> Self {
        Self { dir, format, provenance: None, written: Vec::new() }
    }

    pub fn begin(&mut self, provenance: Provenance) {
        self.provenance = Some(provenance);
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn provenance(&self) -> &Provenance {
        self.provenance.as_ref().expect("run started before writing output")
    }

    fn put(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        eprintln!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    pub fn table(&mut self, table: &Table) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}.{}", table.name, self.format.extension()));
        let bytes = match self.format {
            Format::Csv => csv_bytes(self.provenance(), table).map_err(|e| CliError::io(&path, e))?,
            Format::Json => {
                let doc = json!({
                    "provenance": self.provenance(),
                    "table": table.name,
                    "notes": table.notes,
                    "columns": table.columns,
                    "rows": table.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
                s.push('\n');
                s.into_bytes()
            }
        };
        self.put(path, &bytes)
    }

    /// Writes a photon stream; binary records get a JSON sidecar carrying the
    /// provenance and acquisition duration.
    pub fn timestamps(&mut self, name: &str, stream: &PhotonStream, format: TimestampFormat, meta: Value) -> Result<PathBuf, CliError> {
        match format {
            TimestampFormat::Binary => {
                let path = self.dir.join(format!("{name}.bin"));
                let mut bytes = Vec::with_capacity(8 * stream.timestamps_ns.len());
                stream.write_binary(&mut bytes).map_err(|e| CliError::io(&path, e))?;
                self.put(path.clone(), &bytes)?;
                let sidecar = json!({
                    "provenance": self.provenance(),
                    "records": "u64 little-endian, ns",
                    "photons": stream.timestamps_ns.len(),
                    "duration_ns": stream.duration_ns,
                    "source": meta,
                });
                let mut s = serde_json::to_string_pretty(&sidecar).expect("metadata serializes");
                s.push('\n');
                self.put(sidecar_path(&path), s.as_bytes())?;
                Ok(path)
            }
            TimestampFormat::Csv => {
                let path = self.dir.join(format!("{name}.csv"));
                let mut bytes = self.provenance().header_lines().into_bytes();
                bytes.extend(format!("# duration_ns: {}\n", stream.duration_ns).bytes());
                stream.write_csv(&mut bytes).map_err(|e| CliError::io(&path, e))?;
                self.put(path.clone(), &bytes)?;
                Ok(path)
            }
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn csv_bytes(provenance: &Provenance, table: &Table) -> std::io::Result<Vec<u8>> {
    let mut out = provenance.header_lines().into_bytes();
    for note in &table.notes {
        out.extend(format!("# note: {note}\n").bytes());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::text))?;
    }
    w.into_inner().map_err(|e| e.into_error())
}
