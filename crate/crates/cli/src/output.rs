use std::fs;
use std::path::{Path, PathBuf};

use catgeom::digest::sha256_hex;
use catgeom::Result;
use serde::{Deserialize, Serialize};

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::U(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Artifact directory of one run; remembers what it wrote.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunOutput { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn csv<S: AsRef<str>>(&mut self, name: &str, header: &[S], rows: &[Vec<Cell>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header.iter().map(|h| h.as_ref()))?;
        for r in rows {
            debug_assert_eq!(r.len(), header.len(), "{name}");
            w.write_record(r.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn digests(&self) -> Result<Vec<FileDigest>> {
        self.files.iter().map(|f| file_digest(&self.dir.join(f), f)).collect()
    }
}

pub fn file_digest(path: &Path, label: &str) -> Result<FileDigest> {
    Ok(FileDigest { path: label.to_string(), sha256: sha256_hex(&fs::read(path)?) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub cli_version: String,
    pub core_version: String,
    pub seed: u64,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub config_digest: String,
    /// Files the configuration refers to.
    pub inputs: Vec<FileDigest>,
    /// Digest over the configuration and every input file.
    pub input_digest: String,
    pub artifacts: Vec<FileDigest>,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub timestamp: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_records_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = RunOutput::new(dir.path()).unwrap();
        out.csv("a.csv", &["x", "n", "s", "o"], &[crate::row![1.5, 2usize, "u", None::<f64>]]).unwrap();
        out.csv("a.csv", &["x"], &[crate::row![1.0]]).unwrap();
        assert_eq!(out.files(), ["a.csv"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n1.0000000000000000e0\n");
        assert_eq!(out.digests().unwrap()[0].sha256.len(), 64);
    }

    proptest! {
        #[test]
        fn emitted_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
