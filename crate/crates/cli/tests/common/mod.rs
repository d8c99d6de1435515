#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use catgeom_cli::{run, CliError, Report, Request};
use serde_json::Value;

pub fn run_in(dir: &Path, subcommand: &str, config: Value, threads: Option<usize>) -> Result<Report, CliError> {
    run(&Request { subcommand: subcommand.into(), config: Some(config), seed: None, out: dir.to_path_buf(), threads })
}

/// A parsed CSV file.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Table {
        let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
        Table { header, rows }
    }

    pub fn idx(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    /// Numeric column; empty fields read as NaN.
    pub fn col(&self, name: &str) -> Vec<f64> {
        let i = self.idx(name);
        self.rows.iter().map(|r| if r[i].is_empty() { f64::NAN } else { r[i].parse().unwrap() }).collect()
    }

    pub fn text(&self, name: &str) -> Vec<String> {
        let i = self.idx(name);
        self.rows.iter().map(|r| r[i].clone()).collect()
    }
}

/// Every file of a run directory, with the manifest timestamp removed.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p: PathBuf = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let mut bytes = std::fs::read(&p).unwrap();
        if name == "manifest.json" {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Roots of `f` on `[lo, hi]`, located by scanning with step `h` and bisecting.
pub fn roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let n = ((hi - lo) / h).ceil() as usize;
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=n {
        let b = lo + i as f64 * h;
        let fb = f(b);
        if fa == 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                let fm = f(m);
                if fm == 0.0 || m <= x0 || m >= x1 {
                    x0 = m;
                    x1 = m;
                    break;
                }
                if fm * f0 < 0.0 {
                    x1 = m;
                } else {
                    x0 = m;
                    f0 = fm;
                }
            }
            out.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    out
}
