mod allocate;
mod biasvar;
mod continuum;
mod fields;
mod gauss1d;
mod mi_validate;
mod pdc2d;
mod train2d;

use std::path::PathBuf;

use catgeom::{CategoryModel, Error, FisherMatrix, Result, Vector};
use serde::{Deserialize, Serialize};

pub use allocate::Allocate;
pub use biasvar::Biasvar;
pub use continuum::Continuum;
pub use fields::{CodeSource, FcatField, FcodeField};
pub use gauss1d::Gauss1d;
pub use mi_validate::MiValidate;
pub use pdc2d::Pdc2d;
pub use train2d::Train2d;

macro_rules! seeded {
    () => {
        fn seed(&self) -> u64 {
            self.seed
        }
        fn set_seed(&mut self, seed: u64) {
            self.seed = seed;
        }
    };
}
pub(crate) use seeded;

/// A category model given inline or as a path to a model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    File { model_file: PathBuf },
    Inline(CategoryModel),
}

impl ModelSource {
    pub fn load(&self) -> Result<CategoryModel> {
        match self {
            ModelSource::Inline(m) => Ok(m.clone()),
            ModelSource::File { model_file } => Ok(serde_json::from_str(&std::fs::read_to_string(model_file)?)?),
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            ModelSource::File { model_file } => vec![model_file.clone()],
            ModelSource::Inline(_) => Vec::new(),
        }
    }
}

pub fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Angle in degrees between two directions, ignoring orientation.
pub fn axis_angle(a: &Vector, b: &Vector) -> f64 {
    (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0).acos().to_degrees()
}

/// `λ₂/λ₁` of a Fisher matrix, 0 when the matrix vanishes.
pub fn eig_ratio(f: &FisherMatrix) -> f64 {
    let e = f.eigenvalues();
    if e.len() < 2 || e[0] <= 0.0 {
        return 0.0;
    }
    e[1] / e[0]
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")))
    }
}

pub fn at_least(name: &str, n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be at least {min}, got {n}")))
    }
}

/// Header names `prefix_1 .. prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Header names `F_11 .. F_kk`, row-major.
pub fn matrix_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).flat_map(|i| (1..=k).map(move |j| format!("{prefix}_{i}{j}"))).collect()
}
