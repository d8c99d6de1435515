use std::path::PathBuf;

use catgeom::catfisher::fisher_cat;
use catgeom::neurocode::{fisher_code_with, FisherForm, SINGULAR_REL_TOL};
use catgeom::{CategoryModel, Error, FisherMatrix, MLPModel, PopulationCode, QuadratureGrid, Result, Vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::train2d::{load_checkpoint, Checkpoint, Train2d};
use super::{at_least, axis_angle, matrix_names, numbered, seeded, ModelSource};
use crate::output::Cell;
use crate::{RunOutput, Scenario};

fn grid(bounds: &[(f64, f64)], nodes: usize, dim: usize) -> Result<Vec<Vector>> {
    at_least("nodes", nodes, 2)?;
    if bounds.len() != dim {
        return Err(Error::DimMismatch { expected: dim, got: bounds.len() });
    }
    Ok(QuadratureGrid::trapezoid(bounds, nodes)?.points().into_iter().map(|(x, _)| x).collect())
}

fn header(k: usize) -> Vec<String> {
    let mut h = numbered("x", k);
    h.extend(matrix_names("F", k));
    h.extend(numbered("lambda", k));
    h
}

fn matrix_cells(x: &Vector, f: &FisherMatrix) -> Vec<Cell> {
    let mut r: Vec<Cell> = x.iter().map(|v| Cell::F(*v)).collect();
    let k = x.len();
    r.extend((0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| Cell::F(f.entries()[(i, j)])));
    r.extend(f.eigenvalues().iter().map(|v| Cell::F(*v)));
    r
}

/// Categorical Fisher information over a rectangular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcatField {
    pub model: ModelSource,
    /// Per-coordinate range; defaults to the 3-sd box of the model.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Nodes per axis.
    pub nodes: usize,
    pub seed: u64,
}

impl Default for FcatField {
    fn default() -> Self {
        FcatField {
            model: ModelSource::Inline(CategoryModel::three_gaussians(0.5).expect("valid model")),
            bounds: None,
            nodes: 41,
            seed: 0,
        }
    }
}

impl Scenario for FcatField {
    seeded!();

    fn inputs(&self) -> Vec<PathBuf> {
        self.model.inputs()
    }

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        let model = self.model.load()?;
        let k = model.dim();
        let bounds = self.bounds.clone().unwrap_or_else(|| model.bounding_box(3.0));
        let pts = grid(&bounds, self.nodes, k)?;
        let rows = pts
            .par_iter()
            .map(|x| -> Result<Vec<Cell>> {
                let f = fisher_cat(&model, x)?;
                let mut r = matrix_cells(x, &f);
                r.push(Cell::F(model.density(x)));
                r.push(Cell::from(f.rank()));
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = header(k);
        h.extend(["density".into(), "rank".into()]);
        out.csv("fcat_field.csv", &h, &rows)?;
        Ok(json!({ "points": rows.len(), "bounds": bounds }))
    }
}

/// Where the neural code comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeSource {
    Population { code: PopulationCode },
    /// Net saved by `train2d`.
    Checkpoint { path: PathBuf },
    /// Train the first run of a `train2d` config, seeded by this scenario.
    Train { config: Box<Train2d> },
}

/// Neural Fisher information over a rectangular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcodeField {
    pub source: CodeSource,
    pub bounds: Vec<(f64, f64)>,
    pub nodes: usize,
    pub form: FisherForm,
    pub seed: u64,
}

impl Default for FcodeField {
    fn default() -> Self {
        FcodeField {
            source: CodeSource::Train { config: Box::default() },
            bounds: vec![(-2.0, 2.0), (-2.0, 2.0)],
            nodes: 41,
            form: FisherForm::Exact,
            seed: 0,
        }
    }
}

enum Code {
    Population(PopulationCode),
    Net(MLPModel),
}

impl Scenario for FcodeField {
    seeded!();

    fn inputs(&self) -> Vec<PathBuf> {
        match &self.source {
            CodeSource::Checkpoint { path } => vec![path.clone()],
            _ => Vec::new(),
        }
    }

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        let (code, model) = match &self.source {
            CodeSource::Population { code } => (Code::Population(code.clone()), None),
            CodeSource::Checkpoint { path } => (Code::Net(load_checkpoint(path)?), None),
            CodeSource::Train { config } => {
                let mut cfg = (**config).clone();
                cfg.seed = self.seed;
                let model = cfg.model()?;
                let net = cfg.train_run(&model, 0)?.net;
                out.json("net.json", &Checkpoint::new(&cfg, &net))?;
                (Code::Net(net), Some(model))
            }
        };
        let k = match &code {
            Code::Population(c) => c.dim(),
            Code::Net(n) => n.input_dim(),
        };
        let pts = grid(&self.bounds, self.nodes, k)?;
        let rows = pts
            .par_iter()
            .map(|x| -> Result<Vec<Cell>> {
                let f = match &code {
                    Code::Population(c) => fisher_code_with(c, x, self.form)?,
                    Code::Net(n) => n.fisher_with(x, self.form)?,
                };
                let mut r = matrix_cells(x, &f);
                r.push(Cell::from(f.is_singular(SINGULAR_REL_TOL)));
                let angle = match &model {
                    Some(m) => Some(axis_angle(&fisher_cat(m, x)?.top().1, &f.top().1)),
                    None => None,
                };
                r.push(Cell::from(angle));
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = header(k);
        h.extend(["singular".into(), "angle_to_fcat".into()]);
        out.csv("fcode_field.csv", &h, &rows)?;
        Ok(json!({ "points": rows.len() }))
    }
}
