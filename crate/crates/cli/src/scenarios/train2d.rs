use std::path::Path;

use catgeom::catfisher::fisher_cat;
use catgeom::digest::json_digest;
use catgeom::infomeasure::{bayes_accuracy, grid_for_model};
use catgeom::nettrain::{cosine_proxy, fisher_along_path, fisher_code_net, total_cost, Estimate, PathFisher, TrainResult};
use catgeom::neurocode::VarianceLink;
use catgeom::{
    Activation, CategoryModel, Dataset, Error, Flag, MCConfig, MLPModel, NetNoise, PathProbe, Result, TrainConfig, Vector,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, axis_angle, eig_ratio, median, numbered, positive, seeded, v};
use crate::output::Cell;
use crate::{row, RunOutput, Scenario};

/// Trained net with the digest of the config that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_digest: String,
    pub net: MLPModel,
}

impl Checkpoint {
    pub fn new<T: Serialize>(cfg: &T, net: &MLPModel) -> Self {
        Checkpoint { config_digest: json_digest(cfg), net: net.clone() }
    }
}

/// Reads a checkpoint, or a bare net dump.
pub fn load_checkpoint(path: &Path) -> Result<MLPModel> {
    let value: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if value.get("net").is_some() {
        Ok(serde_json::from_value::<Checkpoint>(value)?.net)
    } else {
        Ok(serde_json::from_value(value)?)
    }
}

/// Rays of probe points crossing the pairwise boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryProbes {
    pub angles_deg: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
    pub per_ray: usize,
    /// Probes kept, in ray order.
    pub count: usize,
}

impl Default for BoundaryProbes {
    fn default() -> Self {
        BoundaryProbes { angles_deg: vec![30.0, 150.0, 270.0], d_min: 0.5, d_max: 1.5, per_ray: 17, count: 50 }
    }
}

impl BoundaryProbes {
    pub fn points(&self) -> Vec<Vector> {
        let mut out = Vec::new();
        for deg in &self.angles_deg {
            let t = deg.to_radians();
            for i in 0..self.per_ray {
                let d = if self.per_ray == 1 {
                    self.d_min
                } else {
                    self.d_min + (self.d_max - self.d_min) * i as f64 / (self.per_ray - 1) as f64
                };
                out.push(v(&[d * t.cos(), d * t.sin()]));
            }
        }
        out.truncate(self.count);
        out
    }
}

/// Three equiprobable Gaussian categories learned by a net with a noisy
/// coding layer; compares the neural and categorical Fisher information.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Train2d {
    /// Standard deviation of each category.
    pub sigma_cat: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Noise of the last hidden layer.
    pub noise: NetNoise,
    pub train_size: usize,
    pub test_size: usize,
    /// Its seed is replaced per run.
    pub train: TrainConfig,
    pub runs: usize,
    pub probes: BoundaryProbes,
    pub triple_point: Vec<f64>,
    /// Points on the path between the first two category centers.
    pub path_points: usize,
    /// Nodes per axis of the Bayes-rate quadrature.
    pub grid_nodes: usize,
    /// Monte Carlo for the cost at each checkpoint.
    pub cost_mc: MCConfig,
    pub seed: u64,
}

impl Default for Train2d {
    fn default() -> Self {
        Train2d {
            sigma_cat: 0.5,
            hidden: vec![32, 32],
            activation: Activation::Sigmoid,
            noise: NetNoise { sigma: 0.3, link: VarianceLink::Rate },
            train_size: 3000,
            test_size: 10000,
            train: TrainConfig { epochs: 300, momentum: 0.9, checkpoint_every: Some(50), ..Default::default() },
            runs: 10,
            probes: BoundaryProbes::default(),
            triple_point: vec![0.0, 0.0],
            path_points: 31,
            grid_nodes: 201,
            cost_mc: MCConfig { outer_samples: 4000, inner_samples: 1, chunk_size: 1000, seed: 0 },
            seed: 0,
        }
    }
}

struct RunResult {
    seed: u64,
    train: TrainResult,
    accuracy: f64,
    /// Per probe: excluded, angle before/after, ratio before/after.
    probes: Vec<(bool, f64, f64, f64, f64)>,
    triple: (f64, f64),
    fisher_before: PathFisher,
    fisher_after: PathFisher,
    cosine: Vec<f64>,
    outputs: Vec<Vector>,
    costs: Vec<(usize, Estimate)>,
}

fn kinked(flags: &[Flag]) -> bool {
    flags.iter().any(|f| matches!(f, Flag::ReluKink { .. }))
}

impl Train2d {
    pub fn model(&self) -> Result<CategoryModel> {
        CategoryModel::three_gaussians(self.sigma_cat)
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![2];
        d.extend(&self.hidden);
        d.push(3);
        d
    }

    fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn fresh_net(&self, run: usize) -> Result<MLPModel> {
        MLPModel::new(&self.dims(), &vec![self.activation; self.hidden.len()], self.noise, self.run_seed(run))
    }

    pub fn train_run(&self, model: &CategoryModel, run: usize) -> Result<TrainResult> {
        let net = self.fresh_net(run)?;
        let data = Dataset::from_model(model, self.train_size, self.seed.wrapping_add(100 + run as u64));
        train_sgd_seeded(&net, &data, &self.train, self.run_seed(run))
    }

    fn validate(&self) -> Result<()> {
        positive("sigma_cat", self.sigma_cat)?;
        at_least("hidden layers", self.hidden.len(), 1)?;
        at_least("runs", self.runs, 1)?;
        at_least("train_size", self.train_size, 1)?;
        at_least("test_size", self.test_size, 1)?;
        at_least("path_points", self.path_points, 3)?;
        at_least("probe count", self.probes.points().len(), 1)?;
        if self.triple_point.len() != 2 {
            return Err(Error::DimMismatch { expected: 2, got: self.triple_point.len() });
        }
        self.cost_mc.validate()?;
        self.train.validate()
    }

    fn one_run(&self, model: &CategoryModel, run: usize, probes: &[Vector], path: &PathProbe, test: &Dataset) -> Result<RunResult> {
        let before = self.fresh_net(run)?;
        let train = self.train_run(model, run)?;
        let after = &train.net;
        let mut rows = Vec::new();
        for p in probes {
            let cat = fisher_cat(model, p)?.top().1;
            let fb = fisher_code_net(&before, p)?;
            let fa = fisher_code_net(after, p)?;
            let excluded = kinked(&fb.flags) || kinked(&fa.flags);
            rows.push((excluded, axis_angle(&cat, &fb.top().1), axis_angle(&cat, &fa.top().1), eig_ratio(&fb), eig_ratio(&fa)));
        }
        let tp = v(&self.triple_point);
        let triple = (eig_ratio(&fisher_code_net(&before, &tp)?), eig_ratio(&fisher_code_net(after, &tp)?));
        let mc = MCConfig { seed: self.seed.wrapping_add(200 + run as u64), ..self.cost_mc };
        let mut costs = vec![(0, total_cost(model, &before, &before, &mc)?)];
        for (epoch, net) in &train.checkpoints {
            costs.push((*epoch, total_cost(model, net, net, &mc)?));
        }
        if costs.last().map(|c| c.0) != Some(self.train.epochs) {
            costs.push((self.train.epochs, total_cost(model, after, after, &mc)?));
        }
        Ok(RunResult {
            seed: self.run_seed(run),
            accuracy: after.accuracy(test)?,
            probes: rows,
            triple,
            fisher_before: fisher_along_path(&before, path)?,
            fisher_after: fisher_along_path(after, path)?,
            cosine: cosine_proxy(after, path)?,
            outputs: path.points.iter().map(|x| after.forward(x, None).map(|f| f.output)).collect::<Result<_>>()?,
            costs,
            train,
        })
    }
}

fn train_sgd_seeded(net: &MLPModel, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    catgeom::nettrain::train_sgd(net, data, &TrainConfig { seed, ..cfg.clone() })
}

impl Scenario for Train2d {
    seeded!();

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        self.validate()?;
        let model = self.model()?;
        let bayes = bayes_accuracy(&model, &grid_for_model(&model, self.grid_nodes)?);
        let probes = self.probes.points();
        let test = Dataset::from_model(&model, self.test_size, self.seed.wrapping_add(999));
        let means: Vec<Vector> = model
            .components()
            .iter()
            .map(|c| match c {
                catgeom::Component::Gaussian(g) => g.mean().clone(),
                _ => unreachable!("three_gaussians is Gaussian"),
            })
            .collect();
        let path = PathProbe::new(PathProbe::linear(&means[0], &means[1], self.path_points)?.points, Some((0, 1)))?;
        let truth: Vec<Vector> = path.points.iter().map(|x| model.posterior(x)).collect::<Result<_>>()?;
        let crossing = (0..truth.len()).min_by(|&a, &b| (truth[a][0] - truth[a][1]).abs().total_cmp(&(truth[b][0] - truth[b][1]).abs())).unwrap();
        let results = (0..self.runs)
            .into_par_iter()
            .map(|r| self.one_run(&model, r, &probes, &path, &test))
            .collect::<Result<Vec<_>>>()?;

        let mut run_rows = Vec::new();
        let mut probe_rows = Vec::new();
        let mut loss_rows = Vec::new();
        let mut cost_rows = Vec::new();
        let mut path_rows = Vec::new();
        let (mut ang_b, mut ang_a, mut rat_b, mut rat_a) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let arc = path.arc_length();
        for (r, res) in results.iter().enumerate() {
            let kept: Vec<_> = res.probes.iter().filter(|p| !p.0).collect();
            let col = |f: fn(&(bool, f64, f64, f64, f64)) -> f64| kept.iter().map(|p| f(p)).collect::<Vec<_>>();
            let (ab, aa, rb, ra) = (col(|p| p.1), col(|p| p.2), col(|p| p.3), col(|p| p.4));
            run_rows.push(row![
                r,
                res.seed,
                res.accuracy,
                bayes,
                *res.train.loss.last().unwrap(),
                median(&ab),
                median(&aa),
                median(&rb),
                median(&ra),
                res.triple.0,
                res.triple.1,
                res.fisher_after.argmax(),
                crossing
            ]);
            ang_b.extend(ab);
            ang_a.extend(aa);
            rat_b.extend(rb);
            rat_a.extend(ra);
            for (i, (p, s)) in probes.iter().zip(&res.probes).enumerate() {
                probe_rows.push(row![r, i, p[0], p[1], s.0, s.1, s.2, s.3, s.4]);
            }
            for (e, l) in res.train.loss.iter().enumerate() {
                loss_rows.push(row![r, e, *l]);
            }
            for (e, c) in &res.costs {
                cost_rows.push(row![r, *e, c.value, c.std_err]);
            }
            for i in 0..path.len() {
                let mut row: Vec<Cell> = row![r, i, arc[i], path.points[i][0], path.points[i][1]];
                row.extend(truth[i].iter().map(|v| Cell::F(*v)));
                row.extend(res.outputs[i].iter().map(|v| Cell::F(*v)));
                row.extend(row![res.fisher_before.per_index[i], res.fisher_after.per_index[i], res.cosine.get(i).copied()]);
                path_rows.push(row);
            }
        }
        out.csv(
            "runs.csv",
            &[
                "run",
                "seed",
                "test_accuracy",
                "bayes_accuracy",
                "final_loss",
                "angle_median_before",
                "angle_median_after",
                "ratio_median_before",
                "ratio_median_after",
                "triple_ratio_before",
                "triple_ratio_after",
                "path_argmax",
                "path_crossing",
            ],
            &run_rows,
        )?;
        out.csv(
            "probes.csv",
            &["run", "probe", "x_1", "x_2", "excluded", "angle_before", "angle_after", "ratio_before", "ratio_after"],
            &probe_rows,
        )?;
        out.csv("loss.csv", &["run", "epoch", "loss"], &loss_rows)?;
        out.csv("costs.csv", &["run", "epoch", "total", "std_err"], &cost_rows)?;
        let mut h: Vec<String> = ["run", "t", "arc_length", "x_1", "x_2"].map(String::from).to_vec();
        h.extend(numbered("post", 3));
        h.extend(numbered("g", 3));
        h.extend(["fisher_before", "fisher", "cosine_proxy"].map(String::from));
        out.csv("path.csv", &h, &path_rows)?;
        out.json("net.json", &Checkpoint::new(self, &results[0].train.net))?;

        let accuracy: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
        let triple_after: Vec<f64> = results.iter().map(|r| r.triple.1).collect();
        // late checkpoints sit on a plateau, so rises within 3 combined errors are noise
        let monotone = results
            .iter()
            .filter(|r| {
                r.costs.windows(2).all(|w| {
                    let (a, b) = (&w[0].1, &w[1].1);
                    b.value < a.value + 3.0 * a.std_err.hypot(b.std_err)
                })
            })
            .count();
        Ok(json!({
            "bayes_accuracy": bayes,
            "test_accuracy": accuracy,
            "max_accuracy_gap": accuracy.iter().map(|a| (bayes - a).abs()).fold(0.0, f64::max),
            "probes_used": ang_a.len(),
            "angle_median_before": median(&ang_b),
            "angle_median_after": median(&ang_a),
            "ratio_median_before": median(&rat_b),
            "ratio_median_after": median(&rat_a),
            "triple_ratio_median_after": median(&triple_after),
            "path_crossing": crossing,
            "path_argmax": results.iter().map(|r| r.fisher_after.argmax()).collect::<Vec<_>>(),
            "runs_with_decreasing_cost": monotone,
        }))
    }
}
