use catgeom::categories::LatentEmbedding;
use catgeom::nettrain::{align_proxy, cosine_report, fisher_along_path, train_sgd, tuning_curves};
use catgeom::neurocode::VarianceLink;
use catgeom::{
    Activation, CategoryModel, Component, Dataset, Error, GaussianComponent, MLPModel, NetNoise, PathProbe, Result, TrainConfig,
    Vector,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, positive, seeded, v};
use crate::{row, RunOutput, Scenario};

/// Two latent Gaussian categories embedded nonlinearly in a higher-dimensional
/// input space; a net is trained on the embedded samples and probed along the
/// embedded segment joining the category centers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Continuum {
    pub latent_centers: [Vec<f64>; 2],
    pub latent_sigma: f64,
    pub ambient_dim: usize,
    pub embed_seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub noise: NetNoise,
    pub train_size: usize,
    /// Its seed is replaced per run.
    pub train: TrainConfig,
    pub runs: usize,
    pub path_points: usize,
    /// Minimum range of a tuning curve along the path for the unit to count as active.
    pub active_threshold: f64,
    /// The transition region is where the top net output is below this.
    pub transition_threshold: f64,
    pub seed: u64,
}

impl Default for Continuum {
    fn default() -> Self {
        Continuum {
            latent_centers: [vec![-1.0, 0.0], vec![1.0, 0.0]],
            latent_sigma: 0.4,
            ambient_dim: 20,
            embed_seed: 7,
            hidden: vec![32, 32],
            activation: Activation::Sigmoid,
            noise: NetNoise { sigma: 0.2, link: VarianceLink::Rate },
            train_size: 4000,
            train: TrainConfig { epochs: 300, momentum: 0.9, ..Default::default() },
            runs: 5,
            path_points: 31,
            active_threshold: 1e-2,
            transition_threshold: 0.9,
            seed: 0,
        }
    }
}

struct RunResult {
    accuracy: f64,
    fisher: Vec<f64>,
    fisher_arc: Vec<f64>,
    fisher_before: Vec<f64>,
    distances: Vec<f64>,
    pearson: f64,
    outputs: Vec<Vector>,
    curves: Vec<Vec<f64>>,
    /// Per unit: active, steepest segment, steepest segment inside the transition region.
    units: Vec<(bool, usize, bool)>,
}

fn mean_columns(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        for (a, x) in acc.iter_mut().zip(&r) {
            *a += x;
        }
        n += 1.0;
    }
    acc.iter().map(|a| a / n).collect()
}

impl Continuum {
    fn latent_model(&self) -> Result<CategoryModel> {
        let comps = self
            .latent_centers
            .iter()
            .map(|c| GaussianComponent::isotropic(v(c), self.latent_sigma * self.latent_sigma).map(Component::Gaussian))
            .collect::<Result<Vec<_>>>()?;
        CategoryModel::uniform(comps)
    }

    fn validate(&self) -> Result<()> {
        positive("latent_sigma", self.latent_sigma)?;
        at_least("hidden layers", self.hidden.len(), 1)?;
        at_least("runs", self.runs, 1)?;
        at_least("path_points", self.path_points, 3)?;
        at_least("train_size", self.train_size, 1)?;
        if self.latent_centers[0].len() != self.latent_centers[1].len() {
            return Err(Error::InvalidArgument("latent centers differ in dimension".into()));
        }
        self.train.validate()
    }

    fn one_run(&self, latent: &CategoryModel, emb: &LatentEmbedding, probe: &PathProbe, run: usize) -> Result<RunResult> {
        let seed = self.seed.wrapping_add(run as u64);
        let samples = latent.sample(self.train_size, self.seed.wrapping_add(50 + run as u64));
        let x = samples.iter().map(|(s, _)| emb.map(s)).collect::<Result<Vec<_>>>()?;
        let data = Dataset::new(x, samples.iter().map(|s| s.1).collect())?;
        let mut dims = vec![self.ambient_dim];
        dims.extend(&self.hidden);
        dims.push(2);
        let net = MLPModel::new(&dims, &vec![self.activation; self.hidden.len()], self.noise, seed)?;
        let trained = train_sgd(&net, &data, &TrainConfig { seed, ..self.train.clone() })?.net;
        let pf = fisher_along_path(&trained, probe)?;
        let before = fisher_along_path(&net, probe)?;
        let cr = cosine_report(&trained, probe)?;
        let outputs = probe.points.iter().map(|s| trained.forward(s, None).map(|f| f.output)).collect::<Result<Vec<_>>>()?;
        let top: Vec<f64> = outputs.iter().map(|g| g.max()).collect();
        let ids: Vec<usize> = (0..trained.coding_dim()).collect();
        let tc = tuning_curves(&trained, probe, &ids)?;
        let units = (0..ids.len())
            .map(|k| {
                let c = &tc.curves[k];
                let range = c.iter().copied().fold(f64::MIN, f64::max) - c.iter().copied().fold(f64::MAX, f64::min);
                let s = tc.steepest_segment(k);
                let inside = top[s] < self.transition_threshold || top[s + 1] < self.transition_threshold;
                (range >= self.active_threshold, s, inside)
            })
            .collect();
        Ok(RunResult {
            accuracy: trained.accuracy(&data)?,
            fisher: pf.per_index,
            fisher_arc: pf.per_arc,
            fisher_before: before.per_index,
            distances: cr.distances,
            pearson: cr.alignment.pearson,
            outputs,
            curves: tc.curves,
            units,
        })
    }
}

impl Scenario for Continuum {
    seeded!();

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        self.validate()?;
        let latent = self.latent_model()?;
        let ld = latent.dim();
        let emb = LatentEmbedding::random(ld, self.ambient_dim, self.embed_seed)?;
        let (a, b) = (v(&self.latent_centers[0]), v(&self.latent_centers[1]));
        let n = self.path_points;
        let lat_path: Vec<Vector> = (0..n).map(|i| &a + (&b - &a) * (i as f64 / (n - 1) as f64)).collect();
        let probe = PathProbe::new(emb.embed_continuum(&lat_path)?, Some((0, 1)))?;
        let truth: Vec<Vector> = lat_path.iter().map(|s| latent.posterior(s)).collect::<Result<_>>()?;
        let crossing = (0..n).min_by(|&i, &j| (truth[i][1] - 0.5).abs().total_cmp(&(truth[j][1] - 0.5).abs())).unwrap();
        let results = (0..self.runs)
            .into_par_iter()
            .map(|r| self.one_run(&latent, &emb, &probe, r))
            .collect::<Result<Vec<_>>>()?;

        let fisher = mean_columns(results.iter().map(|r| r.fisher.clone()));
        let fisher_arc = mean_columns(results.iter().map(|r| r.fisher_arc.clone()));
        let fisher_before = mean_columns(results.iter().map(|r| r.fisher_before.clone()));
        let distances = mean_columns(results.iter().map(|r| r.distances.clone()));
        let outputs = mean_columns(results.iter().map(|r| r.outputs.iter().flat_map(|g| g.iter().copied()).collect()));
        let mid: Vec<f64> = fisher.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let alignment = align_proxy(&distances, &mid)?;
        let argmax = (0..n).max_by(|&i, &j| fisher[i].total_cmp(&fisher[j])).unwrap();
        let arc = probe.arc_length();

        let path_rows: Vec<_> = (0..n)
            .map(|i| {
                row![
                    i,
                    arc[i],
                    lat_path[i][0],
                    lat_path.get(i).and_then(|p| p.get(1).copied()),
                    truth[i][0],
                    truth[i][1],
                    outputs[2 * i],
                    outputs[2 * i + 1],
                    fisher[i],
                    fisher_arc[i],
                    fisher_before[i]
                ]
            })
            .collect();
        out.csv(
            "path.csv",
            &["t", "arc_length", "latent_1", "latent_2", "post_1", "post_2", "g_1", "g_2", "fisher", "fisher_arc", "fisher_before"],
            &path_rows,
        )?;
        let cos_rows: Vec<_> = (0..n - 1)
            .map(|i| row![i, distances[i], mid[i], alignment.a * distances[i] + alignment.b])
            .collect();
        out.csv("cosine.csv", &["segment", "cosine_distance", "fisher_mid", "fitted"], &cos_rows)?;

        let mut tuning = Vec::new();
        let mut units = Vec::new();
        let mut run_rows = Vec::new();
        let (mut active, mut inside) = (0usize, 0usize);
        for (r, res) in results.iter().enumerate() {
            for (k, c) in res.curves.iter().enumerate() {
                for (t, f) in c.iter().enumerate() {
                    tuning.push(row![r, k, t, *f]);
                }
                let (act, s, ins) = res.units[k];
                units.push(row![r, k, act, s, ins]);
            }
            let ra = res.units.iter().filter(|u| u.0).count();
            let ri = res.units.iter().filter(|u| u.0 && u.2).count();
            active += ra;
            inside += ri;
            let am = (0..n).max_by(|&i, &j| res.fisher[i].total_cmp(&res.fisher[j])).unwrap();
            run_rows.push(row![r, self.seed.wrapping_add(r as u64), res.accuracy, am, res.pearson, ra, ri]);
        }
        out.csv("tuning.csv", &["run", "unit", "t", "f"], &tuning)?;
        out.csv("units.csv", &["run", "unit", "active", "steepest_segment", "inside_transition"], &units)?;
        out.csv("runs.csv", &["run", "seed", "train_accuracy", "fisher_argmax", "pearson", "active_units", "inside_units"], &run_rows)?;
        Ok(json!({
            "crossing": crossing,
            "fisher_argmax": argmax,
            "alignment": alignment,
            "pearson_per_run": results.iter().map(|r| r.pearson).collect::<Vec<_>>(),
            "active_units": active,
            "inside_units": inside,
            "inside_fraction": inside as f64 / active.max(1) as f64,
        }))
    }
}
