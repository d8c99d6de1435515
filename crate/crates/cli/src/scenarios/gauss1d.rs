use catgeom::catfisher::{fcat_binary, gauss1d_summary};
use catgeom::{CategoryModel, Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, positive, seeded, v};
use crate::{row, RunOutput, Scenario};

/// Sweep of the 1-D pair `N(-c, σ²)` vs `N(c, a²σ²)` over `a` and `σ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gauss1d {
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub c: f64,
    pub x_range: (f64, f64),
    /// Profile points per `(a, σ)` case.
    pub nodes: usize,
    pub seed: u64,
}

impl Default for Gauss1d {
    fn default() -> Self {
        Gauss1d { a: vec![1.0, 1.5, 2.0], sigma: vec![0.6, 1.0], c: 1.0, x_range: (-5.0, 5.0), nodes: 1001, seed: 0 }
    }
}

impl Scenario for Gauss1d {
    seeded!();

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        at_least("nodes", self.nodes, 2)?;
        positive("c", self.c)?;
        if !(self.x_range.0 < self.x_range.1) {
            return Err(Error::InvalidArgument("x_range must be increasing".into()));
        }
        let mut profile = Vec::new();
        let mut table = Vec::new();
        let mut cases = Vec::new();
        for &a in &self.a {
            for &s in &self.sigma {
                let sum = gauss1d_summary(a, s, self.c)?;
                let model = CategoryModel::diagonal_pair(a, s, &v(&[self.c]))?;
                let (lo, hi) = self.x_range;
                for i in 0..self.nodes {
                    let x = lo + (hi - lo) * i as f64 / (self.nodes - 1) as f64;
                    let p = v(&[x]);
                    let comps = model.components();
                    let pm = comps[0].log_density(&p).exp();
                    let pp = comps[1].log_density(&p).exp();
                    let post = model.posterior(&p)?;
                    let odds = model.log_odds_full(&p)?;
                    profile.push(row![
                        a,
                        s,
                        x,
                        pm,
                        pp,
                        model.density(&p),
                        post[0],
                        post[1],
                        odds.value,
                        odds.grad[0],
                        fcat_binary(&odds)
                    ]);
                }
                table.push(row![
                    a,
                    s,
                    self.c,
                    sum.x_b_plus,
                    sum.x_b_minus,
                    sum.x_cat_plus,
                    sum.x_cat_minus,
                    sum.z_b,
                    sum.z,
                    sum.density_x_b_plus,
                    sum.density_x_cat_plus
                ]);
                cases.push(sum);
            }
        }
        out.csv(
            "gauss1d_profiles.csv",
            &["a", "sigma", "x", "p_minus", "p_plus", "density", "post_minus", "post_plus", "log_odds", "dlog_odds", "f_cat"],
            &profile,
        )?;
        out.csv(
            "gauss1d_summary.csv",
            &[
                "a",
                "sigma",
                "c",
                "x_b_plus",
                "x_b_minus",
                "x_cat_plus",
                "x_cat_minus",
                "z_b",
                "z",
                "density_x_b_plus",
                "density_x_cat_plus",
            ],
            &table,
        )?;
        Ok(json!({ "cases": cases }))
    }
}
