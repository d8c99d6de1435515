use std::f64::consts::LN_2;

use catgeom::infomeasure::{asymptotic_gap, grid_for_model, mi_yr};
use catgeom::{CategoryModel, MCConfig, NoiseSpec, PopulationCode, QTag, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, loglog_slope, seeded, v, ModelSource};
use crate::{row, RunOutput, Scenario};

/// Coding cost `I[Y,X] - I[Y,R]` of sigmoid populations of growing size,
/// measured by Monte Carlo and compared with its large-N asymptote.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiValidate {
    pub model: ModelSource,
    pub n_values: Vec<usize>,
    /// Unit centers are evenly spaced over this interval.
    pub centers: (f64, f64),
    pub width: f64,
    pub max_rate: f64,
    pub noise: NoiseSpec,
    pub grid_nodes: usize,
    /// Its seed is replaced by the scenario seed.
    pub mc: MCConfig,
    pub seed: u64,
}

impl Default for MiValidate {
    fn default() -> Self {
        MiValidate {
            model: ModelSource::Inline(CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).expect("valid model")),
            n_values: vec![64, 128, 256, 512],
            centers: (-5.0, 5.0),
            width: 0.5,
            max_rate: 1.0,
            noise: NoiseSpec::GaussianAdditiveIid { sigma: 0.5, q: QTag::Gaussian },
            grid_nodes: 201,
            mc: MCConfig { outer_samples: 100_000, inner_samples: 1, chunk_size: 5000, seed: 0 },
            seed: 1,
        }
    }
}

impl Scenario for MiValidate {
    seeded!();

    fn inputs(&self) -> Vec<std::path::PathBuf> {
        self.model.inputs()
    }

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        at_least("n_values", self.n_values.len(), 1)?;
        let model = self.model.load()?;
        let grid = grid_for_model(&model, self.grid_nodes)?;
        let mc = MCConfig { seed: self.seed, ..self.mc };
        let mut rows = Vec::new();
        let mut estimates = Vec::new();
        let (mut gaps, mut asym) = (Vec::new(), Vec::new());
        for &n in &self.n_values {
            at_least("population size", n, 1)?;
            let code = PopulationCode::sigmoid_ramps_1d(n, self.centers.0, self.centers.1, self.width, self.max_rate, self.noise.clone())?;
            let rep = mi_yr(&model, &code, &mc, &grid)?;
            let a = asymptotic_gap(&model, &code, &grid)?;
            rows.push(row![
                n,
                rep.i_yx,
                rep.i_yr.estimate,
                rep.i_yr.std_err,
                rep.i_yr_direct.estimate,
                rep.i_yr_direct.std_err,
                rep.gap,
                rep.gap_std_err,
                a.delta,
                rep.gap / a.delta,
                rep.gap / LN_2,
                a.excluded_mass,
                rep.refinement_change
            ]);
            estimates.push(json!({ "n": n, "i_yr": rep.i_yr, "i_yr_direct": rep.i_yr_direct }));
            gaps.push(rep.gap);
            asym.push(a.delta);
        }
        out.csv(
            "mi_validate.csv",
            &[
                "n",
                "i_yx",
                "i_yr",
                "i_yr_std_err",
                "i_yr_direct",
                "i_yr_direct_std_err",
                "gap",
                "gap_std_err",
                "asymptotic_gap",
                "ratio",
                "gap_bits",
                "excluded_mass",
                "refinement_change",
            ],
            &rows,
        )?;
        let ns: Vec<f64> = self.n_values.iter().map(|&n| n as f64).collect();
        let slope = if ns.len() >= 2 { loglog_slope(&ns, &gaps) } else { f64::NAN };
        Ok(json!({
            "slope": slope,
            "asymptotic_slope": if ns.len() >= 2 { loglog_slope(&ns, &asym) } else { f64::NAN },
            "ratio_at_largest_n": gaps.last().unwrap() / asym.last().unwrap(),
            "estimates": estimates,
        }))
    }
}
