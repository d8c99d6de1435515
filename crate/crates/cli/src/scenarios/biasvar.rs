use catgeom::nettrain::{bias_variance, decompose_cost, train_sgd};
use catgeom::neurocode::VarianceLink;
use catgeom::{Activation, CategoryModel, Dataset, MCConfig, MLPModel, NetNoise, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, positive, seeded, v, ModelSource};
use crate::{row, RunOutput, Scenario};

/// Cost decompositions of a small trained net, once per coding-noise level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Biasvar {
    pub model: ModelSource,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub link: VarianceLink,
    /// Coding-noise levels; a net is trained at each.
    pub sigmas: Vec<f64>,
    pub train_size: usize,
    /// Its seed is replaced by the scenario seed.
    pub train: TrainConfig,
    pub mc: MCConfig,
    pub seed: u64,
}

impl Default for Biasvar {
    fn default() -> Self {
        Biasvar {
            model: ModelSource::Inline(CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).expect("valid model")),
            hidden: vec![8],
            activation: Activation::Sigmoid,
            link: VarianceLink::Rate,
            sigmas: vec![0.3, 0.02],
            train_size: 2000,
            train: TrainConfig { epochs: 30, momentum: 0.9, ..Default::default() },
            mc: MCConfig { outer_samples: 20000, inner_samples: 32, chunk_size: 2000, seed: 0 },
            seed: 2,
        }
    }
}

impl Scenario for Biasvar {
    seeded!();

    fn inputs(&self) -> Vec<std::path::PathBuf> {
        self.model.inputs()
    }

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        at_least("hidden layers", self.hidden.len(), 1)?;
        at_least("sigmas", self.sigmas.len(), 1)?;
        let model = self.model.load()?;
        let data = Dataset::from_model(&model, self.train_size, self.seed.wrapping_add(10));
        let mut dims = vec![model.dim()];
        dims.extend(&self.hidden);
        dims.push(model.num_classes());
        let mut rows = Vec::new();
        let mut cases = Vec::new();
        for &sigma in &self.sigmas {
            positive("sigma", sigma)?;
            let net = MLPModel::new(&dims, &vec![self.activation; self.hidden.len()], NetNoise { sigma, link: self.link }, self.seed)?;
            let net = train_sgd(&net, &data, &TrainConfig { seed: self.seed, ..self.train.clone() })?.net;
            let d = decompose_cost(&model, &net, &MCConfig { seed: self.seed.wrapping_add(1), ..self.mc })?;
            let bv = bias_variance(&model, &net, &MCConfig { seed: self.seed.wrapping_add(3), ..self.mc })?;
            for (name, e) in [
                ("total", &d.total),
                ("coding", &d.coding),
                ("decoding", &d.decoding),
                ("decoding_direct", &d.decoding_direct),
                ("mismatch", &d.mismatch),
                ("bv_total", &bv.total),
                ("manifold", &bv.manifold),
                ("bias", &bv.bias),
                ("variance", &bv.variance),
            ] {
                rows.push(row![sigma, name, e.value, e.std_err]);
            }
            let j = &bv.jensen;
            for (name, x) in [("epsilon", j.epsilon), ("var_u", j.var_u), ("jensen_lower", j.lower), ("jensen_upper", j.upper)] {
                rows.push(row![sigma, name, x, None::<f64>]);
            }
            cases.push(json!({ "sigma": sigma, "decomposition": d, "bias_variance": bv }));
        }
        out.csv("biasvar.csv", &["sigma", "term", "value", "std_err"], &rows)?;
        Ok(json!({ "cases": cases }))
    }
}
