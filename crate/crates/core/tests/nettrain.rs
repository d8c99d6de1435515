use catgeom::catfisher::fisher_cat;
use catgeom::infomeasure::{grid_for_model, mi_yx, InnerPosterior, NoisyCode};
use catgeom::nettrain::*;
use catgeom::neurocode::{fisher_code, NoiseSpec, QTag, Unit, VarianceLink};
use catgeom::*;
use proptest::prelude::*;
use rand::RngCore;

fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

fn rate(sigma: f64) -> NetNoise {
    NetNoise { sigma, link: VarianceLink::Rate }
}

fn pair_1d() -> CategoryModel {
    CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).unwrap()
}

fn trained_1d(sigma: f64, seed: u64) -> MLPModel {
    let model = pair_1d();
    let net = MLPModel::new(&[1, 8, 2], &[Activation::Sigmoid], rate(sigma), seed).unwrap();
    let data = Dataset::from_model(&model, 2000, seed + 10);
    let cfg = TrainConfig { epochs: 30, momentum: 0.9, seed, ..Default::default() };
    train_sgd(&net, &data, &cfg).unwrap().net
}

#[test]
fn separable_blobs_are_learned() {
    let model = CategoryModel::diagonal_pair(1.0, 0.3, &v(&[2.0, 0.0])).unwrap();
    let data = Dataset::from_model(&model, 1000, 3);
    let net = MLPModel::new(&[2, 8, 2], &[Activation::Sigmoid], rate(0.1), 1).unwrap();
    let res = train_sgd(&net, &data, &TrainConfig { epochs: 50, seed: 2, ..Default::default() }).unwrap();
    assert!(res.net.accuracy(&data).unwrap() > 0.99);
    assert!(res.loss.last().unwrap() < &res.loss[0]);
}

#[test]
fn relu_pattern_is_scale_invariant_without_bias() {
    let mut net = MLPModel::new(&[2, 12, 10, 3], &[Activation::Relu, Activation::Relu], rate(0.1), 5).unwrap();
    for l in net.layers_mut() {
        l.bias.fill(0.0);
    }
    let x = v(&[0.7, -0.4]);
    let pattern = |x: &Vector| net.coding_mean(x).map(|f| (f > 0.0) as u8 as f64);
    let p0 = pattern(&x);
    for t in [0.9, 1.0 + 1e-6, 1.1, 3.0] {
        assert_eq!(pattern(&(&x * t)), p0);
    }
}

#[test]
fn net_mimicking_a_sigmoid_population_has_its_fisher() {
    let centers = [-1.0, -0.3, 0.2, 0.9];
    let width = 0.4;
    let units: Vec<Unit> = centers.iter().map(|c| Unit::sigmoid(vec![*c, 0.0], width, 1.0)).collect();
    let noise = NoiseSpec::MultiplicativeGaussian { sigma: 0.3, link: VarianceLink::Rate, q: QTag::Gaussian };
    let code = PopulationCode::new(units, noise).unwrap();
    let w = Matrix::from_fn(4, 2, |_, j| if j == 0 { 1.0 / width } else { 0.0 });
    let b = Vector::from_iterator(4, centers.iter().map(|c| -c / width));
    let net = MLPModel::from_layers(
        vec![
            nettrain::Layer { weights: w, bias: b },
            nettrain::Layer { weights: Matrix::zeros(2, 4), bias: Vector::zeros(2) },
        ],
        &[Activation::Sigmoid],
        rate(0.3),
    )
    .unwrap();
    for x in [v(&[0.0, 0.0]), v(&[-0.7, 1.0]), v(&[1.3, -2.0])] {
        let a = fisher_code(&code, &x).unwrap();
        let b = fisher_code_net(&net, &x).unwrap();
        assert!((a.entries() - b.entries()).amax() < 1e-12 * a.entries().amax(), "{} vs {}", a.entries(), b.entries());
    }
}

#[test]
fn zero_net_costs_the_posterior_divergence_from_uniform() {
    let model = CategoryModel::three_gaussians(0.5).unwrap();
    let mut net = MLPModel::new(&[2, 6, 3], &[Activation::Sigmoid], rate(0.3), 0).unwrap();
    for l in net.layers_mut() {
        l.weights.fill(0.0);
        l.bias.fill(0.0);
    }
    let mc = MCConfig { outer_samples: 20000, chunk_size: 2000, seed: 4, ..Default::default() };
    let total = total_cost(&model, &net, &net, &mc).unwrap();
    let grid = grid_for_model(&model, 201).unwrap();
    // KL(P(Y|x) ‖ uniform) averages to ln M - H[Y|X] = ln M - H[Y] + I[Y,X]
    let expect = mi_yx(&model, &grid).unwrap().estimate;
    assert!(total.value > 0.0);
    assert!((total.value - expect).abs() < 4.0 * total.std_err + 1e-3, "{} ± {} vs {expect}", total.value, total.std_err);
}

/// A single noisy unit `r = x + σ z` read out by the exact posterior.
struct Identity1d(f64);

impl NoisyCode for Identity1d {
    fn input_dim(&self) -> usize {
        1
    }
    fn mean(&self, x: &Vector) -> Vector {
        x.clone()
    }
    fn sample_given_mean(&self, f: &Vector, rng: &mut dyn RngCore) -> Result<Vector> {
        use rand::Rng;
        Ok(f.map(|m| m + self.0 * rng.sample::<f64, _>(rand_distr::StandardNormal)))
    }
    fn log_likelihood_given_mean(&self, r: &Vector, f: &Vector) -> f64 {
        let z = (r[0] - f[0]) / self.0;
        -0.5 * z * z - self.0.ln()
    }
}

#[test]
fn optimal_decoder_has_no_decoding_cost() {
    let model = pair_1d();
    let code = Identity1d(0.5);
    let grid = grid_for_model(&model, 401).unwrap();
    let inner = InnerPosterior::new(&model, &code, &grid);
    let mc = MCConfig { outer_samples: 4000, chunk_size: 500, seed: 1, ..Default::default() };
    let d = decompose_cost_with(&model, &code, &inner, &mc, &grid).unwrap();
    assert!(d.decoding_direct.value.abs() < 1e-12);
    assert!(d.decoding.value.abs() < 3.0 * d.decoding.std_err.max(1e-12));
    assert!(d.coding.value > 0.0);
}

#[test]
fn trained_net_decomposes_consistently() {
    let model = pair_1d();
    let net = trained_1d(0.3, 2);
    let mc = MCConfig { outer_samples: 20000, inner_samples: 32, chunk_size: 2000, seed: 3 };
    let d = decompose_cost(&model, &net, &mc).unwrap();
    let comb = (d.decoding.std_err.powi(2) + d.decoding_direct.std_err.powi(2)).sqrt();
    assert!((d.decoding.value - d.decoding_direct.value).abs() < 3.0 * comb);
    let bv = bias_variance(&model, &net, &MCConfig { seed: 5, ..mc }).unwrap();
    let sum = bv.manifold.value + bv.bias.value + bv.variance.value;
    let se = (bv.manifold.std_err.powi(2) + d.total.std_err.powi(2)).sqrt();
    assert!((sum - d.total.value).abs() < 3.0 * se, "{sum} vs {}", d.total.value);
    assert!(bv.bias.value >= 0.0 && bv.variance.value >= 0.0);
}

#[test]
fn small_noise_variance_term_obeys_jensen_band() {
    let model = pair_1d();
    let net = trained_1d(0.02, 4);
    let mc = MCConfig { outer_samples: 4000, inner_samples: 64, chunk_size: 500, seed: 6 };
    let bv = bias_variance(&model, &net, &mc).unwrap();
    assert!(bv.jensen.epsilon < 0.5, "{}", bv.jensen.epsilon);
    assert!(bv.jensen.inside, "{:?} vs {}", bv.jensen, bv.variance.value);
    let tiny = bias_variance(&model, &net.with_noise(rate(1e-9)).unwrap(), &mc).unwrap();
    assert!(tiny.variance.value < 1e-12);
}

#[test]
fn trained_boundary_fisher_dominates_within_category() {
    let model = CategoryModel::three_gaussians(0.5).unwrap();
    let net = MLPModel::new(&[2, 32, 32, 3], &[Activation::Sigmoid, Activation::Sigmoid], rate(0.3), 0).unwrap();
    let data = Dataset::from_model(&model, 3000, 100);
    let cfg = TrainConfig { epochs: 300, momentum: 0.9, ..Default::default() };
    let trained = train_sgd(&net, &data, &cfg).unwrap().net;
    let top = |n: &MLPModel, x: &Vector| fisher_code_net(n, x).unwrap().top().0;
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let ray = |deg: f64, d: f64| {
        let t = deg.to_radians();
        v(&[d * t.cos(), d * t.sin()])
    };
    let boundary: Vec<Vector> = [30.0, 150.0, 270.0].iter().flat_map(|&a| (0..5).map(move |i| ray(a, 0.5 + 0.2 * i as f64))).collect();
    let within: Vec<Vector> = [90.0, 210.0, 330.0].iter().flat_map(|&a| (0..5).map(move |i| ray(a, 0.6 + 0.2 * i as f64))).collect();
    let ratio = |n: &MLPModel| {
        median(boundary.iter().map(|x| top(n, x)).collect()) / median(within.iter().map(|x| top(n, x)).collect())
    };
    assert!(ratio(&trained) >= 5.0, "{}", ratio(&trained));

    // a path between the two classes at 90 and 210 degrees
    let probe = PathProbe::linear(&ray(90.0, 1.0), &ray(210.0, 1.0), 31).unwrap();
    let pf = fisher_along_path(&trained, &probe).unwrap();
    let crossing = probe
        .points
        .iter()
        .map(|x| (model.posterior(x).unwrap()[0] - 0.5).abs())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert!((pf.argmax() as i64 - crossing as i64).abs() <= 2, "{} vs {crossing}", pf.argmax());
    let fc = fisher_cat(&model, &probe.points[crossing]).unwrap();
    assert!(fc.top().0 > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn net_fisher_is_psd_with_rank_at_most_input_dim(seed in 0u64..500, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, relu in any::<bool>()) {
        let act = if relu { Activation::Relu } else { Activation::Sigmoid };
        let link = if relu { VarianceLink::Constant } else { VarianceLink::Rate };
        let net = MLPModel::new(&[2, 9, 11, 3], &[act, act], NetNoise { sigma: 0.3, link }, seed).unwrap();
        let f = fisher_code_net(&net, &v(&[x0, x1])).unwrap();
        prop_assert!(f.eigenvalues().iter().all(|l| *l >= -1e-10 * f.eigenvalues()[0].abs().max(1e-300)));
        prop_assert!(f.rank() <= 2);
    }

    #[test]
    fn softmax_is_normalized(seed in 0u64..500, x0 in -50.0f64..50.0, x1 in -50.0f64..50.0) {
        let net = MLPModel::new(&[2, 7, 4], &[Activation::Relu], NetNoise { sigma: 0.5, link: VarianceLink::Rate }, seed).unwrap();
        let p = net.forward(&v(&[x0, x1]), Some(seed)).unwrap().output;
        prop_assert!((p.sum() - 1.0).abs() < 1e-10);
    }
}
