use std::hint::black_box;

use catgeom::allocate::{solve_general, Multiplier};
use catgeom::catfisher::fisher_cat;
use catgeom::infomeasure::{grid_for_model, mi_yr};
use catgeom::nettrain::{fisher_code_net, train_sgd};
use catgeom::{
    Activation, AllocationProblem, CategoryModel, Constraint, Dataset, MCConfig, MLPModel, NetNoise, NoiseSpec,
    PopulationCode, QTag, TabulatedPsi, TrainConfig, VarianceLink, Vector,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn net() -> MLPModel {
    let noise = NetNoise { sigma: 0.3, link: VarianceLink::Rate };
    MLPModel::new(&[2, 32, 32, 3], &[Activation::Sigmoid; 2], noise, 0).unwrap()
}

fn fisher(c: &mut Criterion) {
    let model = CategoryModel::three_gaussians(0.5).unwrap();
    let x = Vector::from_vec(vec![0.3, -0.2]);
    c.bench_function("fisher_cat three gaussians", |b| b.iter(|| fisher_cat(&model, black_box(&x)).unwrap()));
    let n = net();
    c.bench_function("fisher_code_net 2x32", |b| b.iter(|| fisher_code_net(&n, black_box(&x)).unwrap()));
}

fn mutual_information(c: &mut Criterion) {
    let model = CategoryModel::diagonal_pair(1.0, 1.0, &Vector::from_vec(vec![1.0])).unwrap();
    let noise = NoiseSpec::GaussianAdditiveIid { sigma: 0.5, q: QTag::Gaussian };
    let code = PopulationCode::sigmoid_ramps_1d(64, -5.0, 5.0, 0.5, 1.0, noise).unwrap();
    let grid = grid_for_model(&model, 201).unwrap();
    let mc = MCConfig { outer_samples: 2000, inner_samples: 1, chunk_size: 500, seed: 1 };
    let mut g = c.benchmark_group("mi");
    g.sample_size(10);
    g.bench_function("mi_yr N=64, 2000 samples", |b| b.iter(|| mi_yr(&model, &code, &mc, &grid).unwrap()));
    g.finish();
}

fn allocation(c: &mut Criterion) {
    let knots = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (4.0, 3.0), (100.0, 50.0)];
    let psi = TabulatedPsi::from_piecewise_linear_h(&knots, 1e-4, 90.0, 6000).unwrap();
    let n = 401;
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] /= 2.0;
    w[n - 1] /= 2.0;
    let problem = AllocationProblem {
        x: (0..n).map(|i| i as f64 * h).collect(),
        w,
        p: vec![1.0; n],
        fcat: (0..n).map(|i| 2.0 * i as f64 * h).collect(),
        constraint: Constraint::Tabulated { psi },
        multiplier: Multiplier::Lambda(0.5),
        budget: None,
        reference: None,
    };
    c.bench_function("solve_general two-branch 401", |b| b.iter(|| solve_general(black_box(&problem)).unwrap()));
}

fn training(c: &mut Criterion) {
    let model = CategoryModel::three_gaussians(0.5).unwrap();
    let data = Dataset::from_model(&model, 3000, 1);
    let start = net();
    let cfg = TrainConfig { epochs: 1, momentum: 0.9, ..Default::default() };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("train_sgd one epoch, 3000 points", |b| b.iter(|| train_sgd(&start, &data, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, fisher, mutual_information, allocation, training);
criterion_main!(benches);
