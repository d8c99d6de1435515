use catgeom::allocate::{
    grid_minimize, solve_entropic, solve_general, solve_power_law, AllocationProblem, Constraint, Multiplier, TabulatedPsi,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOTS: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (4.0, 3.0), (100.0, 50.0)];

fn problem(fcat: Vec<f64>, constraint: Constraint, multiplier: Multiplier) -> AllocationProblem {
    let n = fcat.len();
    let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] /= 2.0;
    w[n - 1] /= 2.0;
    AllocationProblem { x, w, p: vec![1.0; n], fcat, constraint, multiplier, budget: None, reference: None }
}

fn random_fcat(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 10f64.powf(rng.random_range(-3.0..2.0))).collect()
}

fn two_branch() -> Constraint {
    Constraint::Tabulated { psi: TabulatedPsi::from_piecewise_linear_h(&KNOTS, 1e-4, 90.0, 6000).unwrap() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn power_law_matches_brute_force() {
    let p = problem(random_fcat(1000, 1), Constraint::PowerLaw { alpha: 2.0 }, Multiplier::Lambda(0.3));
    let a = solve_power_law(&p).unwrap();
    let b = grid_minimize(&p).unwrap();
    for (x, y) in a.fcode.iter().zip(&b.fcode) {
        assert!(rel(*y, *x) < 1e-6, "{x} {y}");
    }
}

#[test]
fn entropic_matches_brute_force_and_tabulated_log() {
    let fc = random_fcat(500, 2);
    let p = problem(fc.clone(), Constraint::Entropic, Multiplier::Beta(1.7));
    let a = solve_entropic(&p).unwrap();
    let b = grid_minimize(&p).unwrap();
    let u: Vec<f64> = (0..400).map(|i| 1e-5 * 1.05f64.powi(i)).collect();
    let psi: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let tab = problem(fc.clone(), Constraint::Tabulated { psi: TabulatedPsi::from_samples(&u, &psi).unwrap() }, Multiplier::Beta(1.7));
    let c = solve_general(&tab).unwrap();
    for i in 0..fc.len() {
        assert!((a.fcode[i] - 1.7 * fc[i]).abs() < 1e-12 * a.fcode[i]);
        assert!(rel(b.fcode[i], a.fcode[i]) < 1e-6);
        assert!(rel(c.fcode[i], a.fcode[i]) < 1e-8);
    }
}

#[test]
fn beta_scaling_keeps_shape() {
    // β = β0/σ² with the categorical Fisher scaling as 1/σ²
    let base = random_fcat(200, 3);
    let beta0 = 0.8;
    let mut shapes = Vec::new();
    for s2 in [1.0, 0.5] {
        let fc: Vec<f64> = base.iter().map(|v| v / s2).collect();
        let prof = solve_entropic(&problem(fc, Constraint::Entropic, Multiplier::Beta(beta0 / s2))).unwrap();
        let total: f64 = prof.fcode.iter().sum();
        shapes.push(prof.fcode.iter().map(|v| v / total).collect::<Vec<_>>());
    }
    for (a, b) in shapes[0].iter().zip(&shapes[1]) {
        assert!(rel(*b, *a) < 1e-12);
    }
}

/// `Ψ(b) - Ψ(a)` for the piecewise-linear `u² Ψ'` of `KNOTS`, by direct integration.
fn psi_diff(a: f64, b: f64) -> f64 {
    let n = 200_000;
    let h = (b.ln() - a.ln()) / n as f64;
    let f = |t: f64| {
        let u = f64::exp(t);
        let k = KNOTS.windows(2).find(|w| u <= w[1].0).unwrap();
        let hu = k[0].1 + (k[1].1 - k[0].1) * (u - k[0].0) / (k[1].0 - k[0].0);
        hu / u
    };
    (0..n).map(|i| f(a.ln() + (i as f64 + 0.5) * h) * h).sum()
}

/// Target value of `v` where the two increasing branches cost the same (λ = 1/2).
fn jump_target() -> f64 {
    let gap = |v: f64| {
        let u0 = v;
        let u1 = (v + 2.0) / 1.25;
        (v / (2.0 * u1) - v / (2.0 * u0)) + 0.5 * psi_diff(u0, u1)
    };
    let (mut lo, mut hi) = (0.5 + 1e-9, 1.0 - 1e-9);
    assert!(gap(lo) > 0.0 && gap(hi) < 0.0);
    for _ in 0..60 {
        let m = 0.5 * (lo + hi);
        if gap(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn two_branch_jumps_once_at_equal_cost() {
    let v_star = jump_target();
    let vmax = 2.0;
    let mut locations = Vec::new();
    for n in [201, 401] {
        let fc: Vec<f64> = (0..n).map(|i| vmax * i as f64 / (n - 1) as f64).collect();
        let p = problem(fc, two_branch(), Multiplier::Lambda(0.5));
        let prof = solve_general(&p).unwrap();
        assert_eq!(prof.jumps.len(), 1, "{:?}", prof.jumps);
        let j = prof.jumps[0];
        assert_eq!(prof.branch[j - 1], Some(0));
        assert_eq!(prof.branch[j], Some(1));
        let dx = 1.0 / (n - 1) as f64;
        assert!((p.x[j] - v_star / vmax).abs() <= dx, "jump at {} vs {}", p.x[j], v_star / vmax);
        locations.push(p.x[j]);
    }
    assert!((locations[0] - locations[1]).abs() <= 1.0 / 200.0);
}

#[test]
fn root_outside_table_is_reported() {
    let u: Vec<f64> = (1..20).map(|i| i as f64).collect();
    let psi: Vec<f64> = u.iter().map(|v| v.ln()).collect();
    let p = problem(vec![1.0, 1e3], Constraint::Tabulated { psi: TabulatedPsi::from_samples(&u, &psi).unwrap() }, Multiplier::Lambda(0.5));
    assert!(matches!(solve_general(&p), Err(catgeom::Error::NoRoot { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn profile_increases_with_fcat(seed in 0u64..1000, alpha in 0.2f64..3.0, lam in 0.05f64..5.0) {
        let p = problem(random_fcat(60, seed), Constraint::PowerLaw { alpha }, Multiplier::Lambda(lam));
        let prof = solve_power_law(&p).unwrap();
        let mut idx: Vec<usize> = (0..60).collect();
        idx.sort_by(|a, b| p.fcat[*a].total_cmp(&p.fcat[*b]));
        for w in idx.windows(2) {
            prop_assert!(prof.fcode[w[1]] >= prof.fcode[w[0]]);
        }
    }

    #[test]
    fn perturbations_never_help(seed in 0u64..1000, alpha in 0.2f64..3.0) {
        let p = problem(random_fcat(50, seed), Constraint::PowerLaw { alpha }, Multiplier::Lambda(0.4));
        let prof = solve_power_law(&p).unwrap();
        let base = p.objective(&prof.fcode, prof.lambda);
        for i in 0..50 {
            for s in [0.99, 1.01] {
                let mut f = prof.fcode.clone();
                f[i] *= s;
                prop_assert!(p.objective(&f, prof.lambda) >= base - 1e-15 * base.abs());
            }
        }
    }

    #[test]
    fn two_branch_perturbations_never_help(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fc: Vec<f64> = (0..50).map(|_| rng.random_range(0.05..5.0)).collect();
        let p = problem(fc, two_branch(), Multiplier::Lambda(0.5));
        let prof = solve_general(&p).unwrap();
        for i in 0..50 {
            let c0 = p.node_cost(i, prof.fcode[i], 0.5);
            for s in [0.99, 1.01] {
                prop_assert!(p.node_cost(i, prof.fcode[i] * s, 0.5) >= c0 - 1e-12);
            }
        }
    }

    #[test]
    fn budget_holds(seed in 0u64..1000, alpha in 0.3f64..2.5, c in 0.05f64..20.0) {
        let mut p = problem(random_fcat(80, seed), Constraint::PowerLaw { alpha }, Multiplier::Lambda(1.0));
        p.budget = Some(c);
        let prof = solve_power_law(&p).unwrap();
        prop_assert!(rel(p.resource(&prof.fcode), c) < 1e-8);
    }

    #[test]
    fn ratio_constraint_is_proportional(seed in 0u64..1000, alpha in 0.3f64..2.5) {
        let fc = random_fcat(80, seed);
        let mut p = problem(fc.clone(), Constraint::PowerLaw { alpha }, Multiplier::Lambda(0.7));
        p.reference = Some(fc.clone());
        let prof = solve_power_law(&p).unwrap();
        let k = prof.fcode[0] / fc[0];
        for i in 0..fc.len() {
            prop_assert!(rel(prof.fcode[i], k * fc[i]) < 1e-8);
        }
        let g = solve_general(&p).unwrap();
        let kg = g.fcode[0] / fc[0];
        for i in 0..fc.len() {
            prop_assert!(rel(g.fcode[i], kg * fc[i]) < 1e-8);
        }
    }
}

#[test]
fn entropic_profile_gives_gap_of_half_inverse_beta() {
    use catgeom::catfisher::fisher_cat;
    use catgeom::infomeasure::{asymptotic_gap, grid_for_model};
    use catgeom::{CategoryModel, FisherMatrix, Matrix, Vector};

    let model = CategoryModel::diagonal_pair(1.0, 1.0, &Vector::from_vec(vec![1.0])).unwrap();
    let grid = grid_for_model(&model, 401).unwrap();
    let pts = grid.points();
    let xs: Vec<f64> = pts.iter().map(|(x, _)| x[0]).collect();
    let fcat: Vec<f64> = pts.iter().map(|(x, _)| fisher_cat(&model, x).unwrap().entries()[(0, 0)]).collect();
    let p = AllocationProblem {
        x: xs.clone(),
        w: pts.iter().map(|(_, w)| *w).collect(),
        p: pts.iter().map(|(x, _)| model.density(x)).collect(),
        fcat: fcat.clone(),
        constraint: Constraint::Entropic,
        multiplier: Multiplier::Beta(2.5),
        budget: None,
        reference: None,
    };
    let prof = solve_entropic(&p).unwrap();
    let field = |x: &Vector| {
        let i = xs.iter().position(|v| *v == x[0]).unwrap();
        Ok(FisherMatrix::new(Matrix::from_element(1, 1, prof.fcode[i])))
    };
    let gap = asymptotic_gap(&model, &field, &grid).unwrap();
    let mass: f64 = (0..xs.len()).filter(|&i| fcat[i] > 0.0).map(|i| p.w[i] * p.p[i]).sum();
    let expect = mass / (2.0 * 2.5) - 0.5 * gap.excluded_mass / 2.5;
    assert!((gap.delta - expect).abs() < 1e-10, "{} vs {expect}", gap.delta);
}
