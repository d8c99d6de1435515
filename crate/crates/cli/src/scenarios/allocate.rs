use catgeom::allocate::{grid_minimize, solve_entropic, solve_general, solve_power_law, Multiplier, Profile};
use catgeom::{AllocationProblem, Constraint, Error, Result, TabulatedPsi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, positive, seeded};
use crate::{row, RunOutput, Scenario};

/// Constraint with a piecewise-linear `u² Ψ'(u)` that rises, dips and rises
/// again, so the optimal profile switches branch once.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBranch {
    /// `(u, u² Ψ'(u))` knots, starting at the origin.
    pub knots: Vec<(f64, f64)>,
    pub table_range: (f64, f64),
    pub table_points: usize,
    pub lambda: f64,
    /// `F_cat` runs linearly from 0 to this value across the grid.
    pub fcat_max: f64,
    pub nodes: Vec<usize>,
}

impl Default for TwoBranch {
    fn default() -> Self {
        TwoBranch {
            knots: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (4.0, 3.0), (100.0, 50.0)],
            table_range: (1e-4, 90.0),
            table_points: 6000,
            lambda: 0.5,
            fcat_max: 2.0,
            nodes: vec![201, 401],
        }
    }
}

/// Closed-form allocations checked against direct per-node minimization on a
/// random `F_cat` profile, plus a two-branch tabulated constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Allocate {
    pub nodes: usize,
    /// `log10 F_cat` is drawn uniformly from this range.
    pub log10_fcat_range: (f64, f64),
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
    pub two_branch: TwoBranch,
    /// Extra problem solved with the method matching its constraint.
    pub problem: Option<AllocationProblem>,
    pub seed: u64,
}

impl Default for Allocate {
    fn default() -> Self {
        Allocate {
            nodes: 1000,
            log10_fcat_range: (-3.0, 2.0),
            alpha: 2.0,
            lambda: 0.3,
            beta: 1.7,
            two_branch: TwoBranch::default(),
            problem: None,
            seed: 1,
        }
    }
}

/// Unit interval with trapezoid weights and uniform density.
fn unit_problem(fcat: Vec<f64>, constraint: Constraint, multiplier: Multiplier) -> AllocationProblem {
    let n = fcat.len();
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] /= 2.0;
    w[n - 1] /= 2.0;
    AllocationProblem {
        x: (0..n).map(|i| i as f64 * h).collect(),
        w,
        p: vec![1.0; n],
        fcat,
        constraint,
        multiplier,
        budget: None,
        reference: None,
    }
}

fn rows(p: &AllocationProblem, prof: &Profile) -> Vec<Vec<crate::Cell>> {
    (0..p.x.len()).map(|i| row![p.x[i], p.p[i], p.fcat[i], prof.fcode[i], prof.branch[i]]).collect()
}

const HEADER: [&str; 5] = ["x", "p", "fcat", "fcode", "branch_id"];

fn max_rel_dev(a: &Profile, b: &Profile) -> f64 {
    a.fcode
        .iter()
        .zip(&b.fcode)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| (x - y).abs() / x)
        .fold(0.0, f64::max)
}

impl Scenario for Allocate {
    seeded!();

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        at_least("nodes", self.nodes, 2)?;
        positive("alpha", self.alpha)?;
        positive("lambda", self.lambda)?;
        positive("beta", self.beta)?;
        let (lo, hi) = self.log10_fcat_range;
        if !(lo <= hi) {
            return Err(Error::InvalidArgument("log10_fcat_range must be ordered".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let fcat: Vec<f64> = (0..self.nodes).map(|_| 10f64.powf(if lo < hi { rng.random_range(lo..hi) } else { lo })).collect();

        let pl = unit_problem(fcat.clone(), Constraint::PowerLaw { alpha: self.alpha }, Multiplier::Lambda(self.lambda));
        let (pl_closed, pl_grid) = (solve_power_law(&pl)?, grid_minimize(&pl)?);
        out.csv("power_law.csv", &HEADER, &rows(&pl, &pl_closed))?;
        out.csv("power_law_grid.csv", &HEADER, &rows(&pl, &pl_grid))?;

        let en = unit_problem(fcat, Constraint::Entropic, Multiplier::Beta(self.beta));
        let (en_closed, en_grid) = (solve_entropic(&en)?, grid_minimize(&en)?);
        out.csv("entropic.csv", &HEADER, &rows(&en, &en_closed))?;
        out.csv("entropic_grid.csv", &HEADER, &rows(&en, &en_grid))?;

        let tb = &self.two_branch;
        at_least("two-branch nodes", tb.nodes.len(), 1)?;
        let psi = TabulatedPsi::from_piecewise_linear_h(&tb.knots, tb.table_range.0, tb.table_range.1, tb.table_points)?;
        let mut branches = Vec::new();
        for &n in &tb.nodes {
            at_least("two-branch nodes", n, 2)?;
            let fc = (0..n).map(|i| tb.fcat_max * i as f64 / (n - 1) as f64).collect();
            let p = unit_problem(fc, Constraint::Tabulated { psi: psi.clone() }, Multiplier::Lambda(tb.lambda));
            let prof = solve_general(&p)?;
            out.csv(&format!("two_branch_{n}.csv"), &HEADER, &rows(&p, &prof))?;
            branches.push(json!({
                "nodes": n,
                "jumps": prof.jumps,
                "jump_x": prof.jumps.iter().map(|&j| p.x[j]).collect::<Vec<_>>(),
            }));
        }

        let custom = match &self.problem {
            Some(p) => {
                let prof = match p.constraint {
                    Constraint::PowerLaw { .. } => solve_power_law(p)?,
                    Constraint::Entropic => solve_entropic(p)?,
                    Constraint::Tabulated { .. } => solve_general(p)?,
                };
                out.csv("problem.csv", &HEADER, &rows(p, &prof))?;
                json!({ "lambda": prof.lambda, "jumps": prof.jumps, "objective": p.objective(&prof.fcode, prof.lambda) })
            }
            None => Value::Null,
        };
        Ok(json!({
            "power_law_max_rel_dev": max_rel_dev(&pl_closed, &pl_grid),
            "entropic_max_rel_dev": max_rel_dev(&en_closed, &en_grid),
            "two_branch": branches,
            "problem": custom,
        }))
    }
}
