//! Optimal neural Fisher profiles under a resource constraint: per node,
//! minimize `v/(2u) + λ Ψ(u)` with `v = F_cat` (or `F_cat / G` for a
//! reference profile `G`), optionally tuning `λ` to meet a budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monotone cubic Hermite interpolant of `Ψ` in `t = ln u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPsi {
    ln_u: Vec<f64>,
    psi: Vec<f64>,
    /// `dΨ/dt` at the nodes.
    slopes: Vec<f64>,
}

impl TabulatedPsi {
    /// Fritsch-Carlson slopes from the samples alone.
    pub fn from_samples(u: &[f64], psi: &[f64]) -> Result<Self> {
        let t = Self::check(u, psi)?;
        let slopes = pchip_slopes(&t, psi);
        Ok(TabulatedPsi { ln_u: t, psi: psi.to_vec(), slopes })
    }

    /// Hermite interpolant with known derivatives `Ψ'(u)` at the nodes.
    pub fn with_slopes(u: &[f64], psi: &[f64], dpsi: &[f64]) -> Result<Self> {
        let t = Self::check(u, psi)?;
        if dpsi.len() != u.len() {
            return Err(Error::DimMismatch { expected: u.len(), got: dpsi.len() });
        }
        let slopes = u.iter().zip(dpsi).map(|(u, d)| u * d).collect();
        Ok(TabulatedPsi { ln_u: t, psi: psi.to_vec(), slopes })
    }

    fn check(u: &[f64], psi: &[f64]) -> Result<Vec<f64>> {
        if u.len() < 2 || psi.len() != u.len() {
            return Err(Error::InvalidArgument("tabulated psi needs >= 2 matching samples".into()));
        }
        if u.iter().any(|v| !(*v > 0.0)) || u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("tabulated u must be positive and increasing".into()));
        }
        if psi.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("tabulated psi must be nondecreasing".into()));
        }
        Ok(u.iter().map(|v| v.ln()).collect())
    }

    /// Tabulation of `Ψ` whose `u² Ψ'(u)` is the piecewise-linear curve through
    /// `knots` (pairs `(u, h)` with increasing `u`, first knot at `u = 0, h = 0`),
    /// sampled at `n` log-spaced points on `[u_lo, u_hi]`.
    pub fn from_piecewise_linear_h(knots: &[(f64, f64)], u_lo: f64, u_hi: f64, n: usize) -> Result<Self> {
        if knots.len() < 2 || knots[0] != (0.0, 0.0) || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument("knots must start at (0, 0) with increasing u".into()));
        }
        if knots[1..].iter().any(|k| !(k.1 > 0.0)) || !(u_lo > 0.0) || !(u_hi > u_lo) || n < 2 {
            return Err(Error::InvalidArgument("need positive h and 0 < u_lo < u_hi".into()));
        }
        // h = m u + q on each piece; Ψ' = m/u + q/u², Ψ = m ln u - q/u + const
        let pieces: Vec<(f64, f64, f64, f64)> = knots
            .windows(2)
            .map(|w| {
                let m = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                (w[0].0, w[1].0, m, w[0].1 - m * w[0].0)
            })
            .collect();
        let piece_of = |u: f64| {
            pieces.iter().position(|p| u <= p.1).unwrap_or(pieces.len() - 1)
        };
        let prim = |p: &(f64, f64, f64, f64), u: f64| p.2 * u.ln() - p.3 / u;
        // constants making Ψ continuous, anchored at Ψ(u_lo) = 0
        let mut offset = vec![0.0; pieces.len()];
        let i0 = piece_of(u_lo);
        offset[i0] = -prim(&pieces[i0], u_lo);
        for i in i0 + 1..pieces.len() {
            let b = pieces[i].0;
            offset[i] = prim(&pieces[i - 1], b) + offset[i - 1] - prim(&pieces[i], b);
        }
        let us: Vec<f64> = (0..n).map(|i| u_lo * (u_hi / u_lo).powf(i as f64 / (n - 1) as f64)).collect();
        let mut psi = Vec::with_capacity(n);
        let mut dpsi = Vec::with_capacity(n);
        for &u in &us {
            let i = piece_of(u);
            psi.push(prim(&pieces[i], u) + offset[i]);
            dpsi.push((pieces[i].2 * u + pieces[i].3) / (u * u));
        }
        Self::with_slopes(&us, &psi, &dpsi)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.ln_u[0].exp(), self.ln_u[self.ln_u.len() - 1].exp())
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.ln_u.partition_point(|v| *v <= t);
        i.clamp(1, self.ln_u.len() - 1) - 1
    }

    /// `(Ψ, dΨ/dt)` at `t = ln u`.
    fn eval_t(&self, t: f64) -> (f64, f64) {
        let i = self.locate(t);
        let h = self.ln_u[i + 1] - self.ln_u[i];
        let s = (t - self.ln_u[i]) / h;
        let (y0, y1, d0, d1) = (self.psi[i], self.psi[i + 1], self.slopes[i], self.slopes[i + 1]);
        let (s2, s3) = (s * s, s * s * s);
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * h * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * h * d1;
        let dv = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * h * d0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * h * d1) / h;
        (v, dv)
    }

    pub fn psi(&self, u: f64) -> f64 {
        self.eval_t(u.ln()).0
    }

    pub fn dpsi(&self, u: f64) -> f64 {
        self.eval_t(u.ln()).1 / u
    }
}

fn pchip_slopes(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![del[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `Ψ(u) = u^α`.
    PowerLaw { alpha: f64 },
    /// `Ψ(u) = ln u`.
    Entropic,
    Tabulated { psi: TabulatedPsi },
}

impl Constraint {
    pub fn psi(&self, u: f64) -> f64 {
        match self {
            Constraint::PowerLaw { alpha } => u.powf(*alpha),
            Constraint::Entropic => u.ln(),
            Constraint::Tabulated { psi } => psi.psi(u),
        }
    }

    /// `u² Ψ'(u)`.
    pub fn h(&self, u: f64) -> f64 {
        match self {
            Constraint::PowerLaw { alpha } => alpha * u.powf(alpha + 1.0),
            Constraint::Entropic => u,
            Constraint::Tabulated { psi } => u * u * psi.dpsi(u),
        }
    }

    fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Constraint::Tabulated { psi } => Some(psi.domain()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    Lambda(f64),
    /// Information-bottleneck tradeoff; equivalent to `λ = 1/(2β)`.
    Beta(f64),
}

impl Multiplier {
    pub fn lambda(&self) -> f64 {
        match *self {
            Multiplier::Lambda(l) => l,
            Multiplier::Beta(b) => 1.0 / (2.0 * b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub x: Vec<f64>,
    /// Quadrature weights of the nodes.
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub fcat: Vec<f64>,
    pub constraint: Constraint,
    pub multiplier: Multiplier,
    /// When set, `λ` is tuned so that `Σ w p Ψ(F_code / G) = budget`.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Reference profile `G` inside `Ψ(F_code / G)`; unity when absent.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub fcode: Vec<f64>,
    /// Increasing branch of `u² Ψ'(u)` holding each node's solution.
    pub branch: Vec<Option<usize>>,
    pub lambda: f64,
    /// Indices of nodes that start a new branch.
    pub jumps: Vec<usize>,
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        for (name, len) in [("w", self.w.len()), ("p", self.p.len()), ("fcat", self.fcat.len())] {
            if len != n {
                return Err(Error::InvalidArgument(format!("{name} has {len} entries, x has {n}")));
            }
        }
        if let Some(g) = &self.reference {
            if g.len() != n || g.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("reference must be positive on every node".into()));
            }
        }
        if self.p.iter().any(|v| *v < 0.0) || self.fcat.iter().any(|v| *v < 0.0) || self.w.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("p, fcat and w must be nonnegative".into()));
        }
        let mass: f64 = self.w.iter().zip(&self.p).map(|(a, b)| a * b).sum();
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidArgument(format!("Σ w p = {mass}, expected 1")));
        }
        match &self.constraint {
            Constraint::PowerLaw { alpha } if !(*alpha > 0.0) => return Err(Error::InvalidArgument("alpha must be positive".into())),
            _ => {}
        }
        let lam = self.multiplier.lambda();
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(Error::InvalidArgument("multiplier must be positive".into()));
        }
        Ok(())
    }

    fn g(&self, i: usize) -> f64 {
        self.reference.as_ref().map_or(1.0, |g| g[i])
    }

    /// Per-node `v = F_cat / G`.
    pub fn v(&self, i: usize) -> f64 {
        self.fcat[i] / self.g(i)
    }

    /// Per-node cost `v/(2u) + λΨ(u)` at `u = F_code / G`.
    pub fn node_cost(&self, i: usize, fcode: f64, lambda: f64) -> f64 {
        let u = fcode / self.g(i);
        self.v(i) / (2.0 * u) + lambda * self.constraint.psi(u)
    }

    /// `Σ w p [F_cat/(2F_code) + λ Ψ]` over nodes with `F_cat > 0`.
    pub fn objective(&self, fcode: &[f64], lambda: f64) -> f64 {
        (0..self.x.len())
            .filter(|&i| self.fcat[i] > 0.0)
            .map(|i| self.w[i] * self.p[i] * self.node_cost(i, fcode[i], lambda))
            .sum()
    }

    /// `Σ w p Ψ(F_code / G)` over nodes with `F_cat > 0`.
    pub fn resource(&self, fcode: &[f64]) -> f64 {
        (0..self.x.len())
            .filter(|&i| self.fcat[i] > 0.0)
            .map(|i| self.w[i] * self.p[i] * self.constraint.psi(fcode[i] / self.g(i)))
            .sum()
    }
}

/// Solves with `λ` given, or bisects on `ln λ` to meet the budget.
fn with_budget<F>(problem: &AllocationProblem, solve: F) -> Result<Profile>
where
    F: Fn(f64) -> Result<Profile>,
{
    problem.validate()?;
    let Some(c) = problem.budget else {
        return solve(problem.multiplier.lambda());
    };
    // resource decreases as λ grows
    let excess = |ln_l: f64| -> Result<(f64, Profile)> {
        let prof = solve(ln_l.exp())?;
        Ok((problem.resource(&prof.fcode) - c, prof))
    };
    let mut lo = problem.multiplier.lambda().ln();
    let mut hi = lo;
    let (e0, p0) = excess(lo)?;
    if e0 == 0.0 {
        return Ok(p0);
    }
    if e0 > 0.0 {
        loop {
            hi += 2.0;
            if excess(hi)?.0 <= 0.0 {
                break;
            }
            if hi > 700.0 {
                return Err(Error::InvalidArgument("budget unreachable".into()));
            }
        }
    } else {
        loop {
            lo -= 2.0;
            if excess(lo)?.0 >= 0.0 {
                break;
            }
            if lo < -700.0 {
                return Err(Error::InvalidArgument("budget unreachable".into()));
            }
        }
    }
    let mut best = p0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let (e, prof) = excess(m)?;
        best = prof;
        if e.abs() <= 1e-13 * c.abs().max(1e-300) {
            break;
        }
        if e > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(best)
}

fn finish(problem: &AllocationProblem, lambda: f64, u: Vec<Option<f64>>, branch: Vec<Option<usize>>) -> Profile {
    let fcode: Vec<f64> = u.iter().enumerate().map(|(i, u)| u.map_or(0.0, |u| u * problem.g(i))).collect();
    let mut jumps = Vec::new();
    let mut last: Option<usize> = None;
    for (i, b) in branch.iter().enumerate() {
        if let Some(b) = b {
            if let Some(l) = last {
                if l != *b {
                    jumps.push(i);
                }
            }
            last = Some(*b);
        }
    }
    Profile { fcode, branch, lambda, jumps }
}

/// `F_code = G (v/(2αλ))^{1/(1+α)}`.
pub fn solve_power_law(problem: &AllocationProblem) -> Result<Profile> {
    let Constraint::PowerLaw { alpha } = problem.constraint else {
        return Err(Error::InvalidArgument("constraint is not a power law".into()));
    };
    with_budget(problem, |lambda| {
        let u = (0..problem.x.len())
            .map(|i| {
                let v = problem.v(i);
                (v > 0.0).then(|| (v / (2.0 * alpha * lambda)).powf(1.0 / (1.0 + alpha)))
            })
            .collect::<Vec<_>>();
        let branch = u.iter().map(|u| u.map(|_| 0)).collect();
        Ok(finish(problem, lambda, u, branch))
    })
}

/// `F_code = β F_cat` with `β = 1/(2λ)`.
pub fn solve_entropic(problem: &AllocationProblem) -> Result<Profile> {
    if problem.constraint != Constraint::Entropic {
        return Err(Error::InvalidArgument("constraint is not entropic".into()));
    }
    with_budget(problem, |lambda| {
        let u = (0..problem.x.len())
            .map(|i| {
                let v = problem.v(i);
                (v > 0.0).then(|| v / (2.0 * lambda))
            })
            .collect::<Vec<_>>();
        let branch = u.iter().map(|u| u.map(|_| 0)).collect();
        Ok(finish(problem, lambda, u, branch))
    })
}

/// Monotone pieces of `h(u) = u² Ψ'(u)` sampled at `ln u` nodes:
/// `(t_start, t_end, increasing)`.
fn monotone_pieces(c: &Constraint, ts: &[f64]) -> Vec<(f64, f64, bool)> {
    let hs: Vec<f64> = ts.iter().map(|t| c.h(t.exp())).collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut up = hs[1] >= hs[0];
    for k in 1..ts.len() - 1 {
        let next_up = hs[k + 1] >= hs[k];
        if next_up != up {
            pieces.push((ts[start], ts[k], up));
            start = k;
            up = next_up;
        }
    }
    pieces.push((ts[start], ts[ts.len() - 1], up));
    pieces
}

fn sample_ln_u(c: &Constraint) -> Vec<f64> {
    match c {
        Constraint::Tabulated { psi } => psi.ln_u.clone(),
        _ => (0..=2000).map(|i| -40.0 + 80.0 * i as f64 / 2000.0).collect(),
    }
}

/// Per-node root of `u² Ψ'(u) = v/(2λ)`, keeping the root of least per-node cost.
pub fn solve_general(problem: &AllocationProblem) -> Result<Profile> {
    let ts = sample_ln_u(&problem.constraint);
    let pieces = monotone_pieces(&problem.constraint, &ts);
    let inc_index: Vec<Option<usize>> = {
        let mut k = 0;
        pieces
            .iter()
            .map(|p| {
                if p.2 {
                    k += 1;
                    Some(k - 1)
                } else {
                    None
                }
            })
            .collect()
    };
    let c = &problem.constraint;
    with_budget(problem, |lambda| {
        let sols: Vec<Result<Option<(f64, Option<usize>)>>> = (0..problem.x.len())
            .into_par_iter()
            .map(|i| {
                let v = problem.v(i);
                if v <= 0.0 {
                    return Ok(None);
                }
                let target = v / (2.0 * lambda);
                let mut best: Option<(f64, f64, Option<usize>)> = None;
                for (pi, &(ta, tb, _)) in pieces.iter().enumerate() {
                    let (ha, hb) = (c.h(ta.exp()) - target, c.h(tb.exp()) - target);
                    if ha.signum() == hb.signum() && ha != 0.0 && hb != 0.0 {
                        continue;
                    }
                    let (mut a, mut b, fa) = (ta, tb, ha);
                    for _ in 0..200 {
                        let m = 0.5 * (a + b);
                        if m <= a || m >= b {
                            break;
                        }
                        let fm = c.h(m.exp()) - target;
                        if fm == 0.0 {
                            a = m;
                            b = m;
                            break;
                        }
                        if fm.signum() == fa.signum() {
                            a = m;
                        } else {
                            b = m;
                        }
                    }
                    let u = (0.5 * (a + b)).exp();
                    let cost = v / (2.0 * u) + lambda * c.psi(u);
                    let better = match best {
                        None => true,
                        Some((bu, bc, _)) => cost < bc || (cost == bc && u < bu),
                    };
                    if better {
                        best = Some((u, cost, inc_index[pi]));
                    }
                }
                match best {
                    Some((u, _, b)) => Ok(Some((u, b))),
                    None => Err(Error::NoRoot { target }),
                }
            })
            .collect();
        let mut u = Vec::with_capacity(sols.len());
        let mut branch = Vec::with_capacity(sols.len());
        for s in sols {
            let s = s?;
            u.push(s.map(|t| t.0));
            branch.push(s.and_then(|t| t.1));
        }
        Ok(finish(problem, lambda, u, branch))
    })
}

/// Lower bound of the brute-force search.
pub const GRID_MIN_U: f64 = 1e-8;

/// Independent oracle: per-node golden-section minimization of the cost in `ln u`.
pub fn grid_minimize(problem: &AllocationProblem) -> Result<Profile> {
    let c = &problem.constraint;
    with_budget(problem, |lambda| {
        let u: Vec<Option<f64>> = (0..problem.x.len())
            .into_par_iter()
            .map(|i| {
                let v = problem.v(i);
                let cost = |t: f64| {
                    let u = t.exp();
                    v / (2.0 * u) + lambda * c.psi(u)
                };
                let (lo, mut hi, fixed_hi) = match c.domain() {
                    Some((a, b)) => (a.max(GRID_MIN_U).ln(), b.ln(), true),
                    None => (GRID_MIN_U.ln(), 0.0, false),
                };
                loop {
                    let t = golden_min(&cost, lo, hi);
                    if fixed_hi || t < hi - 1.0 {
                        return Some(t.exp());
                    }
                    hi += 5.0;
                }
            })
            .collect();
        let branch = u.iter().map(|_| None).collect();
        Ok(finish(problem, lambda, u, branch))
    })
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-13 * (1.0 + a.abs().max(b.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
