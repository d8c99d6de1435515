//! Categorical Fisher information, principal discriminant directions and
//! curves, boundaries and Fisher maxima.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::categories::{CategoryModel, LogOdds};
use crate::error::{Error, Flag, Result};
use crate::{Matrix, Vector};

/// Eigenvalues above this fraction of the top eigenvalue count toward the rank.
pub const RANK_REL_TOL: f64 = 1e-8;
/// Eigenvalues at or below this absolute level never count toward the rank.
pub const RANK_ABS_TOL: f64 = 1e-8;
/// Posteriors below this are dropped from the Fisher sum.
pub const POSTERIOR_FLOOR: f64 = 1e-300;

/// Symmetric PSD matrix with its eigensystem sorted by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    entries: Matrix,
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
    pub flags: Vec<Flag>,
}

impl FisherMatrix {
    pub fn new(m: Matrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Fisher matrix must be square");
        let entries = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(entries.clone());
        let mut order: Vec<usize> = (0..entries.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = Matrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
        FisherMatrix { entries, eigenvalues, eigenvectors, flags: Vec::new() }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(Matrix::zeros(k, k))
    }

    pub fn with_flags(mut self, flags: Vec<Flag>) -> Self {
        self.flags = flags;
        self
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn top(&self) -> (f64, Vector) {
        (self.eigenvalues[0], self.eigenvectors.column(0).into_owned())
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Number of eigenvalues above `max(rel * top, abs)`.
    pub fn rank_with(&self, rel: f64, abs: f64) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        let thr = (rel * top).max(abs);
        self.eigenvalues.iter().filter(|&&l| l > thr).count()
    }

    pub fn rank(&self) -> usize {
        self.rank_with(RANK_REL_TOL, RANK_ABS_TOL)
    }

    /// True when the smallest eigenvalue is below `rel` times the largest.
    pub fn is_singular(&self, rel: f64) -> bool {
        let top = self.eigenvalues[0];
        let bottom = *self.eigenvalues.last().unwrap();
        !(top > 0.0) || bottom <= rel * top
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.eigenvectors * Matrix::from_diagonal(&Vector::from_vec(self.eigenvalues.clone())) * self.eigenvectors.transpose()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(&self.entries * s).with_flags(self.flags.clone())
    }

    /// Pseudo-inverse restricted to eigenvalues above `rel` times the top one.
    pub fn inverse(&self) -> Option<Matrix> {
        if self.is_singular(0.0) {
            return None;
        }
        let inv = Vector::from_iterator(self.dim(), self.eigenvalues.iter().map(|l| 1.0 / l));
        Some(&self.eigenvectors * Matrix::from_diagonal(&inv) * self.eigenvectors.transpose())
    }
}

/// A field of Fisher matrices over feature space.
pub trait FisherField: Sync {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix>;
}

/// `F_cat` of a category model as a field.
pub struct CatField<'a>(pub &'a CategoryModel);

impl FisherField for CatField<'_> {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix> {
        fisher_cat(self.0, x)
    }
}

/// A field multiplied by a constant.
pub struct ScaledField<F>(pub F, pub f64);

impl<F: FisherField> FisherField for ScaledField<F> {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix> {
        Ok(self.0.fisher_at(x)?.scaled(self.1))
    }
}

impl<F: Fn(&Vector) -> Result<FisherMatrix> + Sync> FisherField for F {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix> {
        self(x)
    }
}

/// `F_cat(x) = Σ_y P(y|x) ∇ln P(y|x) ∇ln P(y|x)ᵀ`.
pub fn fisher_cat(model: &CategoryModel, x: &Vector) -> Result<FisherMatrix> {
    let pg = model.posterior_grads(x)?;
    let k = model.dim();
    let mut f = Matrix::zeros(k, k);
    let mut flags = pg.flags;
    for (y, (p, g)) in pg.posterior.iter().zip(&pg.grad_log).enumerate() {
        if *p < POSTERIOR_FLOOR {
            flags.push(Flag::DegeneratePosterior { class: y });
            continue;
        }
        f.ger(*p, g, g, 1.0);
    }
    Ok(FisherMatrix::new(f).with_flags(flags))
}

/// `P(+|x) P(-|x)` as a function of the log odds, without cancellation.
pub fn pp_of_log_odds(l: f64) -> f64 {
    let e = (-l.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Scalar `f_cat = P(+|x)P(-|x) ‖∇L‖²` of a binary model.
pub fn fcat_binary(lo: &LogOdds) -> f64 {
    pp_of_log_odds(lo.value) * lo.grad.norm_squared()
}

/// Residual of the stationarity condition of `f_cat` along the gradient
/// direction: `-tanh(L/2) ‖∇L‖⁴ + 2 ∇Lᵀ H ∇L`.
pub fn balance_residual(lo: &LogOdds) -> f64 {
    let g2 = lo.grad.norm_squared();
    -(lo.value / 2.0).tanh() * g2 * g2 + 2.0 * lo.grad.dot(&(&lo.hessian * &lo.grad))
}

/// Principal discriminant direction and its eigenvalue.
pub fn pdd(model: &CategoryModel, x: &Vector) -> Result<(Vector, f64)> {
    let lo = model.log_odds_full(x)?;
    let n = lo.grad.norm();
    if n < 1e-12 {
        return Err(Error::ZeroGradient(n));
    }
    Ok((&lo.grad / n, fcat_binary(&lo)))
}

/// Number of eigenvalues of `F_cat(x)` above threshold, capped at `min(M-1, K)`.
pub fn rank_fcat(model: &CategoryModel, x: &Vector) -> Result<usize> {
    let f = fisher_cat(model, x)?;
    let cap = (model.num_classes() - 1).min(model.dim());
    Ok(f.rank().min(cap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vector>,
    pub arc_lengths: Vec<f64>,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdcOptions {
    /// Arc-length step of the integrator.
    pub step: f64,
    pub max_arc: f64,
    /// After crossing the boundary, continue until `|L|` reaches this value.
    pub margin_log_odds: f64,
}

impl Default for PdcOptions {
    fn default() -> Self {
        PdcOptions { step: 0.01, max_arc: 20.0, margin_log_odds: 8.0 }
    }
}

fn unit_field(model: &CategoryModel, x: &Vector, sign: f64) -> Option<Vector> {
    let g = model.grad_log_odds(x).ok()?;
    let n = g.norm();
    if n < 1e-10 {
        return None;
    }
    Some(g * (sign / n))
}

fn rk4(model: &CategoryModel, x: &Vector, ds: f64, sign: f64) -> Option<Vector> {
    let k1 = unit_field(model, x, sign)?;
    let k2 = unit_field(model, &(x + &k1 * (ds / 2.0)), sign)?;
    let k3 = unit_field(model, &(x + &k2 * (ds / 2.0)), sign)?;
    let k4 = unit_field(model, &(x + &k3 * ds), sign)?;
    Some(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ds / 6.0))
}

/// Integral curve of the log-odds gradient through `x0`, parameterized by arc
/// length and oriented toward the boundary.
pub fn trace_pdc(model: &CategoryModel, x0: &Vector, step: f64, max_arc: f64) -> Result<Polyline> {
    trace_pdc_with(model, x0, &PdcOptions { step, max_arc, ..Default::default() })
}

pub fn trace_pdc_with(model: &CategoryModel, x0: &Vector, opts: &PdcOptions) -> Result<Polyline> {
    if !(opts.step > 0.0) || !(opts.max_arc > 0.0) {
        return Err(Error::InvalidArgument("step and max_arc must be positive".into()));
    }
    let lo = model.log_odds_full(x0)?;
    let n = lo.grad.norm();
    if n < 1e-10 {
        return Err(Error::ZeroGradient(n));
    }
    let sign = if lo.value > 0.0 { -1.0 } else { 1.0 };
    let start_side = lo.value > 0.0;
    let mut points = vec![x0.clone()];
    let mut arcs = vec![0.0];
    let mut l_prev = lo.value;
    let mut crossed = lo.value == 0.0;
    let nsteps = (opts.max_arc / opts.step + 1e-9).floor() as usize;
    for i in 1..=nsteps {
        let Some(next) = rk4(model, points.last().unwrap(), opts.step, sign) else { break };
        let l = match model.log_odds(&next) {
            Ok(l) => l,
            Err(Error::AllDensitiesZero) => break,
            Err(e) => return Err(e),
        };
        if (l - l_prev).abs() > 10.0 {
            return Err(Error::StepTooLarge(l - l_prev));
        }
        points.push(next);
        arcs.push(i as f64 * opts.step);
        if (l > 0.0) != start_side || l == 0.0 {
            crossed = true;
        }
        if crossed && l.abs() >= opts.margin_log_odds {
            break;
        }
        l_prev = l;
    }
    Ok(Polyline { points, arc_lengths: arcs })
}

/// Direction sign of the curve: +1 when the log odds increases along it.
fn curve_sign(model: &CategoryModel, pdc: &Polyline) -> Result<f64> {
    let l0 = model.log_odds(&pdc.points[0])?;
    let l1 = model.log_odds(&pdc.points[1])?;
    Ok(if l1 >= l0 { 1.0 } else { -1.0 })
}

/// Point on the integral curve at arc length `s`, integrated from the nearest
/// preceding vertex.
pub fn point_at(model: &CategoryModel, pdc: &Polyline, s: f64) -> Result<Vector> {
    let sign = curve_sign(model, pdc)?;
    point_at_signed(model, pdc, s, sign)
}

fn point_at_signed(model: &CategoryModel, pdc: &Polyline, s: f64, sign: f64) -> Result<Vector> {
    let i = match pdc.arc_lengths.partition_point(|a| *a <= s) {
        0 => 0,
        j => j - 1,
    };
    let ds = s - pdc.arc_lengths[i];
    if ds == 0.0 {
        return Ok(pdc.points[i].clone());
    }
    rk4(model, &pdc.points[i], ds, sign).ok_or(Error::ZeroGradient(0.0))
}

/// Boundary point `L = 0` on the curve, by bisection on arc length.
pub fn find_boundary_on_pdc(model: &CategoryModel, pdc: &Polyline) -> Result<Vector> {
    if pdc.len() < 2 {
        return Err(Error::NoSignChange);
    }
    let sign = curve_sign(model, pdc)?;
    let ls = pdc.points.iter().map(|p| model.log_odds(p)).collect::<Result<Vec<_>>>()?;
    let i = ls.windows(2).position(|w| w[0] == 0.0 || w[0].signum() != w[1].signum()).ok_or(Error::NoSignChange)?;
    if ls[i] == 0.0 {
        return Ok(pdc.points[i].clone());
    }
    let (mut a, mut b) = (pdc.arc_lengths[i], pdc.arc_lengths[i + 1]);
    let la = ls[i];
    let mut best = pdc.points[i + 1].clone();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let p = point_at_signed(model, pdc, m, sign)?;
        let l = model.log_odds(&p)?;
        best = p;
        if l.abs() < 1e-12 || b - a < 1e-15 * (1.0 + b.abs()) {
            break;
        }
        if l.signum() == la.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(best)
}

/// Arc length and location of the maximum of `f_cat` along the curve.
pub fn locate_fcat_max(model: &CategoryModel, pdc: &Polyline) -> Result<(f64, Vector)> {
    if pdc.len() < 3 {
        return Err(Error::NoInteriorMax);
    }
    let sign = curve_sign(model, pdc)?;
    let f = |s: f64| -> Result<(f64, Vector, LogOdds)> {
        let p = point_at_signed(model, pdc, s, sign)?;
        let lo = model.log_odds_full(&p)?;
        Ok((fcat_binary(&lo), p, lo))
    };
    let vals = pdc
        .points
        .iter()
        .map(|p| model.log_odds_full(p).map(|lo| fcat_binary(&lo)))
        .collect::<Result<Vec<_>>>()?;
    let imax = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    if imax == 0 || imax == vals.len() - 1 {
        return Err(Error::NoInteriorMax);
    }
    let (mut a, mut b) = (pdc.arc_lengths[imax - 1], pdc.arc_lengths[imax + 1]);
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c)?.0;
    let mut fd = f(d)?.0;
    while b - a > 1e-12 * (1.0 + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d)?.0;
        }
    }
    // polish on the stationarity residual where it brackets a root
    let s_gold = 0.5 * (a + b);
    let (lo_s, hi_s) = (pdc.arc_lengths[imax - 1], pdc.arc_lengths[imax + 1]);
    let r_at = |s: f64| -> Result<(f64, Vector, f64)> {
        let (_, p, lo) = f(s)?;
        let g2 = lo.grad.norm_squared();
        Ok((sign * balance_residual(&lo), p, g2 * g2))
    };
    let (mut ra, _, _) = r_at(lo_s)?;
    let (rb, _, _) = r_at(hi_s)?;
    if ra.signum() != rb.signum() {
        let (mut a, mut b) = (lo_s, hi_s);
        let mut out = (s_gold, f(s_gold)?.1);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let (r, p, g4) = r_at(m)?;
            out = (m, p);
            if r.abs() < 1e-12 * g4 || b - a < 1e-15 * (1.0 + b.abs()) {
                break;
            }
            if r.signum() == ra.signum() {
                a = m;
                ra = r;
            } else {
                b = m;
            }
        }
        return Ok(out);
    }
    Ok((s_gold, f(s_gold)?.1))
}

pub fn find_fcat_max_on_pdc(model: &CategoryModel, pdc: &Polyline) -> Result<Vector> {
    locate_fcat_max(model, pdc).map(|(_, p)| p)
}

/// Closed-form geometry of the pair `Σ_- = σ² I`, `Σ_+ = a² σ² I`, `c_± = ±c`
/// in `k` dimensions, for `a > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGeometry {
    pub eta: f64,
    pub rho: f64,
    pub gamma: f64,
    /// Distance from `-ρc` to the boundary.
    pub z_b: f64,
    /// Distance from `-ρc` to the maxima of `f_cat`.
    pub z: f64,
    /// `z² - z_B²`.
    pub w: f64,
    /// Signed offset of the near boundary from the origin along `c`.
    pub x_b: f64,
    /// Signed offset of the near maximum from the origin along `c`.
    pub x_cat: f64,
}

impl DiagonalGeometry {
    pub fn new(a: f64, sigma: f64, c: f64, k: usize) -> Result<Self> {
        if !(a > 1.0) || !(sigma > 0.0) || !(c > 0.0) {
            return Err(Error::InvalidArgument("need a > 1, sigma > 0, c > 0".into()));
        }
        let a2 = a * a;
        let eta = (a2 - 1.0) / (a2 * sigma * sigma);
        let rho = (a2 + 1.0) / (a2 - 1.0);
        let gamma = 2.0 * a.ln() / eta;
        let kg = k as f64 * gamma;
        let z_b2 = (rho * rho - 1.0) * c * c + kg;
        let z_b = z_b2.sqrt();
        // (w + z_B²) tanh(ηw/4) = 2/η, increasing in w
        let h = |w: f64| (w + z_b2) * (eta * w / 4.0).tanh() - 2.0 / eta;
        let mut hi = 1.0;
        while h(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let m = 0.5 * (lo + hi);
            if m <= lo || m >= hi {
                break;
            }
            if h(m) > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
        }
        let w = 0.5 * (lo + hi);
        let z = (w + z_b2).sqrt();
        let x_b = (kg - c * c) / (rho * c + z_b);
        let x_cat = x_b + w / (z + z_b);
        Ok(DiagonalGeometry { eta, rho, gamma, z_b, z, w, x_b, x_cat })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gauss1dSummary {
    pub a: f64,
    pub sigma: f64,
    pub c: f64,
    pub eta: f64,
    /// Absent at `a = 1`, where the center `-ρc` recedes to infinity.
    pub rho: Option<f64>,
    pub gamma: f64,
    pub z_b: Option<f64>,
    pub z: Option<f64>,
    pub x_b_plus: f64,
    pub x_b_minus: Option<f64>,
    pub x_cat_plus: f64,
    pub x_cat_minus: Option<f64>,
    /// Data density `P(x)` at each root.
    pub density_x_b_plus: f64,
    pub density_x_b_minus: Option<f64>,
    pub density_x_cat_plus: f64,
    pub density_x_cat_minus: Option<f64>,
}

/// Boundaries and Fisher maxima of the 1-D pair; `a = 1` is the
/// equal-variance limit with both at the origin.
pub fn gauss1d_summary(a: f64, sigma: f64, c: f64) -> Result<Gauss1dSummary> {
    if !(a >= 1.0) || !(sigma > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidArgument("need a >= 1, sigma > 0, c > 0".into()));
    }
    let model = CategoryModel::diagonal_pair(a, sigma, &Vector::from_vec(vec![c]))?;
    let dens = |x: f64| model.density(&Vector::from_vec(vec![x]));
    if a == 1.0 {
        return Ok(Gauss1dSummary {
            a,
            sigma,
            c,
            eta: 0.0,
            rho: None,
            gamma: sigma * sigma,
            z_b: None,
            z: None,
            x_b_plus: 0.0,
            x_b_minus: None,
            x_cat_plus: 0.0,
            x_cat_minus: None,
            density_x_b_plus: dens(0.0),
            density_x_b_minus: None,
            density_x_cat_plus: dens(0.0),
            density_x_cat_minus: None,
        });
    }
    let g = DiagonalGeometry::new(a, sigma, c, 1)?;
    let center = -g.rho * c;
    let xbm = center - g.z_b;
    let xcm = center - g.z;
    Ok(Gauss1dSummary {
        a,
        sigma,
        c,
        eta: g.eta,
        rho: Some(g.rho),
        gamma: g.gamma,
        z_b: Some(g.z_b),
        z: Some(g.z),
        x_b_plus: g.x_b,
        x_b_minus: Some(xbm),
        x_cat_plus: g.x_cat,
        x_cat_minus: Some(xcm),
        density_x_b_plus: dens(g.x_b),
        density_x_b_minus: Some(dens(xbm)),
        density_x_cat_plus: dens(g.x_cat),
        density_x_cat_minus: Some(dens(xcm)),
    })
}
