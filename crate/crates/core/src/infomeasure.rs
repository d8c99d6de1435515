//! Mutual information between labels and features or neural responses, and
//! the large-population asymptotic gap `½ ∫ tr(F_cat F_code⁻¹) P(x) dx`.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categories::{log_sum_exp, CategoryModel, ModelSpec};
use crate::catfisher::{fisher_cat, FisherField};
use crate::digest::json_digest;
use crate::error::{Error, Flag, Result};
use crate::mc::{jackknife, map_chunks, ChunkSums};
use crate::neurocode::{PopulationCode, SINGULAR_REL_TOL};
use crate::quadrature::QuadratureGrid;
use crate::{Matrix, Vector};

pub use crate::mc::MCConfig;

/// Box half-width in standard deviations for default grids.
pub const GRID_SD: f64 = 6.0;
/// Default nodes per dimension.
pub const GRID_NODES: usize = 201;
/// Threshold on the mean change of inner posteriors between the grid and its coarsening.
pub const REFINEMENT_TOL: f64 = 1e-3;
/// Outer samples used for the refinement check.
const REFINEMENT_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub estimate: f64,
    pub std_err: f64,
    /// Unit flag: estimates are always in nats.
    pub nats: bool,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

impl MiEstimate {
    fn new(estimate: f64, std_err: f64, digest: String, upper: f64) -> Self {
        let mut flags = Vec::new();
        let clipped = estimate.clamp(0.0, upper);
        if clipped != estimate {
            flags.push(Flag::Clipped);
        }
        MiEstimate { estimate: clipped, std_err, nats: true, config_digest: digest, flags }
    }
}

/// Trapezoid grid over the union of the class bulk boxes.
pub fn grid_for_model(model: &CategoryModel, nodes: usize) -> Result<QuadratureGrid> {
    QuadratureGrid::trapezoid(&model.bounding_box(GRID_SD), nodes)
}

/// `Σ w P(x)` over the grid.
pub fn grid_mass(model: &CategoryModel, grid: &QuadratureGrid) -> f64 {
    grid.points().iter().map(|(x, w)| w * model.density(x)).sum()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}

fn entropy_of_logs(lp: &[f64]) -> f64 {
    lp.iter().filter(|v| v.is_finite()).map(|v| -v.exp() * v).sum()
}

/// `Σ_y p_y ln(p_y / q_y)` from log probabilities.
pub fn kl_logs(lp: &[f64], lq: &[f64]) -> f64 {
    lp.iter().zip(lq).filter(|(a, _)| a.is_finite()).map(|(a, b)| a.exp() * (a - b)).sum()
}

#[derive(Serialize)]
struct DigestInput<'a, T: Serialize> {
    op: &'a str,
    model: ModelSpec,
    grid: Option<(usize, Vec<(f64, f64)>)>,
    mc: Option<&'a MCConfig>,
    extra: T,
}

fn grid_key(grid: &QuadratureGrid) -> (usize, Vec<(f64, f64)>) {
    let n = grid.nodes.first().map_or(0, Vec::len);
    (n, grid.nodes.iter().map(|v| (v[0], v[v.len() - 1])).collect())
}

fn digest<T: Serialize>(op: &str, model: &CategoryModel, grid: Option<&QuadratureGrid>, mc: Option<&MCConfig>, extra: T) -> String {
    json_digest(&DigestInput { op, model: ModelSpec::from(model), grid: grid.map(grid_key), mc, extra })
}

/// Bayes-optimal accuracy `∫ max_y P(y) P(x|y) dx` by quadrature.
pub fn bayes_accuracy(model: &CategoryModel, grid: &QuadratureGrid) -> f64 {
    let terms: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|(x, w)| w * model.log_joint(x).iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)).exp())
        .collect();
    // ordered sum, so the result does not depend on the thread count
    terms.iter().sum()
}

/// `I[Y,X] = H[Y] - E_x H[Y|x]` by quadrature.
pub fn mi_yx(model: &CategoryModel, grid: &QuadratureGrid) -> Result<MiEstimate> {
    let hy = entropy(model.priors());
    let pts = grid.points();
    let terms: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|(x, w)| {
            let ld = model.log_density(x);
            if !ld.is_finite() {
                return (0.0, 0.0);
            }
            let lp = model.log_posterior(x).expect("finite density");
            (w * ld.exp(), w * ld.exp() * entropy_of_logs(&lp))
        })
        .collect();
    let mass: f64 = terms.iter().map(|t| t.0).sum();
    let cond: f64 = terms.iter().map(|t| t.1).sum();
    let d = digest("mi_yx", model, Some(grid), None, ());
    Ok(MiEstimate::new(hy - cond / mass, 0.0, d, (model.num_classes() as f64).ln()))
}

/// `I[Y,X]` by Monte-Carlo over `x ~ P(x)`.
pub fn mi_yx_mc(model: &CategoryModel, mc: &MCConfig) -> Result<MiEstimate> {
    mc.validate()?;
    let hy = entropy(model.priors());
    let chunks = map_chunks(mc, |range, rng| {
        let mut s = ChunkSums::new(1);
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let lp = model.log_posterior(&x).expect("sample lies in the support");
            s.push(&[entropy_of_logs(&lp)]);
        }
        s
    });
    let (h, se) = jackknife(&chunks, |m| m[0]);
    let d = digest("mi_yx_mc", model, None, Some(mc), ());
    Ok(MiEstimate::new(hy - h, se, d, (model.num_classes() as f64).ln()))
}

/// A stochastic response `r` whose law depends on `x` only through a mean vector.
pub trait NoisyCode: Sync {
    fn input_dim(&self) -> usize;
    fn mean(&self, x: &Vector) -> Vector;
    fn sample_given_mean(&self, f: &Vector, rng: &mut dyn RngCore) -> Result<Vector>;
    fn log_likelihood_given_mean(&self, r: &Vector, f: &Vector) -> f64;
}

impl NoisyCode for PopulationCode {
    fn input_dim(&self) -> usize {
        self.dim()
    }
    fn mean(&self, x: &Vector) -> Vector {
        self.mean_response(x)
    }
    fn sample_given_mean(&self, f: &Vector, rng: &mut dyn RngCore) -> Result<Vector> {
        PopulationCode::sample_given_mean(self, f, rng)
    }
    fn log_likelihood_given_mean(&self, r: &Vector, f: &Vector) -> f64 {
        PopulationCode::log_likelihood_given_mean(self, r, f)
    }
}

/// Precomputed quadrature of `P(y|r) ∝ P_y Σ_k w_k P(x_k|y) P(r|x_k)`.
pub struct InnerPosterior<'a, C: NoisyCode + ?Sized> {
    code: &'a C,
    log_prior: Vec<f64>,
    /// `ln w_k + ln P(x_k|y)`, per class then node.
    log_wp: Vec<Vec<f64>>,
    means: Vec<Vector>,
}

impl<'a, C: NoisyCode + ?Sized> InnerPosterior<'a, C> {
    pub fn new(model: &CategoryModel, code: &'a C, grid: &QuadratureGrid) -> Self {
        let pts = grid.points();
        let means: Vec<Vector> = pts.par_iter().map(|(x, _)| code.mean(x)).collect();
        let log_wp = model
            .components()
            .iter()
            .map(|c| pts.iter().map(|(x, w)| w.ln() + c.log_density(x)).collect())
            .collect();
        InnerPosterior { code, log_prior: model.priors().iter().map(|p| p.ln()).collect(), log_wp, means }
    }

    /// `ln P(y|r)` for every class.
    pub fn log_posterior(&self, r: &Vector) -> Vec<f64> {
        let ll: Vec<f64> = self.means.iter().map(|f| self.code.log_likelihood_given_mean(r, f)).collect();
        let mut scratch = vec![0.0; ll.len()];
        let joint: Vec<f64> = self
            .log_wp
            .iter()
            .zip(&self.log_prior)
            .map(|(lw, lp)| {
                for (s, (a, b)) in scratch.iter_mut().zip(lw.iter().zip(&ll)) {
                    *s = a + b;
                }
                lp + log_sum_exp(&scratch)
            })
            .collect();
        let z = log_sum_exp(&joint);
        joint.iter().map(|j| j - z).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiYrReport {
    /// `I[Y,X] - E KL(P(Y|x) ‖ P(Y|r))`, the paired estimate.
    pub i_yr: MiEstimate,
    /// `H[Y] - E H[Y|r]`, the direct estimate.
    pub i_yr_direct: MiEstimate,
    pub i_yx: f64,
    /// `I[Y,X] - I[Y,R] = E KL(P(Y|x) ‖ P(Y|r))`.
    pub gap: f64,
    pub gap_std_err: f64,
    /// Mean absolute change of `P(y|r)` when the grid is coarsened.
    pub refinement_change: f64,
}

/// Rejects grids that miss probability mass or whose inner posterior moves by
/// more than the tolerance when coarsened; returns the mean change.
pub fn check_grid<C: NoisyCode + ?Sized>(model: &CategoryModel, code: &C, mc: &MCConfig, grid: &QuadratureGrid) -> Result<f64> {
    let mass = grid_mass(model, grid);
    if (mass - 1.0).abs() > 1e-3 {
        return Err(Error::GridTooCoarse((mass - 1.0).abs()));
    }
    let inner = InnerPosterior::new(model, code, grid);
    let coarse_grid = grid.coarsened();
    let coarse = InnerPosterior::new(model, code, &coarse_grid);
    let check_cfg = MCConfig { outer_samples: REFINEMENT_SAMPLES.min(mc.outer_samples), chunk_size: 64, ..*mc };
    let diffs = map_chunks(&check_cfg, |range, rng| -> Result<f64> {
        let mut s = 0.0;
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let r = code.sample_given_mean(&code.mean(&x), rng)?;
            let a = inner.log_posterior(&r);
            let b = coarse.log_posterior(&r);
            s += a.iter().zip(&b).map(|(u, v)| (u.exp() - v.exp()).abs()).fold(0.0, f64::max);
        }
        Ok(s)
    });
    let change = diffs.into_iter().sum::<Result<f64>>()? / check_cfg.outer_samples as f64;
    if change > REFINEMENT_TOL {
        return Err(Error::GridTooCoarse(change));
    }
    Ok(change)
}

/// `I[Y,R]` with the inner integral over `x` by quadrature and the outer
/// expectation over `(y, x, r)` by Monte-Carlo.
pub fn mi_yr<C: NoisyCode + ?Sized>(model: &CategoryModel, code: &C, mc: &MCConfig, grid: &QuadratureGrid) -> Result<MiYrReport> {
    mc.validate()?;
    if code.input_dim() != model.dim() {
        return Err(Error::DimMismatch { expected: model.dim(), got: code.input_dim() });
    }
    if grid.dim() != model.dim() {
        return Err(Error::DimMismatch { expected: model.dim(), got: grid.dim() });
    }
    let refinement_change = check_grid(model, code, mc, grid)?;
    let i_yx = mi_yx(model, grid)?.estimate;
    let hy = entropy(model.priors());
    let inner = InnerPosterior::new(model, code, grid);

    let chunks = map_chunks(mc, |range, rng| -> Result<ChunkSums> {
        let mut s = ChunkSums::new(2);
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let r = code.sample_given_mean(&code.mean(&x), rng)?;
            let lq = inner.log_posterior(&r);
            let lp = model.log_posterior(&x)?;
            s.push(&[kl_logs(&lp, &lq), entropy_of_logs(&lq)]);
        }
        Ok(s)
    });
    let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    let (gap, gap_se) = jackknife(&chunks, |m| m[0]);
    let (hr, hr_se) = jackknife(&chunks, |m| m[1]);
    let d = digest("mi_yr", model, Some(grid), Some(mc), code.input_dim());
    let upper = (model.num_classes() as f64).ln();
    Ok(MiYrReport {
        i_yr: MiEstimate::new(i_yx - gap, gap_se, d.clone(), upper),
        i_yr_direct: MiEstimate::new(hy - hr, hr_se, d, upper),
        i_yx,
        gap,
        gap_std_err: gap_se,
        refinement_change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub delta: f64,
    /// Probability mass of grid points where `F_code` is singular.
    pub excluded_mass: f64,
    pub excluded_points: usize,
}

/// `tr(F_cat F_code⁻¹)` at `x`, or `None` where `F_code` is singular.
fn gap_integrand<F: FisherField + ?Sized>(model: &CategoryModel, field: &F, x: &Vector) -> Result<Option<f64>> {
    let fc = fisher_cat(model, x)?;
    let fd = field.fisher_at(x)?;
    if fd.is_singular(SINGULAR_REL_TOL) {
        return Ok(None);
    }
    let inv = fd.inverse().expect("nonsingular");
    Ok(Some((fc.entries().transpose() * inv).trace()))
}

/// `Δ = ½ Σ w P(x) tr(F_catᵀ F_code⁻¹)` over the grid.
pub fn asymptotic_gap<F: FisherField + ?Sized>(model: &CategoryModel, field: &F, grid: &QuadratureGrid) -> Result<GapReport> {
    let pts = grid.points();
    let terms: Vec<Result<(f64, f64)>> = pts
        .par_iter()
        .map(|(x, w)| {
            let p = model.density(x);
            if p == 0.0 {
                return Ok((0.0, 0.0));
            }
            Ok(match gap_integrand(model, field, x)? {
                Some(t) => (w * p * t, 0.0),
                None => (0.0, w * p),
            })
        })
        .collect();
    let mut delta = 0.0;
    let mut excluded_mass = 0.0;
    let mut excluded_points = 0;
    let mut included = 0;
    for t in terms {
        let (a, b) = t?;
        delta += a;
        if b > 0.0 {
            excluded_mass += b;
            excluded_points += 1;
        } else {
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::AllSingular);
    }
    Ok(GapReport { delta: 0.5 * delta, excluded_mass, excluded_points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub delta_x: f64,
    pub delta_z: f64,
    pub rel_dev: f64,
}

/// Recomputes `Δ` in coordinates `z = J x` on a fresh grid over the image box,
/// transforming the density and both Fisher fields.
pub fn invariance_check<F: FisherField + ?Sized>(model: &CategoryModel, field: &F, j: &Matrix, grid: &QuadratureGrid) -> Result<InvarianceReport> {
    let k = model.dim();
    if j.nrows() != k || j.ncols() != k {
        return Err(Error::DimMismatch { expected: k, got: j.nrows() });
    }
    let jinv = j.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("J is singular".into()))?;
    let det = j.determinant().abs();
    let delta_x = asymptotic_gap(model, field, grid)?.delta;
    // bounding box of the image of the x box
    let bounds: Vec<(f64, f64)> = grid.nodes.iter().map(|n| (n[0], n[n.len() - 1])).collect();
    let mut zb = vec![(f64::INFINITY, f64::NEG_INFINITY); k];
    for corner in 0..(1usize << k) {
        let c = Vector::from_iterator(k, (0..k).map(|i| if corner >> i & 1 == 1 { bounds[i].1 } else { bounds[i].0 }));
        let z = j * c;
        for i in 0..k {
            zb[i].0 = zb[i].0.min(z[i]);
            zb[i].1 = zb[i].1.max(z[i]);
        }
    }
    let zgrid = QuadratureGrid::trapezoid(&zb, grid.nodes[0].len())?;
    let pts = zgrid.points();
    let terms: Vec<Result<f64>> = pts
        .par_iter()
        .map(|(z, w)| {
            let x = &jinv * z;
            let pz = model.density(&x) / det;
            if pz == 0.0 {
                return Ok(0.0);
            }
            let fc = &jinv.transpose() * fisher_cat(model, &x)?.entries() * &jinv;
            let fd = field.fisher_at(&x)?;
            if fd.is_singular(SINGULAR_REL_TOL) {
                return Ok(0.0);
            }
            let fdz = &jinv.transpose() * fd.entries() * &jinv;
            let inv = crate::catfisher::FisherMatrix::new(fdz).inverse().expect("nonsingular");
            Ok(w * pz * (fc.transpose() * inv).trace())
        })
        .collect();
    let mut s = 0.0;
    for t in terms {
        s += t?;
    }
    let delta_z = 0.5 * s;
    Ok(InvarianceReport { delta_x, delta_z, rel_dev: (delta_z - delta_x).abs() / delta_x })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProcessing {
    pub i_yr: f64,
    pub i_yx: f64,
    /// `I[Y,X] - I[Y,R]`.
    pub margin: f64,
    pub std_err: f64,
}

/// Checks `I[Y,R] <= I[Y,X]` with the direct `I[Y,R]` estimate.
pub fn data_processing_check<C: NoisyCode + ?Sized>(model: &CategoryModel, code: &C, mc: &MCConfig, grid: &QuadratureGrid) -> Result<DataProcessing> {
    let rep = mi_yr(model, code, mc, grid)?;
    let se = rep.i_yr_direct.std_err;
    // the unclipped direct estimate, recovered from the gap identity when clipped
    let i_yr = rep.i_yr_direct.estimate;
    let margin = rep.i_yx - i_yr;
    if margin < -3.0 * se {
        return Err(Error::InequalityViolated { excess: -margin, std_err: se });
    }
    Ok(DataProcessing { i_yr, i_yx: rep.i_yx, margin, std_err: se })
}
