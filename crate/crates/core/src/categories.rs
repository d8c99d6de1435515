//! Category-generating models: class priors plus per-class densities over a
//! low-dimensional feature space, with posteriors, log odds and samplers.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Flag, Result};
use crate::{Matrix, Vector};

/// Relative finite-difference step for gradients of non-Gaussian models.
pub const FD_STEP: f64 = 1e-5;
/// Relative step for second differences of the log odds.
pub const FD_STEP_HESSIAN: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: Vector,
    cov: Matrix,
    chol: Cholesky<f64, Dyn>,
    precision: Matrix,
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::DimMismatch { expected: k, got: cov.nrows() });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidModel("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidModel("covariance is not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        let log_norm = -0.5 * (k as f64 * (2.0 * PI).ln() + log_det);
        Ok(GaussianComponent { mean, cov, chol, precision, log_norm })
    }

    pub fn isotropic(mean: Vector, variance: f64) -> Result<Self> {
        let k = mean.len();
        Self::new(mean, Matrix::identity(k, k) * variance)
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn log_density(&self, x: &Vector) -> f64 {
        let d = x - &self.mean;
        let y = self.chol.l().solve_lower_triangular(&d).expect("cholesky factor is invertible");
        self.log_norm - 0.5 * y.norm_squared()
    }

    pub fn grad_log_density(&self, x: &Vector) -> Vector {
        -(&self.precision * (x - &self.mean))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_iterator(self.mean.len(), (0..self.mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.mean + self.chol.l() * z
    }
}

/// Two-dimensional density: a two-sided exponential in `x1` restricted to
/// `[-1, 1]` times a centered Gaussian in `x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpGaussComponent {
    c1: f64,
    tau: f64,
    sigma2_sq: f64,
    log_z1: f64,
}

impl ExpGaussComponent {
    pub const DOMAIN: (f64, f64) = (-1.0, 1.0);

    pub fn new(c1: f64, tau: f64, sigma2_sq: f64) -> Result<Self> {
        if !(tau > 0.0) || !(sigma2_sq > 0.0) || !c1.is_finite() {
            return Err(Error::InvalidModel("expgauss needs tau > 0 and sigma2_sq > 0".into()));
        }
        let z1 = Self::x1_mass(c1, tau);
        Ok(ExpGaussComponent { c1, tau, sigma2_sq, log_z1: z1.ln() })
    }

    /// Integral of `exp(-|x1 - c1| / tau)` over the domain.
    pub fn x1_mass(c1: f64, tau: f64) -> f64 {
        let (lo, hi) = Self::DOMAIN;
        if c1 <= lo {
            tau * ((-(lo - c1) / tau).exp() - (-(hi - c1) / tau).exp())
        } else if c1 >= hi {
            tau * ((-(c1 - hi) / tau).exp() - (-(c1 - lo) / tau).exp())
        } else {
            tau * (2.0 - (-(c1 - lo) / tau).exp() - (-(hi - c1) / tau).exp())
        }
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma2_sq(&self) -> f64 {
        self.sigma2_sq
    }

    pub fn log_density(&self, x: &Vector) -> f64 {
        let (lo, hi) = Self::DOMAIN;
        if x[0] < lo || x[0] > hi {
            return f64::NEG_INFINITY;
        }
        -(x[0] - self.c1).abs() / self.tau - self.log_z1 - 0.5 * x[1] * x[1] / self.sigma2_sq
            - 0.5 * (2.0 * PI * self.sigma2_sq).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let (lo, hi) = Self::DOMAIN;
        let nearest = self.c1.clamp(lo, hi);
        let dmin = (nearest - self.c1).abs();
        let x1 = loop {
            let u = lo + (hi - lo) * rng.random::<f64>();
            let accept = (-((u - self.c1).abs() - dmin) / self.tau).exp();
            if rng.random::<f64>() < accept {
                break u;
            }
        };
        let x2 = self.sigma2_sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
        Vector::from_vec(vec![x1, x2])
    }

    fn kinks(&self) -> [f64; 3] {
        [self.c1, Self::DOMAIN.0, Self::DOMAIN.1]
    }
}

#[derive(Debug, Clone)]
pub enum Component {
    Gaussian(GaussianComponent),
    ExpGauss(ExpGaussComponent),
}

impl Component {
    pub fn dim(&self) -> usize {
        match self {
            Component::Gaussian(g) => g.mean.len(),
            Component::ExpGauss(_) => 2,
        }
    }

    pub fn log_density(&self, x: &Vector) -> f64 {
        match self {
            Component::Gaussian(g) => g.log_density(x),
            Component::ExpGauss(e) => e.log_density(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            Component::Gaussian(g) => g.sample(rng),
            Component::ExpGauss(e) => e.sample(rng),
        }
    }

    /// Per-coordinate interval holding the bulk of the mass.
    pub fn extent(&self, nsd: f64) -> Vec<(f64, f64)> {
        match self {
            Component::Gaussian(g) => (0..g.mean.len())
                .map(|i| {
                    let s = g.cov[(i, i)].sqrt();
                    (g.mean[i] - nsd * s, g.mean[i] + nsd * s)
                })
                .collect(),
            Component::ExpGauss(e) => {
                let s = e.sigma2_sq.sqrt();
                vec![ExpGaussComponent::DOMAIN, (-nsd * s, nsd * s)]
            }
        }
    }
}

/// Posterior and the gradients of the log posteriors at a point.
#[derive(Debug, Clone)]
pub struct PosteriorGrads {
    pub posterior: Vec<f64>,
    pub grad_log: Vec<Vector>,
    pub flags: Vec<Flag>,
}

/// Log odds with gradient and Hessian.
#[derive(Debug, Clone)]
pub struct LogOdds {
    pub value: f64,
    pub grad: Vector,
    pub hessian: Matrix,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone)]
pub struct CategoryModel {
    priors: Vec<f64>,
    log_priors: Vec<f64>,
    components: Vec<Component>,
    dim: usize,
}

impl CategoryModel {
    pub fn new(priors: Vec<f64>, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidModel("model needs at least one class".into()));
        }
        if priors.len() != components.len() {
            return Err(Error::DimMismatch { expected: components.len(), got: priors.len() });
        }
        if priors.iter().any(|p| !(*p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("priors must be nonnegative and sum to 1".into()));
        }
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimMismatch { expected: dim, got: c.dim() });
        }
        let log_priors = priors.iter().map(|p| p.ln()).collect();
        Ok(CategoryModel { priors, log_priors, components, dim })
    }

    pub fn uniform(components: Vec<Component>) -> Result<Self> {
        let m = components.len();
        Self::new(vec![1.0 / m as f64; m], components)
    }

    /// Equiprobable pair with `c_- = -c`, `c_+ = c`, `Σ_- = σ² I`, `Σ_+ = a² σ² I`.
    pub fn diagonal_pair(a: f64, sigma: f64, c: &Vector) -> Result<Self> {
        if !(a > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidModel("a and sigma must be positive".into()));
        }
        let s2 = sigma * sigma;
        Self::uniform(vec![
            Component::Gaussian(GaussianComponent::isotropic(-c, s2)?),
            Component::Gaussian(GaussianComponent::isotropic(c.clone(), a * a * s2)?),
        ])
    }

    /// Three equiprobable isotropic Gaussians centered on the unit circle at
    /// 90, 210 and 330 degrees.
    pub fn three_gaussians(sigma: f64) -> Result<Self> {
        let comps = [90.0f64, 210.0, 330.0]
            .iter()
            .map(|deg| {
                let t = deg.to_radians();
                GaussianComponent::isotropic(Vector::from_vec(vec![t.cos(), t.sin()]), sigma * sigma)
                    .map(Component::Gaussian)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(comps)
    }

    /// Bounded-domain pair with exponential profiles in `x1` and Gaussian `x2`.
    pub fn exp_gauss_pair(c: f64, tau_minus: f64, tau_plus: f64, s2_minus: f64, s2_plus: f64) -> Result<Self> {
        Self::uniform(vec![
            Component::ExpGauss(ExpGaussComponent::new(-c, tau_minus, s2_minus)?),
            Component::ExpGauss(ExpGaussComponent::new(c, tau_plus, s2_plus)?),
        ])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn is_gaussian(&self) -> bool {
        self.components.iter().all(|c| matches!(c, Component::Gaussian(_)))
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// `ln P_y + ln P(x|y)` for every class.
    pub fn log_joint(&self, x: &Vector) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.log_priors)
            .map(|(c, lp)| if lp.is_finite() { lp + c.log_density(x) } else { f64::NEG_INFINITY })
            .collect()
    }

    /// `ln P(x)` of the mixture.
    pub fn log_density(&self, x: &Vector) -> f64 {
        log_sum_exp(&self.log_joint(x))
    }

    pub fn density(&self, x: &Vector) -> f64 {
        self.log_density(x).exp()
    }

    pub fn log_posterior(&self, x: &Vector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let lj = self.log_joint(x);
        let lse = log_sum_exp(&lj);
        if !lse.is_finite() {
            return Err(Error::AllDensitiesZero);
        }
        Ok(lj.iter().map(|v| v - lse).collect())
    }

    pub fn posterior(&self, x: &Vector) -> Result<Vector> {
        let lp = self.log_posterior(x)?;
        Ok(Vector::from_iterator(lp.len(), lp.iter().map(|v| v.exp())))
    }

    /// Posterior and gradients of `ln P(y|x)`: analytic for Gaussian models,
    /// central differences otherwise.
    pub fn posterior_grads(&self, x: &Vector) -> Result<PosteriorGrads> {
        let lp = self.log_posterior(x)?;
        let posterior: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        if self.is_gaussian() {
            let grads: Vec<Vector> = self
                .components
                .iter()
                .map(|c| match c {
                    Component::Gaussian(g) => g.grad_log_density(x),
                    Component::ExpGauss(_) => unreachable!(),
                })
                .collect();
            let mut mean = Vector::zeros(self.dim);
            for (p, g) in posterior.iter().zip(&grads) {
                mean.axpy(*p, g, 1.0);
            }
            let grad_log = grads.iter().map(|g| g - &mean).collect();
            return Ok(PosteriorGrads { posterior, grad_log, flags: Vec::new() });
        }
        let (jac, flags) = self.fd_jacobian(x, |p| self.log_posterior(p))?;
        let grad_log = (0..self.num_classes())
            .map(|y| Vector::from_iterator(self.dim, (0..self.dim).map(|i| jac[i][y])))
            .collect();
        Ok(PosteriorGrads { posterior, grad_log, flags })
    }

    /// Central differences of a vector-valued function, falling back to a
    /// one-sided stencil where one side leaves the support.
    fn fd_jacobian<F>(&self, x: &Vector, f: F) -> Result<(Vec<Vec<f64>>, Vec<Flag>)>
    where
        F: Fn(&Vector) -> Result<Vec<f64>>,
    {
        let f0 = f(x)?;
        let mut flags = self.kink_flags(x, FD_STEP);
        let mut cols = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let h = FD_STEP * (1.0 + x[i].abs());
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let col = match (f(&xp), f(&xm)) {
                (Ok(a), Ok(b)) => a.iter().zip(&b).map(|(u, v)| (u - v) / (2.0 * h)).collect(),
                (Ok(a), Err(_)) => {
                    flags.push(Flag::NearKink { coord: i });
                    a.iter().zip(&f0).map(|(u, v)| (u - v) / h).collect()
                }
                (Err(_), Ok(b)) => {
                    flags.push(Flag::NearKink { coord: i });
                    f0.iter().zip(&b).map(|(u, v)| (u - v) / h).collect()
                }
                (Err(e), Err(_)) => return Err(e),
            };
            cols.push(col);
        }
        flags.dedup();
        Ok((cols, flags))
    }

    fn kink_flags(&self, x: &Vector, rel: f64) -> Vec<Flag> {
        let h = rel * (1.0 + x[0].abs());
        let near = self.components.iter().any(|c| match c {
            Component::ExpGauss(e) => e.kinks().iter().any(|k| (x[0] - k).abs() < 2.0 * h),
            Component::Gaussian(_) => false,
        });
        if near {
            vec![Flag::NearKink { coord: 0 }]
        } else {
            Vec::new()
        }
    }

    fn require_binary(&self) -> Result<()> {
        if self.num_classes() != 2 {
            return Err(Error::NotBinary(self.num_classes()));
        }
        Ok(())
    }

    /// `L(x) = ln P(1|x) - ln P(0|x)`; class 0 is "−", class 1 is "+".
    pub fn log_odds(&self, x: &Vector) -> Result<f64> {
        self.require_binary()?;
        self.check_dim(x)?;
        let lj = self.log_joint(x);
        if lj.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::AllDensitiesZero);
        }
        Ok(lj[1] - lj[0])
    }

    pub fn grad_log_odds(&self, x: &Vector) -> Result<Vector> {
        Ok(self.log_odds_full(x)?.grad)
    }

    pub fn hessian_log_odds(&self, x: &Vector) -> Result<Matrix> {
        Ok(self.log_odds_full(x)?.hessian)
    }

    /// Log odds, gradient and Hessian together.
    pub fn log_odds_full(&self, x: &Vector) -> Result<LogOdds> {
        let value = self.log_odds(x)?;
        if let (Component::Gaussian(m), Component::Gaussian(p)) = (&self.components[0], &self.components[1]) {
            let grad = m.precision() * (x - m.mean()) - p.precision() * (x - p.mean());
            let hessian = m.precision() - p.precision();
            return Ok(LogOdds { value, grad, hessian, flags: Vec::new() });
        }
        let (jac, mut flags) = self.fd_jacobian(x, |p| self.log_odds(p).map(|v| vec![v]))?;
        let grad = Vector::from_iterator(self.dim, jac.iter().map(|c| c[0]));
        let hessian = self.fd_hessian(x, value, &mut flags)?;
        Ok(LogOdds { value, grad, hessian, flags })
    }

    fn fd_hessian(&self, x: &Vector, l0: f64, flags: &mut Vec<Flag>) -> Result<Matrix> {
        let k = self.dim;
        let h: Vec<f64> = (0..k).map(|i| FD_STEP_HESSIAN * (1.0 + x[i].abs())).collect();
        let at = |di: &[(usize, f64)]| -> Result<f64> {
            let mut p = x.clone();
            for &(i, s) in di {
                p[i] += s * h[i];
            }
            self.log_odds(&p)
        };
        let mut hess = Matrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = if i == j {
                    match (at(&[(i, 1.0)]), at(&[(i, -1.0)])) {
                        (Ok(a), Ok(b)) => (a - 2.0 * l0 + b) / (h[i] * h[i]),
                        _ => {
                            flags.push(Flag::NearKink { coord: i });
                            0.0
                        }
                    }
                } else {
                    match (
                        at(&[(i, 1.0), (j, 1.0)]),
                        at(&[(i, 1.0), (j, -1.0)]),
                        at(&[(i, -1.0), (j, 1.0)]),
                        at(&[(i, -1.0), (j, -1.0)]),
                    ) {
                        (Ok(a), Ok(b), Ok(c), Ok(d)) => (a - b - c + d) / (4.0 * h[i] * h[j]),
                        _ => {
                            flags.push(Flag::NearKink { coord: i });
                            0.0
                        }
                    }
                };
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let mut kinks = self.kink_flags(x, FD_STEP_HESSIAN);
        flags.append(&mut kinks);
        flags.dedup();
        Ok(hess)
    }

    /// `n` labelled draws; labels from the priors, features from the class density.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<(Vector, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, usize) {
        let y = self.sample_label(rng);
        (self.components[y].sample(rng), y)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (y, p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        // rounding left a sliver above the cumulative sum
        self.priors.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }

    /// Union over classes of the per-coordinate bulk intervals.
    pub fn bounding_box(&self, nsd: f64) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for (c, p) in self.components.iter().zip(&self.priors) {
            if *p == 0.0 {
                continue;
            }
            for (i, (lo, hi)) in c.extent(nsd).into_iter().enumerate() {
                b[i].0 = b[i].0.min(lo);
                b[i].1 = b[i].1.max(hi);
            }
        }
        b
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> Vector {
        let mut m = Vector::zeros(self.dim);
        for (c, p) in self.components.iter().zip(&self.priors) {
            let cm = match c {
                Component::Gaussian(g) => g.mean.clone(),
                Component::ExpGauss(e) => {
                    // mean of the truncated two-sided exponential, by quadrature
                    let f = |t: f64| t * (-(t - e.c1).abs() / e.tau).exp();
                    let (lo, hi) = ExpGaussComponent::DOMAIN;
                    let mut s = crate::quadrature::adaptive_simpson(&f, lo, e.c1.clamp(lo, hi), 1e-13);
                    s += crate::quadrature::adaptive_simpson(&f, e.c1.clamp(lo, hi), hi, 1e-13);
                    Vector::from_vec(vec![s / e.log_z1.exp(), 0.0])
                }
            };
            m.axpy(*p, &cm, 1.0);
        }
        m
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Squash {
    None,
    Tanh,
}

/// Smooth injective map from a latent feature space into a higher-dimensional
/// ambient space: `s = squash(gain * (W x + b))` with orthonormal columns in `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEmbedding {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub weights: Matrix,
    pub bias: Vector,
    pub gain: f64,
    pub squash: Squash,
    pub seed: Option<u64>,
}

impl LatentEmbedding {
    pub fn random(latent_dim: usize, ambient_dim: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 || ambient_dim < latent_dim {
            return Err(Error::InvalidArgument("ambient dimension must be >= latent dimension >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(ambient_dim, latent_dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let weights = g.qr().q();
        let bias = DVector::from_fn(ambient_dim, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        Ok(LatentEmbedding { latent_dim, ambient_dim, weights, bias, gain: 0.5, squash: Squash::Tanh, seed: Some(seed) })
    }

    /// Zero-padding map `x -> (x, 0, ..., 0)`.
    pub fn padding(latent_dim: usize, ambient_dim: usize) -> Result<Self> {
        if ambient_dim < latent_dim {
            return Err(Error::InvalidArgument("ambient dimension must be >= latent dimension".into()));
        }
        Ok(LatentEmbedding {
            latent_dim,
            ambient_dim,
            weights: Matrix::identity(ambient_dim, latent_dim),
            bias: Vector::zeros(ambient_dim),
            gain: 1.0,
            squash: Squash::None,
            seed: None,
        })
    }

    pub fn map(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.latent_dim {
            return Err(Error::DimMismatch { expected: self.latent_dim, got: x.len() });
        }
        let a = (&self.weights * x + &self.bias) * self.gain;
        Ok(match self.squash {
            Squash::None => a,
            Squash::Tanh => a.map(f64::tanh),
        })
    }

    /// `∂s/∂x`, ambient by latent.
    pub fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        if x.len() != self.latent_dim {
            return Err(Error::DimMismatch { expected: self.latent_dim, got: x.len() });
        }
        let a = (&self.weights * x + &self.bias) * self.gain;
        let mut j = &self.weights * self.gain;
        if self.squash == Squash::Tanh {
            for (i, ai) in a.iter().enumerate() {
                let d = 1.0 - ai.tanh().powi(2);
                j.row_mut(i).scale_mut(d);
            }
        }
        Ok(j)
    }

    pub fn embed_continuum(&self, path: &[Vector]) -> Result<Vec<Vector>> {
        path.iter().map(|x| self.map(x)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ComponentSpec {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Expgauss { c1: f64, tau: f64, sigma2_sq: f64 },
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    #[serde(default)]
    pub priors: Vec<f64>,
    pub components: Vec<ComponentSpec>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<CategoryModel> {
        let comps = self
            .components
            .iter()
            .map(|c| match c {
                ComponentSpec::Gaussian { mean, cov } => {
                    let k = mean.len();
                    if cov.len() != k || cov.iter().any(|r| r.len() != k) {
                        return Err(Error::InvalidModel("covariance shape does not match mean".into()));
                    }
                    let m = Matrix::from_fn(k, k, |i, j| cov[i][j]);
                    Ok(Component::Gaussian(GaussianComponent::new(Vector::from_vec(mean.clone()), m)?))
                }
                ComponentSpec::Expgauss { c1, tau, sigma2_sq } => {
                    Ok(Component::ExpGauss(ExpGaussComponent::new(*c1, *tau, *sigma2_sq)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let model = if self.priors.is_empty() {
            CategoryModel::uniform(comps)?
        } else {
            CategoryModel::new(self.priors.clone(), comps)?
        };
        if model.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: model.dim() });
        }
        Ok(model)
    }
}

impl From<&CategoryModel> for ModelSpec {
    fn from(m: &CategoryModel) -> Self {
        ModelSpec {
            dim: m.dim,
            priors: m.priors.clone(),
            components: m
                .components
                .iter()
                .map(|c| match c {
                    Component::Gaussian(g) => ComponentSpec::Gaussian {
                        mean: g.mean.iter().copied().collect(),
                        cov: (0..g.cov.nrows()).map(|i| g.cov.row(i).iter().copied().collect()).collect(),
                    },
                    Component::ExpGauss(e) => ComponentSpec::Expgauss { c1: e.c1, tau: e.tau, sigma2_sq: e.sigma2_sq },
                })
                .collect(),
        }
    }
}

impl Serialize for CategoryModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CategoryModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ModelSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_vec(x.to_vec())
    }

    #[test]
    fn symmetric_pair_posterior_is_half() {
        let m = CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).unwrap();
        let p = m.posterior(&v(&[0.0])).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_covariance_posterior_at_center() {
        // oracle: ratio of the two densities evaluated directly
        let m = CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).unwrap();
        let p = m.posterior(&v(&[1.0])).unwrap();
        let dens = |x: f64, c: f64| (-(x - c) * (x - c) / 2.0).exp();
        let direct = dens(1.0, 1.0) / (dens(1.0, 1.0) + dens(1.0, -1.0));
        assert!((p[1] - direct).abs() < 1e-14);
        assert!((p[1] - 0.880_797_077_977_882_3).abs() < 1e-12);
    }

    #[test]
    fn posterior_far_away_does_not_underflow() {
        let m = CategoryModel::diagonal_pair(1.5, 0.6, &v(&[1.0])).unwrap();
        let p = m.posterior(&v(&[300.0])).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p[1] > 0.999);
    }

    #[test]
    fn outside_support_is_an_error() {
        let m = CategoryModel::exp_gauss_pair(1.0, 0.2, 0.5, 0.1, 0.4).unwrap();
        assert!(matches!(m.posterior(&v(&[1.5, 0.0])), Err(Error::AllDensitiesZero)));
    }

    #[test]
    fn log_odds_requires_two_classes() {
        let m = CategoryModel::three_gaussians(0.5).unwrap();
        assert!(matches!(m.log_odds(&v(&[0.0, 0.0])), Err(Error::NotBinary(3))));
    }

    #[test]
    fn equal_covariance_gradient_is_constant() {
        let m = CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0, 0.0])).unwrap();
        for x in [v(&[0.3, -2.0]), v(&[-4.0, 1.0])] {
            let lo = m.log_odds_full(&x).unwrap();
            assert!((lo.grad[0] - 2.0).abs() < 1e-14 && lo.grad[1].abs() < 1e-14);
            assert!(lo.hessian.amax() < 1e-15);
        }
    }

    #[test]
    fn diagonal_case_log_odds_structure() {
        let (a, s) = (1.5f64, 0.6f64);
        let m = CategoryModel::diagonal_pair(a, s, &v(&[1.0])).unwrap();
        let eta = (a * a - 1.0) / (a * a * s * s);
        let rho = (a * a + 1.0) / (a * a - 1.0);
        let gamma = 2.0 * a.ln() / eta;
        assert!((eta - 1.543_209_876_543_209_8).abs() < 1e-12);
        assert!((rho - 2.6).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            let expect = eta / 2.0 * (x * x + 2.0 * rho * x + 1.0 - gamma);
            assert!((m.log_odds(&v(&[x])).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn expgauss_x1_density_normalizes() {
        for (c1, tau) in [(1.0, 0.5), (-1.0, 0.2), (0.3, 0.7), (1.4, 0.3)] {
            let e = ExpGaussComponent::new(c1, tau, 0.1).unwrap();
            let f = |t: f64| (e.log_density(&v(&[t, 0.0])) + 0.5 * (2.0 * PI * 0.1).ln()).exp();
            let mut knots = vec![-1.0, 1.0];
            if c1 > -1.0 && c1 < 1.0 {
                knots.insert(1, c1);
            }
            let total: f64 = knots.windows(2).map(|w| crate::quadrature::adaptive_simpson(&f, w[0], w[1], 1e-14)).sum();
            assert!((total - 1.0).abs() < 1e-10, "c1={c1} tau={tau} total={total}");
        }
    }

    #[test]
    fn degenerate_prior_gives_single_label() {
        let m = CategoryModel::new(
            vec![1.0, 0.0],
            vec![
                Component::Gaussian(GaussianComponent::isotropic(v(&[0.0]), 1.0).unwrap()),
                Component::Gaussian(GaussianComponent::isotropic(v(&[3.0]), 1.0).unwrap()),
            ],
        )
        .unwrap();
        assert!(m.sample(1000, 5).iter().all(|(_, y)| *y == 0));
    }

    #[test]
    fn sampling_is_deterministic_and_balanced() {
        let m = CategoryModel::diagonal_pair(1.0, 1.0, &v(&[1.0])).unwrap();
        let a = m.sample(100_000, 9);
        let b = m.sample(100_000, 9);
        assert!(a.iter().zip(&b).all(|(p, q)| p.1 == q.1 && p.0 == q.0));
        let frac = a.iter().filter(|(_, y)| *y == 0).count() as f64 / a.len() as f64;
        assert!((frac - 0.5).abs() < 0.01);
        let zeros: Vec<f64> = a.iter().filter(|(_, y)| *y == 0).map(|(x, _)| x[0]).collect();
        let mean = zeros.iter().sum::<f64>() / zeros.len() as f64;
        assert!((mean + 1.0).abs() < 4.0 / (zeros.len() as f64).sqrt());
    }

    #[test]
    fn embedding_padding_and_reversal() {
        let e = LatentEmbedding::padding(2, 5).unwrap();
        let out = e.embed_continuum(&[v(&[0.25, -1.5])]).unwrap();
        assert_eq!(out[0], v(&[0.25, -1.5, 0.0, 0.0, 0.0]));
        let r = LatentEmbedding::random(2, 20, 4).unwrap();
        let path: Vec<Vector> = (0..31).map(|i| v(&[-1.0 + i as f64 / 15.0, 0.2])).collect();
        let fwd = r.embed_continuum(&path).unwrap();
        let mut rev_path = path.clone();
        rev_path.reverse();
        let mut rev = r.embed_continuum(&rev_path).unwrap();
        rev.reverse();
        assert_eq!(fwd, rev);
        for i in 0..fwd.len() {
            for j in i + 1..fwd.len() {
                assert!((&fwd[i] - &fwd[j]).norm() > 1e-6);
            }
        }
        assert!(matches!(r.map(&v(&[1.0])), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn embedding_jacobian_matches_differences() {
        let r = LatentEmbedding::random(2, 7, 1).unwrap();
        let x = v(&[0.3, -0.8]);
        let j = r.jacobian(&x).unwrap();
        for k in 0..2 {
            let mut xp = x.clone();
            xp[k] += 1e-6;
            let mut xm = x.clone();
            xm[k] -= 1e-6;
            let fd = (r.map(&xp).unwrap() - r.map(&xm).unwrap()) / 2e-6;
            assert!((fd - j.column(k)).amax() < 1e-8);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m = CategoryModel::exp_gauss_pair(1.0, 0.2, 0.5, 0.1, 0.4).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: CategoryModel = serde_json::from_str(&s).unwrap();
        let x = v(&[0.1, 0.2]);
        assert_eq!(m.log_odds(&x).unwrap(), back.log_odds(&x).unwrap());
        let text = r#"{"dim":1,"components":[{"type":"gaussian","mean":[-1],"cov":[[1]]},{"type":"gaussian","mean":[1],"cov":[[2]]}]}"#;
        let m2: CategoryModel = serde_json::from_str(text).unwrap();
        assert_eq!(m2.priors(), &[0.5, 0.5]);
    }
}
