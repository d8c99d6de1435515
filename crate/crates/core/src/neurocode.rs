//! Population codes: tuning curves with a noise model, their neural Fisher
//! information (analytic and Monte-Carlo), noise-density Fisher F_Q, and the
//! Jacobian pushforward of Fisher matrices.

use nalgebra::Cholesky;
use nalgebra::Dyn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::catfisher::{FisherField, FisherMatrix};
use crate::error::{Error, Flag, Result};
use crate::mc::{map_chunks, MCConfig};
use crate::quadrature::integrate_real_line;
use crate::{Matrix, Vector};

/// Units whose mean rate falls below this are dropped from rate-dependent Fisher sums.
pub const RATE_FLOOR: f64 = 1e-9;
/// Relative eigenvalue level below which a neural Fisher matrix is flagged singular.
pub const SINGULAR_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CurveFamily {
    /// `exp(-‖u‖²/2)` with `u = (x - x_i)/a_i`.
    RadialBump,
    /// Logistic of `d · (x - x_i)/a_i` for a unit direction `d`.
    SigmoidRamp { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub center: Vec<f64>,
    pub width: f64,
    pub max_rate: f64,
    #[serde(flatten)]
    pub family: CurveFamily,
}

impl Unit {
    pub fn radial(center: Vec<f64>, width: f64, max_rate: f64) -> Self {
        Unit { center, width, max_rate, family: CurveFamily::RadialBump }
    }

    /// Sigmoid ramp along the first axis.
    pub fn sigmoid(center: Vec<f64>, width: f64, max_rate: f64) -> Self {
        let mut direction = vec![0.0; center.len()];
        direction[0] = 1.0;
        Unit { center, width, max_rate, family: CurveFamily::SigmoidRamp { direction } }
    }

    /// Rate and gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let k = self.center.len();
        match &self.family {
            CurveFamily::RadialBump => {
                let d2: f64 = (0..k).map(|j| ((x[j] - self.center[j]) / self.width).powi(2)).sum();
                let f = self.max_rate * (-0.5 * d2).exp();
                let g = (0..k).map(|j| -f * (x[j] - self.center[j]) / (self.width * self.width)).collect();
                (f, g)
            }
            CurveFamily::SigmoidRamp { direction } => {
                let u: f64 = (0..k).map(|j| direction[j] * (x[j] - self.center[j])).sum::<f64>() / self.width;
                let s = logistic(u);
                let ds = s * (1.0 - s);
                let g = (0..k).map(|j| self.max_rate * ds * direction[j] / self.width).collect();
                (self.max_rate * s, g)
            }
        }
    }
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Unit-variance noise density shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum QTag {
    #[default]
    Gaussian,
    Laplace,
    StudentT { nu: f64 },
    /// Flat density; has no finite Fisher information.
    Uniform,
}

impl QTag {
    pub fn validate(&self) -> Result<()> {
        if let QTag::StudentT { nu } = self {
            if !(*nu > 2.0) {
                return Err(Error::InvalidArgument("student-t needs nu > 2 for unit variance".into()));
            }
        }
        Ok(())
    }

    pub fn log_pdf(&self, z: f64) -> f64 {
        match *self {
            QTag::Gaussian => -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            QTag::Laplace => -0.5 * 2f64.ln() - 2f64.sqrt() * z.abs(),
            QTag::StudentT { nu } => {
                let s0 = ((nu - 2.0) / nu).sqrt();
                let u = z / s0;
                libm::lgamma((nu + 1.0) / 2.0) - libm::lgamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln()
                    - (nu + 1.0) / 2.0 * (1.0 + u * u / nu).ln()
                    - s0.ln()
            }
            QTag::Uniform => {
                if z.abs() <= 3f64.sqrt() {
                    -(2.0 * 3f64.sqrt()).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `ψ(z) = (ln Q)'(z)`.
    pub fn score(&self, z: f64) -> f64 {
        match *self {
            QTag::Gaussian => -z,
            QTag::Laplace => -2f64.sqrt() * z.signum(),
            QTag::StudentT { nu } => {
                let s2 = (nu - 2.0) / nu;
                -(nu + 1.0) * z / (nu * s2 + z * z)
            }
            QTag::Uniform => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            QTag::Gaussian => rng.sample(StandardNormal),
            QTag::Laplace => {
                let e: f64 = rng.sample(Exp1);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * e / 2f64.sqrt()
            }
            QTag::StudentT { nu } => {
                let t: f64 = StudentT::new(nu).expect("nu > 0").sample(rng);
                t * ((nu - 2.0) / nu).sqrt()
            }
            QTag::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }

    fn smooth(&self) -> Result<()> {
        self.validate()?;
        if matches!(self, QTag::Uniform) {
            return Err(Error::NonSmoothDensity);
        }
        Ok(())
    }

    /// Location Fisher information `F_Q = E[ψ²]`.
    pub fn fq(&self) -> Result<f64> {
        fq_of_density(*self)
    }

    /// Scale Fisher term `G_Q = E[ψ² z²] - 1`.
    pub fn gq(&self) -> Result<f64> {
        self.smooth()?;
        match self {
            QTag::Gaussian => Ok(2.0),
            _ => {
                let f = |z: f64| {
                    let p = self.score(z) * z;
                    p * p * self.log_pdf(z).exp()
                };
                Ok(integrate_real_line(&f, 1e-13) - 1.0)
            }
        }
    }
}

/// `F_Q = ∫ (Q'/Q)² Q dz` over the whole line.
pub fn fq_of_density(q: QTag) -> Result<f64> {
    q.smooth()?;
    match q {
        QTag::Gaussian => Ok(1.0),
        _ => {
            let f = |z: f64| q.score(z).powi(2) * q.log_pdf(z).exp();
            Ok(integrate_real_line(&f, 1e-13))
        }
    }
}

/// Variance link `g(f)` of multiplicative noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceLink {
    /// `g = f`, Poisson-like.
    Rate,
    /// `g = f²`, dropout-like.
    RateSquared,
    /// `g = 1`, additive.
    Constant,
}

impl VarianceLink {
    pub fn g(&self, f: f64) -> f64 {
        match self {
            VarianceLink::Rate => f,
            VarianceLink::RateSquared => f * f,
            VarianceLink::Constant => 1.0,
        }
    }

    pub fn dg(&self, f: f64) -> f64 {
        match self {
            VarianceLink::Rate => 1.0,
            VarianceLink::RateSquared => 2.0 * f,
            VarianceLink::Constant => 0.0,
        }
    }

    pub fn needs_rate_floor(&self) -> bool {
        !matches!(self, VarianceLink::Constant)
    }

    /// Per-unit weight `w` in `F_i = w ∇f ∇fᵀ` under Gaussian-shape noise.
    pub fn gaussian_weight(&self, f: f64, sigma: f64, form: FisherForm) -> f64 {
        self.weight(f, sigma, 1.0, 2.0, form)
    }

    /// `F_Q/(σ² g) + G_Q g'²/(4 g²)`.
    pub fn weight(&self, f: f64, sigma: f64, fq: f64, gq: f64, form: FisherForm) -> f64 {
        let g = self.g(f);
        let lead = fq / (sigma * sigma * g);
        match form {
            FisherForm::LeadingOrder => lead,
            FisherForm::Exact => {
                let dg = self.dg(f);
                lead + gq * dg * dg / (4.0 * g * g)
            }
        }
    }
}

/// Whether the noise-variance sensitivity term is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FisherForm {
    #[default]
    Exact,
    LeadingOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    GaussianAdditiveIid {
        sigma: f64,
        #[serde(default)]
        q: QTag,
    },
    /// `r = f + σ L z` with `L Lᵀ = C` and IID unit-variance `z`.
    GaussianAdditiveCorrelated {
        sigma: f64,
        corr: Vec<Vec<f64>>,
        #[serde(default)]
        q: QTag,
    },
    /// `r = f + σ sqrt(g(f)) z`.
    MultiplicativeGaussian {
        sigma: f64,
        link: VarianceLink,
        #[serde(default)]
        q: QTag,
    },
    PoissonCount { t: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CodeSpec {
    units: Vec<Unit>,
    noise: NoiseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CodeSpec", into = "CodeSpec")]
pub struct PopulationCode {
    units: Vec<Unit>,
    noise: NoiseSpec,
    dim: usize,
    corr_chol: Option<Cholesky<f64, Dyn>>,
}

impl TryFrom<CodeSpec> for PopulationCode {
    type Error = Error;
    fn try_from(s: CodeSpec) -> Result<Self> {
        PopulationCode::new(s.units, s.noise)
    }
}

impl From<PopulationCode> for CodeSpec {
    fn from(p: PopulationCode) -> Self {
        CodeSpec { units: p.units, noise: p.noise }
    }
}

impl PopulationCode {
    pub fn new(units: Vec<Unit>, noise: NoiseSpec) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("population needs at least one unit".into()));
        }
        let dim = units[0].center.len();
        for u in &units {
            if u.center.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: u.center.len() });
            }
            if !(u.width > 0.0) || !(u.max_rate > 0.0) {
                return Err(Error::InvalidArgument("widths and max rates must be positive".into()));
            }
            if let CurveFamily::SigmoidRamp { direction } = &u.family {
                if direction.len() != dim {
                    return Err(Error::DimMismatch { expected: dim, got: direction.len() });
                }
                let n: f64 = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("sigmoid direction must be a unit vector".into()));
                }
            }
        }
        let n = units.len();
        let mut corr_chol = None;
        match &noise {
            NoiseSpec::GaussianAdditiveIid { sigma, q } | NoiseSpec::MultiplicativeGaussian { sigma, q, .. } => {
                q.validate()?;
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidArgument("sigma must be positive".into()));
                }
            }
            NoiseSpec::GaussianAdditiveCorrelated { sigma, corr, q } => {
                q.validate()?;
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidArgument("sigma must be positive".into()));
                }
                if corr.len() != n || corr.iter().any(|r| r.len() != n) {
                    return Err(Error::DimMismatch { expected: n, got: corr.len() });
                }
                let c = Matrix::from_fn(n, n, |i, j| corr[i][j]);
                if (&c - c.transpose()).amax() > 1e-12 || (0..n).any(|i| (c[(i, i)] - 1.0).abs() > 1e-12) {
                    return Err(Error::InvalidArgument("correlation must be symmetric with unit diagonal".into()));
                }
                corr_chol = Some(
                    Cholesky::new(c)
                        .ok_or_else(|| Error::InvalidArgument("correlation is not positive definite".into()))?,
                );
            }
            NoiseSpec::PoissonCount { t } => {
                if !(*t > 0.0) {
                    return Err(Error::InvalidArgument("observation time must be positive".into()));
                }
            }
        }
        Ok(PopulationCode { units, noise, dim, corr_chol })
    }

    /// `n` sigmoid ramps along the first axis, centers evenly spaced on `[lo, hi]`.
    pub fn sigmoid_ramps_1d(n: usize, lo: f64, hi: f64, width: f64, max_rate: f64, noise: NoiseSpec) -> Result<Self> {
        let units = (0..n)
            .map(|i| {
                let c = if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
                Unit::sigmoid(vec![c], width, max_rate)
            })
            .collect();
        Self::new(units, noise)
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Same tuning curves under a different noise model.
    pub fn with_noise(&self, noise: NoiseSpec) -> Result<Self> {
        Self::new(self.units.clone(), noise)
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn mean_response(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.units.len(), self.units.iter().map(|u| u.eval(x.as_slice()).0))
    }

    /// `∂f_i/∂x_j`, units by features.
    pub fn response_jacobian(&self, x: &Vector) -> Matrix {
        let mut j = Matrix::zeros(self.units.len(), self.dim);
        for (i, u) in self.units.iter().enumerate() {
            let (_, g) = u.eval(x.as_slice());
            for (k, gk) in g.iter().enumerate() {
                j[(i, k)] = *gk;
            }
        }
        j
    }

    pub fn sample_response(&self, x: &Vector, seed: u64) -> Result<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(x, &mut rng)
    }

    pub fn sample_with(&self, x: &Vector, rng: &mut dyn RngCore) -> Result<Vector> {
        self.check(x)?;
        let f = self.mean_response(x);
        self.sample_given_mean(&f, rng)
    }

    pub fn sample_given_mean(&self, f: &Vector, rng: &mut dyn RngCore) -> Result<Vector> {
        let n = f.len();
        Ok(match &self.noise {
            NoiseSpec::GaussianAdditiveIid { sigma, q } => {
                Vector::from_iterator(n, f.iter().map(|fi| fi + sigma * q.sample(rng)))
            }
            NoiseSpec::GaussianAdditiveCorrelated { sigma, q, .. } => {
                let z = Vector::from_iterator(n, (0..n).map(|_| q.sample(rng)));
                f + self.corr_chol.as_ref().unwrap().l() * z * *sigma
            }
            NoiseSpec::MultiplicativeGaussian { sigma, link, q } => {
                if let Some(i) = f.iter().position(|v| *v < 0.0) {
                    return Err(Error::NegativeRate { unit: i, rate: f[i] });
                }
                Vector::from_iterator(n, f.iter().map(|fi| fi + sigma * link.g(*fi).sqrt() * q.sample(rng)))
            }
            NoiseSpec::PoissonCount { t } => Vector::from_iterator(
                n,
                f.iter().map(|fi| {
                    let lam = t * fi.max(0.0);
                    if lam < 1e-300 {
                        0.0
                    } else {
                        Poisson::new(lam).expect("positive rate").sample(rng)
                    }
                }),
            ),
        })
    }

    /// `ln P(r|x)` given the mean rates `f = f(x)`.
    pub fn log_likelihood_given_mean(&self, r: &Vector, f: &Vector) -> f64 {
        match &self.noise {
            NoiseSpec::GaussianAdditiveIid { sigma, q } => {
                r.iter().zip(f.iter()).map(|(ri, fi)| q.log_pdf((ri - fi) / sigma)).sum::<f64>()
                    - f.len() as f64 * sigma.ln()
            }
            NoiseSpec::GaussianAdditiveCorrelated { sigma, q, .. } => {
                let l = self.corr_chol.as_ref().unwrap().l();
                let z = l.solve_lower_triangular(&((r - f) / *sigma)).expect("invertible factor");
                let log_det: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
                z.iter().map(|zi| q.log_pdf(*zi)).sum::<f64>() - log_det - f.len() as f64 * sigma.ln()
            }
            NoiseSpec::MultiplicativeGaussian { sigma, link, q } => r
                .iter()
                .zip(f.iter())
                .map(|(ri, fi)| {
                    let s = sigma * link.g(fi.max(RATE_FLOOR)).sqrt();
                    q.log_pdf((ri - fi) / s) - s.ln()
                })
                .sum(),
            NoiseSpec::PoissonCount { t } => r
                .iter()
                .zip(f.iter())
                .map(|(ri, fi)| {
                    let lam = t * fi.max(RATE_FLOOR);
                    ri * lam.ln() - lam - libm::lgamma(ri + 1.0)
                })
                .sum(),
        }
    }

    pub fn log_likelihood(&self, r: &Vector, x: &Vector) -> f64 {
        self.log_likelihood_given_mean(r, &self.mean_response(x))
    }

    /// Score `∇_x ln P(r|x)`.
    pub fn score(&self, r: &Vector, x: &Vector) -> Vector {
        let f = self.mean_response(x);
        let j = self.response_jacobian(x);
        let n = f.len();
        let coef = match &self.noise {
            NoiseSpec::GaussianAdditiveIid { sigma, q } => {
                Vector::from_iterator(n, (0..n).map(|i| -q.score((r[i] - f[i]) / sigma) / sigma))
            }
            NoiseSpec::GaussianAdditiveCorrelated { sigma, q, .. } => {
                let l = self.corr_chol.as_ref().unwrap().l();
                let z = l.solve_lower_triangular(&((r - &f) / *sigma)).expect("invertible factor");
                let psi = z.map(|zi| q.score(zi));
                -l.transpose().solve_upper_triangular(&psi).expect("invertible factor") / *sigma
            }
            NoiseSpec::MultiplicativeGaussian { sigma, link, q } => Vector::from_iterator(
                n,
                (0..n).map(|i| {
                    if link.needs_rate_floor() && f[i] < RATE_FLOOR {
                        return 0.0;
                    }
                    let g = link.g(f[i]);
                    let s = sigma * g.sqrt();
                    let z = (r[i] - f[i]) / s;
                    let psi = q.score(z);
                    -psi / s - (psi * z + 1.0) * link.dg(f[i]) / (2.0 * g)
                }),
            ),
            NoiseSpec::PoissonCount { t } => Vector::from_iterator(
                n,
                (0..n).map(|i| if f[i] < RATE_FLOOR { 0.0 } else { r[i] / f[i] - t }),
            ),
        };
        j.transpose() * coef
    }
}

/// Analytic neural Fisher information of the code at `x`.
pub fn fisher_code(code: &PopulationCode, x: &Vector) -> Result<FisherMatrix> {
    fisher_code_with(code, x, FisherForm::Exact)
}

pub fn fisher_code_with(code: &PopulationCode, x: &Vector, form: FisherForm) -> Result<FisherMatrix> {
    code.check(x)?;
    let f = code.mean_response(x);
    let j = code.response_jacobian(x);
    let k = code.dim;
    let mut flags = Vec::new();
    let m = match &code.noise {
        NoiseSpec::GaussianAdditiveIid { sigma, q } => j.transpose() * &j * (q.fq()? / (sigma * sigma)),
        NoiseSpec::GaussianAdditiveCorrelated { sigma, q, .. } => {
            let chol = code.corr_chol.as_ref().unwrap();
            j.transpose() * chol.solve(&j) * (q.fq()? / (sigma * sigma))
        }
        NoiseSpec::MultiplicativeGaussian { sigma, link, q } => {
            let (fq, gq) = (q.fq()?, q.gq()?);
            let w: Vec<f64> = (0..f.len())
                .map(|i| {
                    if link.needs_rate_floor() && f[i] < RATE_FLOOR {
                        flags.push(Flag::RateUnderflow { unit: i });
                        0.0
                    } else {
                        link.weight(f[i], *sigma, fq, gq, form)
                    }
                })
                .collect();
            weighted_gram(&j, &w, k)
        }
        NoiseSpec::PoissonCount { t } => {
            let w: Vec<f64> = (0..f.len())
                .map(|i| {
                    if f[i] < RATE_FLOOR {
                        flags.push(Flag::RateUnderflow { unit: i });
                        0.0
                    } else {
                        t / f[i]
                    }
                })
                .collect();
            weighted_gram(&j, &w, k)
        }
    };
    let fm = FisherMatrix::new(m);
    if fm.is_singular(SINGULAR_REL_TOL) {
        flags.push(Flag::SingularFisher);
    }
    Ok(fm.with_flags(flags))
}

/// `Σ_i w_i J_i J_iᵀ` over the rows of `j`.
pub fn weighted_gram(j: &Matrix, w: &[f64], k: usize) -> Matrix {
    let mut m = Matrix::zeros(k, k);
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let row = j.row(i).transpose();
        m.ger(*wi, &row, &row, 1.0);
    }
    m
}

/// Monte-Carlo Fisher: empirical covariance of the score over `mc.outer_samples` draws.
pub fn fisher_code_numeric(code: &PopulationCode, x: &Vector, mc: &MCConfig) -> Result<FisherMatrix> {
    code.check(x)?;
    mc.validate()?;
    let k = code.dim;
    let f = code.mean_response(x);
    let parts = map_chunks(mc, |range, rng| -> Result<(Vector, Matrix)> {
        let mut s1 = Vector::zeros(k);
        let mut s2 = Matrix::zeros(k, k);
        for _ in range {
            let r = code.sample_given_mean(&f, rng)?;
            let s = code.score(&r, x);
            s1 += &s;
            s2.ger(1.0, &s, &s, 1.0);
        }
        Ok((s1, s2))
    });
    let mut s1 = Vector::zeros(k);
    let mut s2 = Matrix::zeros(k, k);
    for p in parts {
        let (a, b) = p?;
        s1 += a;
        s2 += b;
    }
    let n = mc.outer_samples as f64;
    let mean = s1 / n;
    let cov = s2 / n - &mean * mean.transpose();
    Ok(FisherMatrix::new(cov))
}

/// `Jᵀ F J` for a `K × N_s` Jacobian `J = ∂x/∂s`.
pub fn pushforward_fisher(f: &FisherMatrix, j: &Matrix) -> Result<FisherMatrix> {
    if j.nrows() != f.dim() {
        return Err(Error::DimMismatch { expected: f.dim(), got: j.nrows() });
    }
    Ok(FisherMatrix::new(j.transpose() * f.entries() * j))
}

impl FisherField for PopulationCode {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix> {
        fisher_code(self, x)
    }
}
