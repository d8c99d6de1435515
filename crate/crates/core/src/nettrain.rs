//! Small feedforward classifiers with a noisy coding layer, trained by SGD on
//! cross-entropy, and probes of the trained code: neural Fisher information,
//! path profiles, cosine proxy, tuning curves and cost decompositions.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catfisher::{FisherField, FisherMatrix};
use crate::categories::{log_sum_exp, CategoryModel};
use crate::error::{Error, Flag, Result};
use crate::infomeasure::{check_grid, kl_logs, InnerPosterior, NoisyCode};
use crate::mc::{jackknife, map_chunks, stream_rng, ChunkSums, MCConfig};
use crate::neurocode::{weighted_gram, FisherForm, VarianceLink, RATE_FLOOR, SINGULAR_REL_TOL};
use crate::quadrature::QuadratureGrid;
use crate::{Matrix, Vector};

/// Pre-activations closer to a relu kink than this are flagged.
pub const KINK_TOL: f64 = 1e-9;

/// Activity norm below which cosine distances are undefined.
pub const ZERO_ACTIVITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => crate::neurocode::logistic(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative from the pre-activation `z` and the output `a`; 0 at the relu kink.
    fn deriv(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Coding-layer noise `r = f + σ √g(f) z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetNoise {
    pub sigma: f64,
    pub link: VarianceLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    activations: Vec<Activation>,
    /// Index of the coding layer among the hidden layers (always the last).
    noise_layer: usize,
    noise: NetNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Post-activation means of every hidden layer.
    pub hidden: Vec<Vector>,
    /// Coding-layer mean `f`.
    pub coding_mean: Vector,
    /// Coding-layer activity as consumed downstream (noisy when requested).
    pub coding: Vector,
    pub output: Vector,
}

impl MLPModel {
    /// Uniform init in `±1/√fan_in` for weights and biases.
    pub fn new(layer_dims: &[usize], activations: &[Activation], noise: NetNoise, seed: u64) -> Result<Self> {
        Self::check_shape(layer_dims, activations, &noise)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let s = 1.0 / (w[0] as f64).sqrt();
                let weights = Matrix::from_fn(w[1], w[0], |_, _| rng.random_range(-s..s));
                let bias = Vector::from_fn(w[1], |_, _| rng.random_range(-s..s));
                Layer { weights, bias }
            })
            .collect();
        Ok(MLPModel {
            layer_dims: layer_dims.to_vec(),
            layers,
            activations: activations.to_vec(),
            noise_layer: activations.len() - 1,
            noise,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, activations: &[Activation], noise: NetNoise) -> Result<Self> {
        let mut dims = vec![layers.first().map_or(0, |l| l.weights.ncols())];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != dims[i] || l.bias.len() != l.weights.nrows() {
                return Err(Error::DimMismatch { expected: dims[i], got: l.weights.ncols() });
            }
            dims.push(l.weights.nrows());
        }
        Self::check_shape(&dims, activations, &noise)?;
        Ok(MLPModel { layer_dims: dims, layers, activations: activations.to_vec(), noise_layer: activations.len() - 1, noise })
    }

    fn check_shape(dims: &[usize], activations: &[Activation], noise: &NetNoise) -> Result<()> {
        if dims.len() < 3 || dims.contains(&0) {
            return Err(Error::InvalidArgument("need input, >= 1 hidden and output layers, all nonempty".into()));
        }
        if activations.len() != dims.len() - 2 {
            return Err(Error::InvalidArgument(format!("{} activations for {} hidden layers", activations.len(), dims.len() - 2)));
        }
        if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
            return Err(Error::InvalidArgument("noise sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn noise(&self) -> NetNoise {
        self.noise
    }

    pub fn with_noise(&self, noise: NetNoise) -> Result<Self> {
        Self::check_shape(&self.layer_dims, &self.activations, &noise)?;
        Ok(MLPModel { noise, ..self.clone() })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn coding_dim(&self) -> usize {
        self.layer_dims[self.noise_layer + 1]
    }

    pub fn num_classes(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1]
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn noisy(&self, f: f64, z: f64) -> f64 {
        f + self.noise.sigma * self.noise.link.g(f.max(0.0)).sqrt() * z
    }

    /// Forward pass; `seed` draws the coding-layer noise when given.
    pub fn forward(&self, x: &Vector, seed: Option<u64>) -> Result<ForwardPass> {
        match seed {
            Some(s) => self.forward_with(x, Some(&mut ChaCha8Rng::seed_from_u64(s))),
            None => self.forward_with(x, None),
        }
    }

    pub fn forward_with(&self, x: &Vector, rng: Option<&mut dyn RngCore>) -> Result<ForwardPass> {
        self.check(x)?;
        let mut hidden = Vec::with_capacity(self.activations.len());
        let mut a = x.clone();
        for (l, act) in self.activations.iter().enumerate() {
            let z = &self.layers[l].weights * &a + &self.layers[l].bias;
            a = z.map(|v| act.apply(v));
            hidden.push(a.clone());
        }
        let coding_mean = a.clone();
        let coding = match rng {
            Some(rng) => Vector::from_iterator(a.len(), a.iter().map(|f| self.noisy(*f, rng.sample(StandardNormal)))),
            None => a,
        };
        let output = softmax(&self.logits(&coding));
        Ok(ForwardPass { hidden, coding_mean, coding, output })
    }

    /// Noiseless coding-layer mean `f(x)`.
    pub fn coding_mean(&self, x: &Vector) -> Vector {
        let mut a = x.clone();
        for (l, act) in self.activations.iter().enumerate() {
            a = (&self.layers[l].weights * &a + &self.layers[l].bias).map(|v| act.apply(v));
        }
        a
    }

    fn logits(&self, r: &Vector) -> Vector {
        let out = &self.layers[self.layers.len() - 1];
        &out.weights * r + &out.bias
    }

    /// `ln g(y|r)` for a coding-layer activity `r`.
    pub fn decode_log(&self, r: &Vector) -> Vec<f64> {
        let z = self.logits(r);
        let lse = log_sum_exp(z.as_slice());
        z.iter().map(|v| v - lse).collect()
    }

    /// Batch forward on columns of `x`; returns pre-activations, mean activations,
    /// the noisy coding activity and the class probabilities.
    fn batch_forward(&self, x: &Matrix, noise: Option<&mut ChaCha8Rng>) -> (Vec<Matrix>, Vec<Matrix>, Matrix, Matrix) {
        let b = x.ncols();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut means = vec![x.clone()];
        let mut a = x.clone();
        for (l, act) in self.activations.iter().enumerate() {
            let mut z = &self.layers[l].weights * &a;
            for mut col in z.column_iter_mut() {
                col += &self.layers[l].bias;
            }
            a = z.map(|v| act.apply(v));
            pre.push(z);
            means.push(a.clone());
        }
        if let Some(rng) = noise {
            let e = Matrix::from_fn(a.nrows(), b, |_, _| rng.sample::<f64, _>(StandardNormal));
            a.zip_apply(&e, |f, z| *f = self.noisy(*f, z));
        }
        let out = &self.layers[self.layers.len() - 1];
        let mut logits = &out.weights * &a;
        for mut col in logits.column_iter_mut() {
            col += &out.bias;
            let lse = log_sum_exp(col.as_slice());
            col.apply(|v| *v = (*v - lse).exp());
        }
        (pre, means, a, logits)
    }

    /// Mean cross-entropy and its gradient on a batch; the coding noise is held
    /// fixed per sample and passed straight through.
    fn loss_and_grad(&self, x: &Matrix, y: &[usize], noise: Option<&mut ChaCha8Rng>) -> (f64, Vec<Layer>) {
        let b = x.ncols() as f64;
        let (pre, means, coding, mut p) = self.batch_forward(x, noise);
        let mut loss = 0.0;
        for (j, &yj) in y.iter().enumerate() {
            loss -= p[(yj, j)].ln();
            p[(yj, j)] -= 1.0;
        }
        let mut dz = p / b;
        let nl = self.layers.len();
        let mut grads: Vec<Layer> = Vec::with_capacity(nl);
        for l in (0..nl).rev() {
            let input = if l == nl - 1 { &coding } else { &means[l] };
            let dw = &dz * input.transpose();
            let db = Vector::from_iterator(dz.nrows(), dz.row_iter().map(|r| r.sum()));
            if l > 0 {
                let mut da = self.layers[l].weights.transpose() * &dz;
                let act = self.activations[l - 1];
                for ((d, z), a) in da.iter_mut().zip(pre[l - 1].iter()).zip(means[l].iter()) {
                    *d *= act.deriv(*z, *a);
                }
                dz = da;
            }
            grads.push(Layer { weights: dw, bias: db });
        }
        grads.reverse();
        (loss / b, grads)
    }

    /// Noiseless mean cross-entropy and its gradient.
    pub fn batch_loss_and_grad(&self, xs: &[Vector], ys: &[usize]) -> Result<(f64, Vec<Layer>)> {
        let x = stack(xs, self.input_dim())?;
        Ok(self.loss_and_grad(&x, ys, None))
    }

    /// Noiseless mean cross-entropy.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        let x = stack(&data.x, self.input_dim())?;
        let (_, _, _, p) = self.batch_forward(&x, None);
        Ok(-data.y.iter().enumerate().map(|(j, &y)| p[(y, j)].ln()).sum::<f64>() / data.len() as f64)
    }

    /// Fraction of noiseless argmax predictions equal to the labels.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let x = stack(&data.x, self.input_dim())?;
        let (_, _, _, p) = self.batch_forward(&x, None);
        let hits = p.column_iter().zip(&data.y).filter(|(c, y)| c.argmax().0 == **y).count();
        Ok(hits as f64 / data.len() as f64)
    }

    /// `∂f_i/∂x_j` at the coding layer with flags for units at relu kinks.
    pub fn coding_jacobian(&self, x: &Vector) -> Result<(Matrix, Vec<Flag>)> {
        self.check(x)?;
        let k = self.input_dim();
        let mut jac = Matrix::identity(k, k);
        let mut a = x.clone();
        let mut upstream_kink = false;
        let mut flags = Vec::new();
        for (l, act) in self.activations.iter().enumerate() {
            let z = &self.layers[l].weights * &a + &self.layers[l].bias;
            a = z.map(|v| act.apply(v));
            let mut next = &self.layers[l].weights * &jac;
            for (i, mut row) in next.row_iter_mut().enumerate() {
                row *= act.deriv(z[i], a[i]);
            }
            jac = next;
            if *act == Activation::Relu {
                let kinks: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() < KINK_TOL).collect();
                if l == self.noise_layer {
                    let all = upstream_kink;
                    flags.extend((0..z.len()).filter(|i| all || kinks.contains(i)).map(|unit| Flag::ReluKink { unit }));
                } else if !kinks.is_empty() {
                    upstream_kink = true;
                }
            }
        }
        Ok((jac, flags))
    }

    /// Rows of the kinked units are excluded by callers using the flags.
    pub fn fisher_with(&self, x: &Vector, form: FisherForm) -> Result<FisherMatrix> {
        let (jac, mut flags) = self.coding_jacobian(x)?;
        let f = self.coding_mean(x);
        let NetNoise { sigma, link } = self.noise;
        let w: Vec<f64> = f
            .iter()
            .enumerate()
            .map(|(i, fi)| {
                if link.needs_rate_floor() && *fi < RATE_FLOOR {
                    if jac.row(i).iter().any(|v| *v != 0.0) {
                        flags.push(Flag::RateUnderflow { unit: i });
                    }
                    0.0
                } else {
                    link.gaussian_weight(*fi, sigma, form)
                }
            })
            .collect();
        let fm = FisherMatrix::new(weighted_gram(&jac, &w, self.input_dim()));
        if fm.is_singular(SINGULAR_REL_TOL) {
            flags.push(Flag::SingularFisher);
        }
        Ok(fm.with_flags(flags))
    }
}

/// Neural Fisher information of the coding layer at `x`, exact Gaussian form.
pub fn fisher_code_net(net: &MLPModel, x: &Vector) -> Result<FisherMatrix> {
    net.fisher_with(x, FisherForm::Exact)
}

impl FisherField for MLPModel {
    fn fisher_at(&self, x: &Vector) -> Result<FisherMatrix> {
        fisher_code_net(self, x)
    }
}

impl NoisyCode for MLPModel {
    fn input_dim(&self) -> usize {
        MLPModel::input_dim(self)
    }

    fn mean(&self, x: &Vector) -> Vector {
        self.coding_mean(x)
    }

    fn sample_given_mean(&self, f: &Vector, rng: &mut dyn RngCore) -> Result<Vector> {
        Ok(Vector::from_iterator(f.len(), f.iter().map(|fi| self.noisy(*fi, rng.sample(StandardNormal)))))
    }

    fn log_likelihood_given_mean(&self, r: &Vector, f: &Vector) -> f64 {
        let NetNoise { sigma, link } = self.noise;
        r.iter()
            .zip(f.iter())
            .map(|(ri, fi)| {
                let s = sigma * link.g(fi.max(RATE_FLOOR)).sqrt();
                let z = (ri - fi) / s;
                -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }
}

pub fn softmax(z: &Vector) -> Vector {
    let lse = log_sum_exp(z.as_slice());
    z.map(|v| (v - lse).exp())
}

fn stack(xs: &[Vector], dim: usize) -> Result<Matrix> {
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimMismatch { expected: dim, got: bad.len() });
    }
    Ok(Matrix::from_fn(dim, xs.len(), |i, j| xs[j][i]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vector>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Vec<Vector>, y: Vec<usize>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimMismatch { expected: x.len(), got: y.len() });
        }
        Ok(Dataset { x, y })
    }

    pub fn from_model(model: &CategoryModel, n: usize, seed: u64) -> Self {
        let (x, y) = model.sample(n, seed).into_iter().unzip();
        Dataset { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Heavy-ball momentum; 0 is plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub noise_during_training: bool,
    /// Keep a copy of the net every this many epochs.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.0,
            seed: 0,
            noise_during_training: true,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub net: MLPModel,
    /// Noiseless training loss before training and after every epoch.
    pub loss: Vec<f64>,
    pub checkpoints: Vec<(usize, MLPModel)>,
}

/// Mini-batch SGD on cross-entropy; epoch `e` shuffles and draws noise from
/// its own stream of `cfg.seed`.
pub fn train_sgd(net: &MLPModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if let Some(&y) = data.y.iter().find(|y| **y >= net.num_classes()) {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    let xs = stack(&data.x, net.input_dim())?;
    let mut net = net.clone();
    let mut velocity: Vec<Layer> = net
        .layers
        .iter()
        .map(|l| Layer { weights: Matrix::zeros(l.weights.nrows(), l.weights.ncols()), bias: Vector::zeros(l.bias.len()) })
        .collect();
    let mut loss = vec![net.loss(data)?];
    let mut checkpoints = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = xs.select_columns(batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.y[i]).collect();
            let noise = cfg.noise_during_training.then_some(&mut rng);
            let (l, grads) = net.loss_and_grad(&x, &y, noise);
            if !l.is_finite() {
                return Err(Error::Diverged(epoch));
            }
            for ((layer, g), v) in net.layers.iter_mut().zip(&grads).zip(velocity.iter_mut()) {
                v.weights *= cfg.momentum;
                v.weights -= &g.weights * cfg.learning_rate;
                v.bias *= cfg.momentum;
                v.bias -= &g.bias * cfg.learning_rate;
                layer.weights += &v.weights;
                layer.bias += &v.bias;
            }
        }
        let l = net.loss(data)?;
        if !l.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        loss.push(l);
        if let Some(k) = cfg.checkpoint_every {
            if k > 0 && (epoch + 1) % k == 0 {
                checkpoints.push((epoch + 1, net.clone()));
            }
        }
    }
    Ok(TrainResult { net, loss, checkpoints })
}

/// An ordered continuum of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProbe {
    pub points: Vec<Vector>,
    #[serde(default)]
    pub labels: Option<(usize, usize)>,
}

impl PathProbe {
    pub fn new(points: Vec<Vector>, labels: Option<(usize, usize)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument("a path needs >= 3 points".into()));
        }
        let k = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != k) {
            return Err(Error::DimMismatch { expected: k, got: p.len() });
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("consecutive path points must differ".into()));
        }
        Ok(PathProbe { points, labels })
    }

    /// `n` evenly spaced points from `a` to `b`.
    pub fn linear(a: &Vector, b: &Vector, n: usize) -> Result<Self> {
        let pts = (0..n).map(|i| a + (b - a) * (i as f64 / (n.max(2) - 1) as f64)).collect();
        Self::new(pts, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tangent per unit index: central differences inside, one-sided at the ends.
    fn tangent(&self, t: usize) -> Vector {
        let p = &self.points;
        let n = p.len();
        if t == 0 {
            &p[1] - &p[0]
        } else if t == n - 1 {
            &p[n - 1] - &p[n - 2]
        } else {
            (&p[t + 1] - &p[t - 1]) * 0.5
        }
    }

    /// Cumulative arc length at each point.
    pub fn arc_length(&self) -> Vec<f64> {
        let mut s = vec![0.0];
        for w in self.points.windows(2) {
            s.push(s[s.len() - 1] + (&w[1] - &w[0]).norm());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFisher {
    /// `vᵀ F v` with `v` the tangent per unit of point index.
    pub per_index: Vec<f64>,
    /// `uᵀ F u` with `u` the unit tangent, i.e. per unit arc length.
    pub per_arc: Vec<f64>,
    pub arc_length: Vec<f64>,
    pub flags: Vec<Vec<Flag>>,
}

impl PathFisher {
    pub fn argmax(&self) -> usize {
        argmax(&self.per_index)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}

/// Scalar Fisher information along a path through any Fisher field.
pub fn fisher_along_path<F: FisherField + ?Sized>(field: &F, probe: &PathProbe) -> Result<PathFisher> {
    let rows: Vec<Result<(f64, f64, Vec<Flag>)>> = (0..probe.len())
        .into_par_iter()
        .map(|t| {
            let v = probe.tangent(t);
            let fm = field.fisher_at(&probe.points[t])?;
            if fm.dim() != v.len() {
                return Err(Error::DimMismatch { expected: v.len(), got: fm.dim() });
            }
            let q = (v.transpose() * fm.entries() * &v)[(0, 0)];
            Ok((q, q / v.norm_squared(), fm.flags.clone()))
        })
        .collect();
    let mut out = PathFisher { per_index: Vec::new(), per_arc: Vec::new(), arc_length: probe.arc_length(), flags: Vec::new() };
    for r in rows {
        let (a, b, f) = r?;
        out.per_index.push(a);
        out.per_arc.push(b);
        out.flags.push(f);
    }
    Ok(out)
}

/// `1 - cos(f(x_t), f(x_{t+1}))` between consecutive mean activities.
pub fn cosine_proxy<C: NoisyCode + ?Sized>(code: &C, probe: &PathProbe) -> Result<Vec<f64>> {
    let f: Vec<Vector> = probe.points.iter().map(|x| code.mean(x)).collect();
    if let Some(i) = f.iter().position(|v| v.norm() < ZERO_ACTIVITY) {
        return Err(Error::ZeroActivity(i));
    }
    Ok(f.windows(2).map(|w| 1.0 - w[0].dot(&w[1]) / (w[0].norm() * w[1].norm())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub a: f64,
    pub b: f64,
    /// Mean absolute residual of `a d + b` against the Fisher profile.
    pub mae: f64,
    pub pearson: f64,
}

/// Least-absolute-deviation fit `F ≈ a d + b`, searched over lines through
/// pairs of data points (one of which is optimal), plus Pearson correlation.
pub fn align_proxy(d: &[f64], f: &[f64]) -> Result<Alignment> {
    if d.len() != f.len() {
        return Err(Error::DimMismatch { expected: d.len(), got: f.len() });
    }
    if d.len() < 2 {
        return Err(Error::InvalidArgument("need >= 2 points to align".into()));
    }
    let n = d.len();
    let mae = |a: f64, b: f64| d.iter().zip(f).map(|(x, y)| (a * x + b - y).abs()).sum::<f64>() / n as f64;
    let mean_f = f.iter().sum::<f64>() / n as f64;
    let mut best = (0.0, mean_f, mae(0.0, mean_f));
    for i in 0..n {
        for j in i + 1..n {
            if d[j] == d[i] {
                continue;
            }
            let a = (f[j] - f[i]) / (d[j] - d[i]);
            let b = f[i] - a * d[i];
            let m = mae(a, b);
            if m < best.2 {
                best = (a, b, m);
            }
        }
    }
    Ok(Alignment { a: best.0, b: best.1, mae: best.2, pearson: pearson(d, f) })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    /// One distance per path segment.
    pub distances: Vec<f64>,
    /// Per-index Fisher averaged over each segment's endpoints.
    pub fisher: Vec<f64>,
    pub alignment: Alignment,
}

/// Cosine proxy of a net's code along a path, aligned with its scalar Fisher.
pub fn cosine_report(net: &MLPModel, probe: &PathProbe) -> Result<CosineReport> {
    let distances = cosine_proxy(net, probe)?;
    let pf = fisher_along_path(net, probe)?;
    let fisher: Vec<f64> = pf.per_index.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let alignment = align_proxy(&distances, &fisher)?;
    Ok(CosineReport { distances, fisher, alignment })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCurves {
    pub unit_ids: Vec<usize>,
    /// `curves[k][t]` is the mean of unit `unit_ids[k]` at path point `t`.
    pub curves: Vec<Vec<f64>>,
    pub fisher_argmax: usize,
}

impl TuningCurves {
    /// Segment index of the steepest change of curve `k`.
    pub fn steepest_segment(&self, k: usize) -> usize {
        let c = &self.curves[k];
        let slopes: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        argmax(&slopes)
    }
}

/// Noiseless coding-layer responses along a path.
pub fn tuning_curves(net: &MLPModel, probe: &PathProbe, unit_ids: &[usize]) -> Result<TuningCurves> {
    if let Some(&u) = unit_ids.iter().find(|u| **u >= net.coding_dim()) {
        return Err(Error::InvalidArgument(format!("unit {u} out of range")));
    }
    let means: Vec<Vector> = probe.points.iter().map(|x| net.coding_mean(x)).collect();
    let curves = unit_ids.iter().map(|&u| means.iter().map(|f| f[u]).collect()).collect();
    let fisher_argmax = fisher_along_path(net, probe)?.argmax();
    Ok(TuningCurves { unit_ids: unit_ids.to_vec(), curves, fisher_argmax })
}

/// Readout from coding activity to class probabilities.
pub trait Decoder: Sync {
    /// `ln g(y|r)`.
    fn log_output(&self, r: &Vector) -> Vec<f64>;
}

impl Decoder for MLPModel {
    fn log_output(&self, r: &Vector) -> Vec<f64> {
        self.decode_log(r)
    }
}

/// The Bayes-optimal decoder `g(y|r) = P(y|r)`.
impl<C: NoisyCode + ?Sized> Decoder for InnerPosterior<'_, C> {
    fn log_output(&self, r: &Vector) -> Vec<f64> {
        self.log_posterior(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    fn from_chunks(chunks: &[ChunkSums], k: usize) -> Self {
        let (value, std_err) = jackknife(chunks, |m| m[k]);
        Estimate { value, std_err }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDecomposition {
    /// `E KL(P(Y|x) ‖ g(Y|r))`.
    pub total: Estimate,
    /// `I[Y,X] - I[Y,R]`.
    pub coding: Estimate,
    /// `total - coding`.
    pub decoding: Estimate,
    /// `E KL(P(Y|r) ‖ g(Y|r))`.
    pub decoding_direct: Estimate,
    /// `decoding - decoding_direct`, zero in expectation.
    pub mismatch: Estimate,
}

/// Mean Bayes cost `E KL(P(Y|x) ‖ g(Y|r))` alone; needs no quadrature.
pub fn total_cost<C: NoisyCode + ?Sized, D: Decoder + ?Sized>(model: &CategoryModel, code: &C, decoder: &D, mc: &MCConfig) -> Result<Estimate> {
    mc.validate()?;
    let chunks = map_chunks(mc, |range, rng| -> Result<ChunkSums> {
        let mut s = ChunkSums::new(1);
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let r = code.sample_given_mean(&code.mean(&x), rng)?;
            s.push(&[kl_logs(&model.log_posterior(&x)?, &decoder.log_output(&r))]);
        }
        Ok(s)
    });
    let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_chunks(&chunks, 0))
}

fn check_terms(terms: &[(&str, &Estimate)]) -> Result<()> {
    for (what, e) in terms {
        if e.value < -3.0 * e.std_err {
            return Err(Error::InconsistentDecomposition { what: what.to_string(), diff: e.value, tol: 3.0 * e.std_err });
        }
    }
    Ok(())
}

/// Coding/decoding split of the mean Bayes cost with paired Monte-Carlo terms.
pub fn decompose_cost_with<C: NoisyCode + ?Sized, D: Decoder + ?Sized>(
    model: &CategoryModel,
    code: &C,
    decoder: &D,
    mc: &MCConfig,
    grid: &QuadratureGrid,
) -> Result<CostDecomposition> {
    mc.validate()?;
    if code.input_dim() != model.dim() || grid.dim() != model.dim() {
        return Err(Error::DimMismatch { expected: model.dim(), got: code.input_dim() });
    }
    check_grid(model, code, mc, grid)?;
    let inner = InnerPosterior::new(model, code, grid);
    let chunks = map_chunks(mc, |range, rng| -> Result<ChunkSums> {
        let mut s = ChunkSums::new(5);
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let r = code.sample_given_mean(&code.mean(&x), rng)?;
            let lp = model.log_posterior(&x)?;
            let lq = inner.log_posterior(&r);
            let lg = decoder.log_output(&r);
            let t = kl_logs(&lp, &lg);
            let c = kl_logs(&lp, &lq);
            let d = kl_logs(&lq, &lg);
            s.push(&[t, c, t - c, d, t - c - d]);
        }
        Ok(s)
    });
    let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    let out = CostDecomposition {
        total: Estimate::from_chunks(&chunks, 0),
        coding: Estimate::from_chunks(&chunks, 1),
        decoding: Estimate::from_chunks(&chunks, 2),
        decoding_direct: Estimate::from_chunks(&chunks, 3),
        mismatch: Estimate::from_chunks(&chunks, 4),
    };
    if out.mismatch.value.abs() > 3.0 * out.mismatch.std_err {
        return Err(Error::InconsistentDecomposition {
            what: "decoding".into(),
            diff: out.mismatch.value,
            tol: 3.0 * out.mismatch.std_err,
        });
    }
    check_terms(&[("total", &out.total), ("coding", &out.coding), ("decoding", &out.decoding)])?;
    Ok(out)
}

/// Nodes per axis of the default quadrature grid for cost decompositions.
pub fn default_grid_nodes(dim: usize) -> usize {
    if dim == 1 {
        201
    } else {
        101
    }
}

/// Starts from the default grid and doubles its resolution (up to three times)
/// while it is too coarse for the code.
pub fn decompose_cost(model: &CategoryModel, net: &MLPModel, mc: &MCConfig) -> Result<CostDecomposition> {
    let mut nodes = default_grid_nodes(model.dim());
    let mut attempt = 0;
    loop {
        let grid = crate::infomeasure::grid_for_model(model, nodes)?;
        match decompose_cost_with(model, net, net, mc, &grid) {
            Err(Error::GridTooCoarse(_)) if attempt < 3 => {
                nodes = 2 * nodes - 1;
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenBand {
    /// `max |u|` with `u = g/ḡ - 1` over all samples and classes.
    pub epsilon: f64,
    /// `E_x Σ_y P(y|x) Var(U_y)`.
    pub var_u: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVariance {
    pub manifold: Estimate,
    pub bias: Estimate,
    pub variance: Estimate,
    /// Independent single-draw estimate of the total cost.
    pub total: Estimate,
    pub jensen: JensenBand,
}

/// `(u - ln(1+u)) / u²`, the Jensen-gap weight.
fn jensen_h(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        0.5 - u / 3.0 + u * u / 4.0
    } else {
        (u - u.ln_1p()) / (u * u)
    }
}

/// Bias, variance and manifold terms of the mean cost. `ḡ` averages the decoder
/// over `mc.inner_samples` noise draws per `x`; the total uses one further
/// independent draw, and the manifold term is the paired remainder.
pub fn bias_variance_with<C: NoisyCode + ?Sized, D: Decoder + ?Sized>(model: &CategoryModel, code: &C, decoder: &D, mc: &MCConfig) -> Result<BiasVariance> {
    mc.validate()?;
    let m = model.num_classes();
    let chunks = map_chunks(mc, |range, rng| -> Result<(ChunkSums, f64)> {
        let mut s = ChunkSums::new(5);
        let mut eps: f64 = 0.0;
        for _ in range {
            let (x, _) = model.sample_one(rng);
            let f = code.mean(&x);
            let lp = model.log_posterior(&x)?;
            let r0 = code.sample_given_mean(&f, rng)?;
            let total = kl_logs(&lp, &decoder.log_output(&r0));
            let mut logs = Vec::with_capacity(mc.inner_samples);
            for _ in 0..mc.inner_samples {
                let r = code.sample_given_mean(&f, rng)?;
                logs.push(decoder.log_output(&r));
            }
            let n = logs.len() as f64;
            let mut lgbar = vec![0.0; m];
            let mut mean_lg = vec![0.0; m];
            for y in 0..m {
                let col: Vec<f64> = logs.iter().map(|l| l[y]).collect();
                lgbar[y] = log_sum_exp(&col) - n.ln();
                mean_lg[y] = col.iter().sum::<f64>() / n;
            }
            let bias = kl_logs(&lp, &lgbar);
            let mut var = 0.0;
            let mut var_u = 0.0;
            for y in 0..m {
                let py = lp[y].exp();
                if py == 0.0 {
                    continue;
                }
                var += py * (lgbar[y] - mean_lg[y]);
                let mut su = 0.0;
                for l in &logs {
                    let u = (l[y] - lgbar[y]).exp_m1();
                    su += u * u;
                    eps = eps.max(u.abs());
                }
                var_u += py * su / n;
            }
            s.push(&[total, bias, var, total - bias - var, var_u]);
        }
        Ok((s, eps))
    });
    let mut sums = Vec::with_capacity(chunks.len());
    let mut eps: f64 = 0.0;
    for c in chunks {
        let (s, e) = c?;
        sums.push(s);
        eps = eps.max(e);
    }
    let var_u = Estimate::from_chunks(&sums, 4).value;
    let out_var = Estimate::from_chunks(&sums, 2);
    let lower = 0.5 * (1.0 - 2.0 * eps / 3.0) * var_u;
    let upper = if eps < 1.0 { jensen_h(-eps) * var_u } else { f64::INFINITY };
    let out = BiasVariance {
        total: Estimate::from_chunks(&sums, 0),
        bias: Estimate::from_chunks(&sums, 1),
        manifold: Estimate::from_chunks(&sums, 3),
        jensen: JensenBand { epsilon: eps, var_u, lower, upper, inside: out_var.value >= lower && out_var.value <= upper },
        variance: out_var,
    };
    check_terms(&[("manifold", &out.manifold), ("bias", &out.bias), ("variance", &out.variance)])?;
    Ok(out)
}

pub fn bias_variance(model: &CategoryModel, net: &MLPModel, mc: &MCConfig) -> Result<BiasVariance> {
    bias_variance_with(model, net, net, mc)
}
