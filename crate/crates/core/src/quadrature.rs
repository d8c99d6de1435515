//! Tensor-product trapezoid grids and 1-D adaptive quadrature.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

impl QuadratureGrid {
    /// Composite trapezoid rule with `n` nodes on each interval of `bounds`.
    pub fn trapezoid(bounds: &[(f64, f64)], n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument("grid needs at least 3 nodes per dimension".into()));
        }
        let mut nodes = Vec::with_capacity(bounds.len());
        let mut weights = Vec::with_capacity(bounds.len());
        for &(lo, hi) in bounds {
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
            }
            let h = (hi - lo) / (n - 1) as f64;
            nodes.push((0..n).map(|i| lo + h * i as f64).collect());
            let mut w = vec![h; n];
            w[0] = h / 2.0;
            w[n - 1] = h / 2.0;
            weights.push(w);
        }
        Ok(QuadratureGrid { nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node and weight of flat index `idx` (last coordinate fastest).
    pub fn point(&self, mut idx: usize) -> (DVector<f64>, f64) {
        let k = self.dim();
        let mut x = DVector::zeros(k);
        let mut w = 1.0;
        for d in (0..k).rev() {
            let n = self.nodes[d].len();
            let i = idx % n;
            idx /= n;
            x[d] = self.nodes[d][i];
            w *= self.weights[d][i];
        }
        (x, w)
    }

    pub fn points(&self) -> Vec<(DVector<f64>, f64)> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Trapezoid grid on every second node (plus the last one); used as a
    /// refinement check.
    pub fn coarsened(&self) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for d in 0..self.dim() {
            let n = self.nodes[d].len();
            let mut keep: Vec<f64> = self.nodes[d].iter().copied().step_by(2).collect();
            if (n - 1) % 2 == 1 {
                keep.push(self.nodes[d][n - 1]);
            }
            let mut w = vec![0.0; keep.len()];
            for i in 0..keep.len() - 1 {
                let h = keep[i + 1] - keep[i];
                w[i] += h / 2.0;
                w[i + 1] += h / 2.0;
            }
            nodes.push(keep);
            weights.push(w);
        }
        QuadratureGrid { nodes, weights }
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Integral of `f` over the whole real line, split at 0 and mapped to
/// `(-1, 1)` through `z = t / (1 - t^2)`. `f` must decay fast enough that
/// `f(z) z^2 -> 0`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: &F, tol: f64) -> f64 {
    let mapped = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        let z = t / d;
        let v = f(z) * (1.0 + t * t) / (d * d);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive_simpson(&mapped, -1.0, 0.0, tol / 2.0) + adaptive_simpson(&mapped, 0.0, 1.0, tol / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_integrates_gaussian_mass() {
        let g = QuadratureGrid::trapezoid(&[(-6.0, 6.0)], 201).unwrap();
        let s: f64 = g
            .points()
            .iter()
            .map(|(x, w)| w * (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt())
            .sum();
        assert!((s - 1.0).abs() < 1e-8);
    }

    #[test]
    fn coarsened_grid_keeps_interval() {
        for n in [201, 200] {
            let g = QuadratureGrid::trapezoid(&[(0.0, 2.0)], n).unwrap();
            let c = g.coarsened();
            let total: f64 = c.weights[0].iter().sum();
            assert!((total - 2.0).abs() < 1e-12, "n={n} total={total}");
        }
    }

    #[test]
    fn tensor_points_ordering() {
        let g = QuadratureGrid::trapezoid(&[(0.0, 1.0), (10.0, 12.0)], 3).unwrap();
        assert_eq!(g.len(), 9);
        let (x, w) = g.point(5);
        assert_eq!((x[0], x[1]), (0.5, 12.0));
        assert!((w - 0.5 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn real_line_moments() {
        let sd = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((integrate_real_line(&sd, 1e-12) - 1.0).abs() < 1e-10);
        assert!((integrate_real_line(&|z| z * z * sd(z), 1e-12) - 1.0).abs() < 1e-10);
        let cauchy = |z: f64| 1.0 / (std::f64::consts::PI * (1.0 + z * z));
        assert!((integrate_real_line(&cauchy, 1e-12) - 1.0).abs() < 1e-8);
    }
}
