use std::f64::consts::PI;

use catgeom::catfisher::{fcat_binary, find_boundary_on_pdc, locate_fcat_max, trace_pdc_with, DiagonalGeometry, PdcOptions};
use catgeom::{CategoryModel, Result, Vector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{at_least, positive, seeded, v};
use crate::{row, RunOutput, Scenario};

/// The 2-D pair with isotropic covariances `σ²I` and `a²σ²I` centered at `∓c e₁`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pdc2d {
    pub a: f64,
    pub sigma: f64,
    pub c: f64,
    /// Curves traced, with evenly spaced directions around the boundary center.
    pub curves: usize,
    /// Start radius as a fraction of the boundary radius.
    pub start_fraction: f64,
    pub pdc: PdcOptions,
    pub seed: u64,
}

impl Default for Pdc2d {
    fn default() -> Self {
        Pdc2d { a: 1.2, sigma: 1.3, c: 1.0, curves: 16, start_fraction: 0.5, pdc: PdcOptions::default(), seed: 0 }
    }
}

impl Scenario for Pdc2d {
    seeded!();

    fn run(&self, out: &mut RunOutput) -> Result<Value> {
        at_least("curves", self.curves, 1)?;
        positive("start_fraction", self.start_fraction)?;
        let geom = DiagonalGeometry::new(self.a, self.sigma, self.c, 2)?;
        let model = CategoryModel::diagonal_pair(self.a, self.sigma, &v(&[self.c, 0.0]))?;
        let center = v(&[-geom.rho * self.c, 0.0]);
        let mut lines = Vec::new();
        let mut points = Vec::new();
        let (mut err_b, mut err_max, mut lateral) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..self.curves {
            let theta = 2.0 * PI * k as f64 / self.curves as f64;
            let dir = v(&[theta.cos(), theta.sin()]);
            let start = &center + &dir * (self.start_fraction * geom.z_b);
            let pdc = trace_pdc_with(&model, &start, &self.pdc)?;
            let mut dev = 0.0f64;
            for (p, s) in pdc.points.iter().zip(&pdc.arc_lengths) {
                let odds = model.log_odds_full(p)?;
                lines.push(row![k, *s, p[0], p[1], odds.value, fcat_binary(&odds)]);
                let d: Vector = p - &center;
                dev = dev.max((&d - &dir * d.dot(&dir)).norm());
            }
            let b = find_boundary_on_pdc(&model, &pdc)?;
            let (_, m) = locate_fcat_max(&model, &pdc)?;
            let (rb, rm) = ((&b - &center).norm(), (&m - &center).norm());
            err_b = err_b.max((rb - geom.z_b).abs());
            err_max = err_max.max((rm - geom.z).abs());
            lateral = lateral.max(dev);
            points.push(row![k, theta, b[0], b[1], rb, m[0], m[1], rm, dev]);
        }
        out.csv("pdc_polylines.csv", &["curve", "arc_length", "x_1", "x_2", "L", "f_cat"], &lines)?;
        out.csv(
            "pdc_points.csv",
            &["curve", "theta", "boundary_x_1", "boundary_x_2", "boundary_radius", "max_x_1", "max_x_2", "max_radius", "lateral_deviation"],
            &points,
        )?;
        Ok(json!({
            "geometry": geom,
            "center": [center[0], center[1]],
            "boundary_radius_error": err_b,
            "maxima_radius_error": err_max,
            "max_lateral_deviation": lateral,
        }))
    }
}
