//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Numeric arguments select a subset, e.g.
//! `cargo test -p catgeom-cli --test acceptance -- 1 2 6`.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use catgeom::infomeasure::{grid_for_model, invariance_check};
use catgeom::neurocode::fq_of_density;
use catgeom::{CategoryModel, Matrix, NoiseSpec, PopulationCode, QTag, Unit, Vector};
use common::{median, pearson, roots, run_in, snapshot, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    check(s < limit_s, || format!("runtime {s:.2} s exceeds {limit_s} s"))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn scenario(dir: &Path, name: &str, cfg: Value) -> Result<Duration, String> {
    let (r, dt) = timed(|| run_in(dir, name, cfg, None));
    r.map_err(|e| format!("{name} failed: {e}"))?;
    Ok(dt)
}

// 1-D pair with log odds written out by hand.
struct Pair {
    a: f64,
    s: f64,
    c: f64,
}

impl Pair {
    fn l(&self, x: f64) -> f64 {
        let (a, s, c) = (self.a, self.s, self.c);
        -a.ln() - (x - c).powi(2) / (2.0 * a * a * s * s) + (x + c).powi(2) / (2.0 * s * s)
    }
    fn dl(&self, x: f64) -> f64 {
        let (a, s, c) = (self.a, self.s, self.c);
        -(x - c) / (a * a * s * s) + (x + c) / (s * s)
    }
    fn d2l(&self) -> f64 {
        1.0 / (self.s * self.s) - 1.0 / (self.a * self.a * self.s * self.s)
    }
    fn fcat(&self, x: f64) -> f64 {
        let p = 1.0 / (1.0 + (-self.l(x)).exp());
        p * (1.0 - p) * self.dl(x).powi(2)
    }
    /// d f_cat / dx = P₊P₋ L' q(x), so maxima are among the roots of q.
    fn q(&self, x: f64) -> f64 {
        -(0.5 * self.l(x)).tanh() * self.dl(x).powi(2) + 2.0 * self.d2l()
    }
}

fn compare_sets(label: &str, got: &[f64], want: &[f64], tol: f64) -> Result<f64, String> {
    let mut g: Vec<f64> = got.iter().copied().filter(|x| !x.is_nan()).collect();
    g.sort_by(f64::total_cmp);
    check(g.len() == want.len(), || format!("{label}: {} values, oracle has {}", g.len(), want.len()))?;
    let worst = g.iter().zip(want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    check(worst < tol, || format!("{label}: |dx| = {worst:.2e}"))?;
    Ok(worst)
}

fn c1(dir: &Path) -> Outcome {
    let dt = scenario(dir, "gauss1d", json!({}))?;
    let t = Table::read(&dir.join("gauss1d_summary.csv"));
    let (a, s, c) = (t.col("a"), t.col("sigma"), t.col("c"));
    let (xbp, xbm, xcp, xcm) = (t.col("x_b_plus"), t.col("x_b_minus"), t.col("x_cat_plus"), t.col("x_cat_minus"));
    check(t.rows.len() == 6, || format!("{} cases", t.rows.len()))?;
    let mut worst = 0.0f64;
    for i in 0..t.rows.len() {
        let p = Pair { a: a[i], s: s[i], c: c[i] };
        let xb = roots(|x| p.l(x), -60.0, 60.0, 0.01);
        let xc: Vec<f64> = roots(|x| p.q(x), -60.0, 60.0, 0.01)
            .into_iter()
            .filter(|&x| p.fcat(x) >= p.fcat(x - 1e-3) && p.fcat(x) >= p.fcat(x + 1e-3))
            .collect();
        let label = format!("a={} sigma={}", a[i], s[i]);
        worst = worst.max(compare_sets(&format!("{label} boundary"), &[xbp[i], xbm[i]], &xb, 1e-8)?);
        worst = worst.max(compare_sets(&format!("{label} maxima"), &[xcp[i], xcm[i]], &xc, 1e-8)?);
        if a[i] == 1.0 {
            check(xbp[i] == 0.0 && xcp[i] == 0.0, || format!("{label}: not exactly 0"))?;
        } else {
            check(xcp[i] > xbp[i] && xcm[i] < xbm[i], || format!("{label}: maxima not displaced outward"))?;
        }
    }
    within(dt, 1.0)?;
    Ok(format!("max |dx| {worst:.1e}, run {:.3} s", dt.as_secs_f64()))
}

fn c2(dir: &Path) -> Outcome {
    let dt = scenario(dir, "pdc2d", json!({}))?;
    let (a, s): (f64, f64) = (1.2, 1.3);
    let eta = (a * a - 1.0) / (a * a * s * s);
    let rho = (a * a + 1.0) / (a * a - 1.0);
    let gamma = 2.0 * a.ln() / eta;
    let zb = (rho * rho - 1.0 + 2.0 * gamma).sqrt();
    let h = |z: f64| {
        let l = 0.5 * eta * (z * z - zb * zb);
        z * z - (2.0 / eta) * (l.exp() + 1.0) / (l.exp() - 1.0)
    };
    let (mut lo, mut hi) = (zb * (1.0 + 1e-12), 100.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if h(m) < 0.0 {
            lo = m
        } else {
            hi = m
        }
    }
    let z = 0.5 * (lo + hi);
    check(z > zb, || "z <= z_B".into())?;

    let pts = Table::read(&dir.join("pdc_points.csv"));
    let radius = |xs: Vec<f64>, ys: Vec<f64>| xs.iter().zip(&ys).map(|(x, y)| (x + rho).hypot(*y)).collect::<Vec<_>>();
    let rb = radius(pts.col("boundary_x_1"), pts.col("boundary_x_2"));
    let rm = radius(pts.col("max_x_1"), pts.col("max_x_2"));
    let eb = rb.iter().map(|r| (r - zb).abs()).fold(0.0, f64::max);
    let em = rm.iter().map(|r| (r - z).abs()).fold(0.0, f64::max);
    check(eb < 1e-6, || format!("boundary radius error {eb:.2e}"))?;
    check(em < 1e-6, || format!("maxima radius error {em:.2e}"))?;

    let lines = Table::read(&dir.join("pdc_polylines.csv"));
    let (curve, x1, x2) = (lines.col("curve"), lines.col("x_1"), lines.col("x_2"));
    let mut lateral = 0.0f64;
    let mut start = 0;
    while start < curve.len() {
        let end = (start..curve.len()).find(|&i| curve[i] != curve[start]).unwrap_or(curve.len());
        let (dx, dy) = (x1[start] + rho, x2[start]);
        let n = dx.hypot(dy);
        for i in start..end {
            lateral = lateral.max(((x1[i] + rho) * dy - x2[i] * dx).abs() / n);
        }
        start = end;
    }
    check(lateral < 1e-5, || format!("lateral deviation {lateral:.2e}"))?;
    within(dt, 5.0)?;
    Ok(format!(
        "z_B {zb:.6} err {eb:.1e}, z {z:.6} err {em:.1e}, lateral {lateral:.1e}, run {:.2} s",
        dt.as_secs_f64()
    ))
}

fn c3(dir: &Path) -> Outcome {
    let dt = scenario(dir, "mi-validate", json!({}))?;
    let t = Table::read(&dir.join("mi_validate.csv"));
    let (n, gap, asym) = (t.col("n"), t.col("gap"), t.col("asymptotic_gap"));
    check(n == [64.0, 128.0, 256.0, 512.0], || format!("n values {n:?}"))?;
    check(gap.iter().all(|g| *g > 0.0), || format!("nonpositive gap {gap:?}"))?;
    let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = gap.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let ratio = gap[3] / asym[3];
    check((-1.15..=-0.85).contains(&slope), || format!("slope {slope:.3}"))?;
    check((ratio - 1.0).abs() < 0.15, || format!("gap/asymptotic at N=512 is {ratio:.3}"))?;
    within(dt, 300.0)?;
    Ok(format!("slope {slope:.3}, ratio at 512 {ratio:.3}, run {:.1} s", dt.as_secs_f64()))
}

fn rotation(t: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
}

/// Square lattice of radial bumps centered on the origin. It spans the whole
/// integration box, so neither grid sees a tail where the code goes silent.
fn lattice(n: usize, spacing: f64, width: f64, rate: f64) -> Vec<Unit> {
    let off = 0.5 * (n - 1) as f64 * spacing;
    (0..n * n).map(|i| Unit::radial(vec![(i % n) as f64 * spacing - off, (i / n) as f64 * spacing - off], width, rate)).collect()
}

fn c4(_: &Path) -> Outcome {
    let (res, dt) = timed(|| -> Outcome {
        let model = CategoryModel::diagonal_pair(1.2, 1.0, &Vector::from_vec(vec![1.0, 0.0])).map_err(|e| e.to_string())?;
        let code = PopulationCode::new(
            lattice(9, 3.0, 2.5, 1.0),
            NoiseSpec::GaussianAdditiveIid { sigma: 0.1, q: QTag::Gaussian },
        )
        .map_err(|e| e.to_string())?;
        let corr = (0..49).map(|i: i32| (0..49).map(|j: i32| 0.3f64.powi((i - j).abs())).collect()).collect();
        let correlated = PopulationCode::new(
            lattice(7, 4.0, 3.0, 2.0),
            NoiseSpec::GaussianAdditiveCorrelated { sigma: 0.2, corr, q: QTag::Gaussian },
        )
        .map_err(|e| e.to_string())?;
        let grid = grid_for_model(&model, 61).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0.0f64;
        let mut worst_cond = 0.0f64;
        for trial in 0..10 {
            let s1 = rng.random_range(0.5..2.0);
            let s2 = s1 * rng.random_range(0.15..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let j = rotation(rng.random_range(0.0..6.3))
                * Matrix::from_diagonal(&Vector::from_vec(vec![s1, s2]))
                * rotation(rng.random_range(0.0..6.3));
            let sv = j.clone().singular_values();
            let cond = sv.max() / sv.min();
            check(cond < 10.0, || format!("trial {trial}: condition number {cond:.2}"))?;
            worst_cond = worst_cond.max(cond);
            for (name, r) in [
                ("population", invariance_check(&model, &code, &j, &grid)),
                ("correlated", invariance_check(&model, &correlated, &j, &grid)),
            ] {
                let r = r.map_err(|e| format!("trial {trial} {name}: {e}"))?;
                check(r.rel_dev < 1e-6, || format!("trial {trial} {name}: rel dev {:.2e}", r.rel_dev))?;
                worst = worst.max(r.rel_dev);
            }
        }
        Ok(format!("max rel dev {worst:.1e} over 10 maps (cond up to {worst_cond:.1}), two codes"))
    });
    let detail = res?;
    within(dt, 10.0)?;
    Ok(format!("{detail}, {:.2} s", dt.as_secs_f64()))
}

fn branch_changes(t: &Table) -> (Vec<usize>, Vec<f64>) {
    let (b, x) = (t.col("branch_id"), t.col("x"));
    // nodes with zero allocation carry no branch
    let idx: Vec<usize> = (1..b.len()).filter(|&i| !b[i - 1].is_nan() && !b[i].is_nan() && b[i] != b[i - 1]).collect();
    let xs = idx.iter().map(|&i| x[i]).collect();
    (idx, xs)
}

fn c5(dir: &Path) -> Outcome {
    let dt = scenario(dir, "allocate", json!({}))?;
    let mut devs = Vec::new();
    for name in ["power_law", "entropic"] {
        let closed = Table::read(&dir.join(format!("{name}.csv")));
        let grid = Table::read(&dir.join(format!("{name}_grid.csv")));
        check(closed.rows.len() == 1000, || format!("{name}: {} nodes", closed.rows.len()))?;
        let dev = closed
            .col("fcode")
            .iter()
            .zip(grid.col("fcode"))
            .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        check(dev < 1e-6, || format!("{name}: closed form vs grid {dev:.2e}"))?;
        devs.push(dev);
    }
    let coarse = Table::read(&dir.join("two_branch_201.csv"));
    let fine = Table::read(&dir.join("two_branch_401.csv"));
    let (ic, xc) = branch_changes(&coarse);
    let (if_, xf) = branch_changes(&fine);
    check(ic.len() == 1, || format!("201 nodes: {} branch changes", ic.len()))?;
    check(if_.len() == 1, || format!("401 nodes: {} branch changes", if_.len()))?;
    let x = coarse.col("x");
    let step = x[1] - x[0];
    let shift = (xc[0] - xf[0]).abs();
    check(shift <= step * (1.0 + 1e-9), || format!("jump moved {shift:.4} under refinement, node spacing {step:.4}"))?;
    within(dt, 10.0)?;
    Ok(format!(
        "rel dev {:.1e}/{:.1e}, jump at x {:.4} vs {:.4}, run {:.2} s",
        devs[0],
        devs[1],
        xc[0],
        xf[0],
        dt.as_secs_f64()
    ))
}

fn c6(_: &Path) -> Outcome {
    let (vals, dt) = timed(|| {
        [QTag::Gaussian, QTag::Laplace, QTag::StudentT { nu: 5.0 }].map(|q| fq_of_density(q).map_err(|e| e.to_string()))
    });
    let [g, l, t] = vals;
    let (g, l, t) = (g?, l?, t?);
    check(g == 1.0, || format!("gaussian {g}"))?;
    check((l - 2.0).abs() < 1e-3, || format!("laplace {l}"))?;
    check((t - 1.25).abs() < 1e-3, || format!("student-t {t}"))?;
    check([g, l, t].iter().all(|v| *v >= 1.0), || "F_Q below 1".into())?;
    within(dt, 1.0)?;
    Ok(format!("gaussian {g}, laplace {l:.6}, student-t {t:.6}, {:.3} s", dt.as_secs_f64()))
}

fn c7(dir: &Path) -> Outcome {
    let dt = scenario(dir, "train2d", json!({}))?;
    let runs = Table::read(&dir.join("runs.csv"));
    let (acc, bayes) = (runs.col("test_accuracy"), runs.col("bayes_accuracy"));
    check(runs.rows.len() == 10, || format!("{} runs", runs.rows.len()))?;
    let gap = acc.iter().zip(&bayes).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(gap < 0.02, || format!("accuracy gap {gap:.4}"))?;

    let probes = Table::read(&dir.join("probes.csv"));
    let keep: Vec<bool> = probes.col("excluded").iter().map(|e| *e == 0.0).collect();
    let pick = |name: &str| -> Vec<f64> { probes.col(name).into_iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect() };
    let (before, after, ratio) = (median(&pick("angle_before")), median(&pick("angle_after")), median(&pick("ratio_after")));
    let used = keep.iter().filter(|k| **k).count();
    check(after < 15.0, || format!("median angle after training {after:.2} deg"))?;
    check(before > 30.0, || format!("median angle before training {before:.2} deg"))?;
    check(ratio < 0.2, || format!("median eigenvalue ratio {ratio:.3}"))?;
    within(dt, 600.0)?;
    Ok(format!(
        "max accuracy gap {gap:.4}, angle {before:.1} -> {after:.1} deg, ratio {ratio:.3}, {used} probes, run {:.1} s",
        dt.as_secs_f64()
    ))
}

fn c8(dir: &Path) -> Outcome {
    let dt = scenario(dir, "continuum", json!({}))?;
    let path = Table::read(&dir.join("path.csv"));
    let (post, fisher) = (path.col("post_2"), path.col("fisher"));
    let argmin = |v: &[f64]| (0..v.len()).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    let crossing = argmin(&post.iter().map(|p| (p - 0.5).abs()).collect::<Vec<_>>());
    let peak = argmin(&fisher.iter().map(|f| -f).collect::<Vec<_>>());
    check(peak.abs_diff(crossing) <= 2, || format!("Fisher peak at {peak}, crossing at {crossing}"))?;

    let cos = Table::read(&dir.join("cosine.csv"));
    let r = pearson(&cos.col("cosine_distance"), &cos.col("fisher_mid"));
    check(r > 0.95, || format!("Pearson {r:.4}"))?;

    let units = Table::read(&dir.join("units.csv"));
    let (active, inside) = (units.col("active"), units.col("inside_transition"));
    let n_active = active.iter().filter(|a| **a == 1.0).count();
    let n_inside = active.iter().zip(&inside).filter(|(a, i)| **a == 1.0 && **i == 1.0).count();
    check(n_active > 0, || "no active units".into())?;
    let frac = n_inside as f64 / n_active as f64;
    check(frac >= 0.6, || format!("{n_inside}/{n_active} active units peak inside the transition"))?;
    within(dt, 300.0)?;
    Ok(format!(
        "peak {peak} vs crossing {crossing}, Pearson {r:.4}, inside {n_inside}/{n_active} = {frac:.2}, run {:.1} s",
        dt.as_secs_f64()
    ))
}

fn c9(dir: &Path) -> Outcome {
    let dt = scenario(dir, "biasvar", json!({}))?;
    let t = Table::read(&dir.join("biasvar.csv"));
    let (sigma, term, value, se) = (t.col("sigma"), t.text("term"), t.col("value"), t.col("std_err"));
    let get = |s: f64, name: &str| -> (f64, f64) {
        let i = (0..t.rows.len()).find(|&i| sigma[i] == s && term[i] == name).unwrap_or_else(|| panic!("{name} at {s}"));
        (value[i], se[i])
    };
    let mut sigmas: Vec<f64> = sigma.clone();
    sigmas.dedup();
    let mut notes = Vec::new();
    for &s in &sigmas {
        let (total, st) = get(s, "total");
        let (coding, sc) = get(s, "coding");
        let (dec, sd) = get(s, "decoding_direct");
        let z = (coding + dec - total).abs() / (sc * sc + sd * sd + st * st).sqrt();
        check(z < 3.0, || format!("sigma {s}: coding + decoding off total by {z:.2} SE"))?;
        let (bv, sb) = get(s, "bv_total");
        let zb = (bv - total).abs() / (sb * sb + st * st).sqrt();
        check(zb < 3.0, || format!("sigma {s}: manifold + bias + variance off total by {zb:.2} SE"))?;
        for name in ["total", "coding", "decoding", "decoding_direct", "manifold", "bias", "variance"] {
            let (v, e) = get(s, name);
            check(v >= -3.0 * e, || format!("sigma {s}: {name} = {v:.3e} below -3 SE"))?;
        }
        notes.push(format!("sigma {s}: split {z:.2} SE, bv {zb:.2} SE"));
    }
    let (var, _) = get(0.02, "variance");
    let (eps, _) = get(0.02, "epsilon");
    let (var_u, _) = get(0.02, "var_u");
    let lo = 0.5 * (1.0 - 2.0 * eps / 3.0) * var_u;
    let hi = (0.5 + eps / 3.0 + eps * eps / 4.0) * var_u;
    check(lo <= var && var <= hi, || format!("variance {var:.3e} outside [{lo:.3e}, {hi:.3e}]"))?;
    let (ex_lo, _) = get(0.02, "jensen_lower");
    let (ex_hi, _) = get(0.02, "jensen_upper");
    within(dt, 300.0)?;
    Ok(format!(
        "{}; sigma 0.02 variance {var:.3e} in [{lo:.3e}, {hi:.3e}] (exact band [{ex_lo:.3e}, {ex_hi:.3e}]), run {:.1} s",
        notes.join("; "),
        dt.as_secs_f64()
    ))
}

/// Reduced configs, so the full thread sweep stays quick.
fn reduced() -> Vec<(&'static str, Value)> {
    vec![
        ("gauss1d", json!({})),
        ("pdc2d", json!({})),
        ("fcat-field", json!({ "nodes": 21 })),
        ("fcode-field", json!({ "nodes": 11, "source": { "kind": "train", "config": { "runs": 1, "train": { "epochs": 20 } } } })),
        ("train2d", json!({ "runs": 2, "train": { "epochs": 20, "checkpoint_every": 10 }, "test_size": 2000, "cost_mc": { "outer_samples": 1000, "chunk_size": 250 } })),
        ("continuum", json!({ "runs": 2, "train": { "epochs": 20 } })),
        ("mi-validate", json!({ "n_values": [16, 32], "mc": { "outer_samples": 4000, "chunk_size": 500 } })),
        ("allocate", json!({ "nodes": 200 })),
        ("biasvar", json!({ "mc": { "outer_samples": 4000, "inner_samples": 16, "chunk_size": 500 }, "train": { "epochs": 10 } })),
    ]
}

fn c10(dir: &Path) -> Outcome {
    let mut files = 0;
    for (name, cfg) in reduced() {
        let mut reference = None;
        for threads in [1, 4, 8] {
            for rep in 0..2 {
                let out = dir.join(format!("{name}_{threads}_{rep}"));
                run_in(&out, name, cfg.clone(), Some(threads)).map_err(|e| format!("{name}: {e}"))?;
                let snap = snapshot(&out);
                match &reference {
                    None => {
                        files += snap.len();
                        reference = Some((threads, snap));
                    }
                    Some((t0, r)) => {
                        check(r.keys().eq(snap.keys()), || format!("{name}: file sets differ at {threads} threads"))?;
                        for (f, bytes) in &snap {
                            check(&r[f] == bytes, || format!("{name}/{f}: {threads} threads differs from {t0}"))?;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("9 scenarios, {files} files identical across 2 reruns at 1, 4 and 8 threads"))
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn(&Path) -> Outcome); 10] = [
        (1, "1-D boundary and Fisher maxima", c1),
        (2, "2-D circular loci and radial curves", c2),
        (3, "MI gap scaling", c3),
        (4, "reparametrization invariance", c4),
        (5, "allocation solvers", c5),
        (6, "noise-density Fisher", c6),
        (7, "trained 2-D net alignment", c7),
        (8, "continuum scenario", c8),
        (9, "cost decompositions", c9),
        (10, "determinism", c10),
    ];
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let dir = tmp.path().join(format!("c{id}"));
        let t = Instant::now();
        let res = std::panic::catch_unwind(|| f(&dir)).unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(p))));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {id:>2} PASS  {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
