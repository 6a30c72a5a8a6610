//! Desk-scale measurements of oscillation decay, growth, Harnack quotients, level-set
//! decay, the Liouville property and Hölder exponents on solved grid functions.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, Anisotropy, Ellipsoid};
use crate::grid::{ExteriorFn, GridFunction};
use crate::kernels::KernelSpec;
use crate::sampling::{rng, split_seed};
use crate::solver::{assemble, scheme_for_grid, solve, GridSpec, SolveOptions, SolveReport};

/// Values against strictly decreasing scales with a log–log least-squares fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    /// Slope of `log value` against `log scale`.
    pub exponent: f64,
    pub intercept: f64,
    /// Unexplained fraction of the `log₂` variance, `1 − R²`.
    pub residual: f64,
    /// RMS of the fit residuals in `log₂` units.
    pub rms: f64,
    pub pass: bool,
    pub degenerate: Option<String>,
}

/// Least squares `y = a + b x`; returns `(b, a, rms)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / m).sqrt();
    (slope, icpt, rms)
}

impl DecayReport {
    /// Fits the positive values; `pass` is left false.
    fn fit(scales: Vec<f64>, values: Vec<f64>) -> Self {
        let pts: Vec<(f64, f64)> =
            scales.iter().zip(&values).filter(|(_, v)| **v > 0.0).map(|(s, v)| (s.log2(), v.log2())).collect();
        let mut r = DecayReport {
            scales,
            values,
            exponent: f64::NAN,
            intercept: f64::NAN,
            residual: f64::NAN,
            rms: f64::NAN,
            pass: false,
            degenerate: None,
        };
        if pts.len() < 2 {
            r.degenerate = Some(if pts.is_empty() { "all values vanish".into() } else { "one positive value".into() });
            return r;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let (b, a, rms) = line_fit(&x, &y);
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / y.len() as f64;
        r.exponent = b;
        r.intercept = a;
        r.rms = rms;
        r.residual = if var > 0.0 { rms * rms / var } else { 0.0 };
        r
    }
}

/// Lattice points of `E` (bounding box with `m` points per axis, plus the center).
fn ellipsoid_points(a: &Anisotropy, e: &Ellipsoid, m: usize) -> Vec<Vec<f64>> {
    let n = a.n();
    let hw = e.half_widths(a);
    let mut out = vec![e.center.clone()];
    let total = m.pow(n as u32);
    for flat in 0..total {
        let mut r = flat;
        let mut y = vec![0.0; n];
        for k in (0..n).rev() {
            let j = r % m;
            r /= m;
            y[k] = e.center[k] - hw[k] + 2.0 * hw[k] * j as f64 / (m - 1) as f64;
        }
        if e.contains(a, &y) {
            out.push(y);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeGiorgiParams {
    pub x0: Vec<f64>,
    pub r0: f64,
    pub scales: usize,
    /// Lattice points per axis in each ellipsoid.
    pub samples: usize,
    /// Residual threshold for a pass.
    pub max_residual: f64,
}

impl DeGiorgiParams {
    pub fn at_origin(n: usize) -> Self {
        Self { x0: vec![0.0; n], r0: 0.5, scales: 6, samples: 33, max_residual: 0.1 }
    }
}

/// `osc_k = max − min of u over E^max_{r_k,1}(x0)`, `r_k = r_0 2^{−k}`; scales whose
/// ellipsoid is thinner than a quarter cell on every axis are dropped.
pub fn de_giorgi_iteration(a: &Anisotropy, u: &GridFunction, p: &DeGiorgiParams) -> Result<DecayReport> {
    let h = u.spacing();
    let mut scales = Vec::new();
    let mut values = Vec::new();
    for k in 0..p.scales {
        let r = p.r0 * 2f64.powi(-(k as i32));
        let e = Ellipsoid::emax(p.x0.clone(), r, 1.0);
        if e.half_widths(a).iter().zip(h).all(|(w, h)| *w < 0.25 * *h) {
            break;
        }
        let pts = ellipsoid_points(a, &e, p.samples.max(3));
        let vals: Vec<f64> = pts.iter().map(|x| u.value_at(x)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scales.push(r);
        values.push(hi - lo);
    }
    if scales.len() < 4 {
        return Err(Error::InsufficientData(format!("{} usable scales, need 4", scales.len())));
    }
    let scale = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if values.iter().all(|v| *v <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        let mut r = DecayReport::fit(scales, vec![0.0; values.len()]);
        r.degenerate = Some("zero oscillation".into());
        return Ok(r);
    }
    let mut r = DecayReport::fit(scales, values);
    r.pass = r.degenerate.is_none() && r.exponent > 0.0 && r.residual < p.max_residual;
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    pub delta: f64,
    pub mu: f64,
    pub tau: f64,
    /// Bound on `max |L_h u|` accepted as the subsolution sign.
    pub eps0: f64,
    /// Lattice points per axis over `[−1, 1]^n`.
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub holds: bool,
    /// `1 − max_{B_{1/2}} u`
    pub margin: f64,
    pub zero_set_measure: f64,
    pub max_b1: f64,
}

/// Checks the hypotheses on the grid (`residual` is the solver's `max |L_h u|`,
/// a bound for `−ℳ⁺u`) and reports `max_{B_{1/2}} u ≤ 1 − μ`.
pub fn growth_lemma_check(u: &GridFunction, residual: f64, p: &GrowthParams) -> Result<GrowthReport> {
    let n = u.n();
    if residual > p.eps0 {
        return Err(Error::Hypothesis { index: 1, detail: format!("residual {residual:e} exceeds ε0 = {:e}", p.eps0) });
    }
    let m = p.samples.max(3);
    let cell = (2.0 / m as f64).powi(n as i32);
    let mut max_b1 = f64::NEG_INFINITY;
    let mut max_half = f64::NEG_INFINITY;
    let mut zero = 0usize;
    let mut x = vec![0.0; n];
    for flat in 0..m.pow(n as u32) {
        let mut r = flat;
        for k in (0..n).rev() {
            x[k] = -1.0 + (2.0 * (r % m) as f64 + 1.0) / m as f64;
            r /= m;
        }
        let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if d >= 1.0 {
            continue;
        }
        let v = u.value_at(&x);
        max_b1 = max_b1.max(v);
        if d < 0.5 {
            max_half = max_half.max(v);
        }
        if v <= 0.0 {
            zero += 1;
        }
    }
    if max_b1 > 1.0 + 1e-12 {
        return Err(Error::Hypothesis { index: 2, detail: format!("max over B_1 is {max_b1}") });
    }
    // tail: nodes outside B_1 and exterior samples on a radial ladder
    let mut tail_pts: Vec<Vec<f64>> =
        (0..u.len()).map(|i| u.node(i)).filter(|x| x.iter().map(|v| v * v).sum::<f64>() >= 1.0).collect();
    let dirs = if n == 1 { 2 } else { 64 };
    for j in 0..dirs {
        let th = std::f64::consts::TAU * j as f64 / dirs as f64;
        let dir: Vec<f64> = if n == 1 {
            vec![if j == 0 { 1.0 } else { -1.0 }]
        } else {
            let mut d = vec![0.0; n];
            d[0] = th.cos();
            d[1] = th.sin();
            d
        };
        for k in 0..40 {
            let rad = 1.0 + 0.25 * k as f64 * (1.0 + k as f64 / 8.0);
            tail_pts.push(dir.iter().map(|v| v * rad).collect());
        }
    }
    for y in &tail_pts {
        let d = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = 2.0 * (2.0 * d).powf(p.tau) - 1.0;
        let v = u.value_at(y);
        if v > bound + 1e-12 {
            return Err(Error::Hypothesis { index: 3, detail: format!("u = {v} > {bound} at {y:?}") });
        }
    }
    let zero_set_measure = zero as f64 * cell;
    if zero_set_measure <= p.delta {
        return Err(Error::Hypothesis {
            index: 4,
            detail: format!("|{{u ≤ 0}} ∩ B_1| = {zero_set_measure} is not above δ = {}", p.delta),
        });
    }
    let margin = 1.0 - max_half;
    Ok(GrowthReport { holds: max_half <= 1.0 - p.mu, margin, zero_set_measure, max_b1 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarnackReport {
    pub ratio: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub u0: f64,
    pub c0: f64,
    /// `u_max / (u(0) + C_0)`
    pub normalized: f64,
    /// The infimum was not positive and has been clamped.
    pub clamped: bool,
}

/// `sup_{B_{1/2}} u / inf_{B_{1/2}} u` over grid nodes, with `C_0` the solver residual.
pub fn harnack_from_solution(u: &GridFunction, c0: f64) -> Result<HarnackReport> {
    let n = u.n();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for i in 0..u.len() {
        let x = u.node(i);
        if x.iter().map(|v| v * v).sum::<f64>() < 0.25 {
            hi = hi.max(u.values()[i]);
            lo = lo.min(u.values()[i]);
        }
    }
    if !hi.is_finite() {
        return Err(Error::InsufficientData("no grid node in B_1/2".into()));
    }
    let floor = 1e-300;
    let clamped = lo <= 0.0;
    let ratio = hi / lo.max(floor);
    let u0 = u.value_at(&vec![0.0; n]);
    Ok(HarnackReport { ratio, u_max: hi, u_min: lo, u0, c0, normalized: hi / (u0 + c0), clamped })
}

/// Solves with nonnegative data `g` and measures the Harnack quotient.
pub fn harnack_ratio(g: ExteriorFn, k: &KernelSpec, grid: &GridSpec, level: u32) -> Result<(HarnackReport, SolveReport)> {
    let q = scheme_for_grid(k.anisotropy(), grid, level);
    let op = assemble(grid, g, k, &q)?;
    let rep = solve(&op, &SolveOptions::default());
    if rep.min < 0.0 {
        return Err(Error::Precondition(format!("solution has negative values ({})", rep.min)));
    }
    Ok((harnack_from_solution(&rep.solution, rep.residual)?, rep))
}

/// `|{u ≥ t} ∩ B_1|` for each threshold, by lattice sampling of `B_1`.
pub fn level_set_measures(u: &GridFunction, thresholds: &[f64], samples: usize) -> Vec<f64> {
    let n = u.n();
    let m = samples.max(3);
    let cell = (2.0 / m as f64).powi(n as i32);
    let mut vals = Vec::new();
    let mut x = vec![0.0; n];
    for flat in 0..m.pow(n as u32) {
        let mut r = flat;
        for k in (0..n).rev() {
            x[k] = -1.0 + (2.0 * (r % m) as f64 + 1.0) / m as f64;
            r /= m;
        }
        if x.iter().map(|v| v * v).sum::<f64>() < 1.0 {
            vals.push(u.value_at(&x));
        }
    }
    thresholds.iter().map(|t| vals.iter().filter(|v| **v >= *t).count() as f64 * cell).collect()
}

/// Fits `|{u ≥ t} ∩ B_1| ≈ C t^{−ε}`; passes with a negative slope.
pub fn point_estimate_decay(u: &GridFunction, thresholds: &[f64], samples: usize) -> Result<DecayReport> {
    if thresholds.len() < 2 || thresholds.windows(2).any(|w| w[1] <= w[0]) || thresholds[0] <= 0.0 {
        return Err(Error::Range("thresholds must be positive and increasing".into()));
    }
    let meas = level_set_measures(u, thresholds, samples);
    // scales are 1/t so that they decrease
    let scales: Vec<f64> = thresholds.iter().map(|t| 1.0 / t).collect();
    let mut r = DecayReport::fit(scales, meas);
    if r.degenerate.is_none() {
        // slope in t is minus the slope in 1/t
        r.exponent = -r.exponent;
        r.pass = r.exponent < 0.0;
    }
    Ok(r)
}

/// Bounded dipole `sign(x_1)`.
pub fn dipole() -> ExteriorFn {
    Arc::new(|x: &[f64]| if x[0] > 0.0 { 1.0 } else if x[0] < 0.0 { -1.0 } else { 0.0 })
}

/// For each `R`, solves in `Π (−R^{2/b_i}, R^{2/b_i})` with data `g` and records `osc_{B_1} u`.
/// Passes when the oscillation decreases along the ladder and the fitted `γ` is positive.
pub fn liouville_probe(
    k: &KernelSpec,
    radii: &[f64],
    g: ExteriorFn,
    nodes: usize,
    level: u32,
) -> Result<DecayReport> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 1.0 {
        return Err(Error::Range("radii must increase from at least 1".into()));
    }
    let a = k.anisotropy();
    let n = a.n();
    let mut osc = Vec::new();
    for &r in radii {
        let grid = GridSpec::aniso_box(a, r, nodes);
        let q = scheme_for_grid(a, &grid, level);
        let rep = solve(&assemble(&grid, g.clone(), k, &q)?, &SolveOptions::default());
        let e = Ellipsoid::e(vec![0.0; n], 1.0, 1.0);
        let pts: Vec<Vec<f64>> = ellipsoid_points(&Anisotropy::isotropic(n, a.s())?, &e, 41);
        let vals: Vec<f64> = pts.iter().map(|x| rep.solution.value_at(x)).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        osc.push(hi - lo);
    }
    // scales 1/R decrease along the ladder
    let scales: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    let mut rep = DecayReport::fit(scales, osc.clone());
    if osc.iter().all(|v| *v <= 1e-13) {
        rep.degenerate = Some("zero oscillation".into());
        rep.pass = true;
        return Ok(rep);
    }
    let monotone = osc.windows(2).all(|w| w[1] < w[0]);
    rep.pass = rep.degenerate.is_none() && monotone && rep.exponent > 0.0;
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Aniso,
    Euclidean,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderParams {
    /// Euclidean radius of the region, centered at the origin.
    pub radius: f64,
    pub pairs: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for HolderParams {
    fn default() -> Self {
        Self { radius: 0.5, pairs: 100_000, bins: 12, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub metric: Metric,
    /// Fitted exponent, capped to `[0, 1]`.
    pub gamma: f64,
    /// Unclipped slope of the envelope.
    pub slope: f64,
    /// `max |Δu| / d^γ` over the sampled pairs.
    pub seminorm: f64,
    pub bin_distances: Vec<f64>,
    pub bin_envelope: Vec<f64>,
    pub degenerate: bool,
    /// The envelope fit collapsed (`γ < 0.05`), typical of a discontinuity.
    pub fit_failed: bool,
}

fn metric_distance(a: &Anisotropy, m: Metric, x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
    match m {
        Metric::Aniso => a.norm(&d),
        Metric::Euclidean => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Hölder fit of a vector field given on a subset of grid nodes.
fn field_holder_fit(
    a: &Anisotropy,
    grid: &GridFunction,
    nodes: &[usize],
    field: &[Vec<f64>],
    metric: Metric,
    p: &HolderParams,
) -> Result<HolderReport> {
    let n = grid.n();
    if nodes.len() < 2 {
        return Err(Error::InsufficientData("fewer than two nodes in the region".into()));
    }
    let mut r = rng(split_seed(p.seed, 7));
    let h = grid.spacing();
    let max_span = 2.0 * p.radius;
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &i) in nodes.iter().enumerate() {
        pos[i] = k;
    }
    // partners at log-uniform offsets from a uniformly chosen node
    let mut samples = Vec::with_capacity(p.pairs);
    let mut idx = vec![0usize; n];
    let mut tries = 0;
    while samples.len() < p.pairs && tries < 20 * p.pairs {
        tries += 1;
        let i = r.gen_range(0..nodes.len());
        grid.multi_index(nodes[i], &mut idx);
        let len = h[0] * (max_span / h[0]).powf(r.gen::<f64>());
        let mut jdx = idx.clone();
        let mut ok = true;
        let mut dir: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v /= dn);
        for k in 0..n {
            let step = (dir[k] * len / h[k]).round() as i64;
            let t = idx[k] as i64 + step;
            if t < 0 || t >= grid.dims()[k] as i64 {
                ok = false;
                break;
            }
            jdx[k] = t as usize;
        }
        if !ok {
            continue;
        }
        let j = pos[grid.flat_index(&jdx)];
        if j == usize::MAX || j == i {
            continue;
        }
        samples.push((i, j));
    }
    let pairs: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|&(i, j)| {
            let d = metric_distance(a, metric, &grid.node(nodes[i]), &grid.node(nodes[j]));
            let du = field[i].iter().zip(&field[j]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            (d, du)
        })
        .collect();
    let scale = field.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let dmax = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut rep = HolderReport {
        metric,
        gamma: 0.0,
        slope: 0.0,
        seminorm: 0.0,
        bin_distances: vec![],
        bin_envelope: vec![],
        degenerate: false,
        fit_failed: false,
    };
    if dmax <= 1e-12 * scale.max(f64::MIN_POSITIVE) || pairs.is_empty() {
        rep.degenerate = true;
        return Ok(rep);
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ln();
    let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max).ln() + 1e-12;
    let bins = p.bins.max(2);
    let mut env = vec![0.0f64; bins];
    for &(d, du) in &pairs {
        let b = (((d.ln() - lo) / (hi - lo)) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        env[b] = env[b].max(du);
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (b, e) in env.iter().enumerate() {
        if *e > 0.0 {
            let center = lo + (b as f64 + 0.5) * (hi - lo) / bins as f64;
            rep.bin_distances.push(center.exp());
            rep.bin_envelope.push(*e);
            x.push(center);
            y.push(e.ln());
        }
    }
    let (slope, _, _) = line_fit(&x, &y);
    rep.slope = slope;
    rep.gamma = slope.clamp(0.0, 1.0);
    rep.seminorm = pairs.iter().map(|(d, du)| du / d.powf(rep.gamma)).fold(0.0, f64::max);
    rep.fit_failed = rep.gamma < 0.05;
    Ok(rep)
}

fn region_nodes(u: &GridFunction, radius: f64) -> Vec<usize> {
    (0..u.len()).filter(|&i| u.node(i).iter().map(|v| v * v).sum::<f64>() <= radius * radius).collect()
}

/// Envelope fit of `|u(x) − u(y)| ≲ d(x, y)^γ` over node pairs in `B_radius`.
pub fn holder_fit(a: &Anisotropy, u: &GridFunction, metric: Metric, p: &HolderParams) -> Result<HolderReport> {
    let nodes = region_nodes(u, p.radius);
    let field: Vec<Vec<f64>> = nodes.iter().map(|&i| vec![u.values()[i]]).collect();
    field_holder_fit(a, u, &nodes, &field, metric, p)
}

/// Central-difference gradient at interior nodes, then [`holder_fit`] on `∇u` (Euclidean).
pub fn gradient_holder_fit(a: &Anisotropy, u: &GridFunction, p: &HolderParams) -> Result<HolderReport> {
    let n = u.n();
    let h = u.spacing();
    let nodes: Vec<usize> = region_nodes(u, p.radius)
        .into_iter()
        .filter(|&i| {
            let mut idx = vec![0; n];
            u.multi_index(i, &mut idx);
            (0..n).all(|k| idx[k] > 0 && idx[k] + 1 < u.dims()[k])
        })
        .collect();
    let field: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&i| {
            let mut idx = vec![0; n];
            u.multi_index(i, &mut idx);
            (0..n)
                .map(|k| {
                    let (mut p, mut m) = (idx.clone(), idx.clone());
                    p[k] += 1;
                    m[k] -= 1;
                    (u.values()[u.flat_index(&p)] - u.values()[u.flat_index(&m)]) / (2.0 * h[k])
                })
                .collect()
        })
        .collect();
    field_holder_fit(a, u, &nodes, &field, Metric::Euclidean, p)
}

/// Bounded random data: a few smooth bumps and waves, nonnegative when asked.
pub fn random_exterior(n: usize, seed: u64, nonnegative: bool) -> ExteriorFn {
    let mut r = rng(seed);
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let c: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
            (c, r.gen_range(0.2..1.0), r.gen_range(0.3..1.5))
        })
        .collect();
    let waves: Vec<(Vec<f64>, f64)> = (0..2)
        .map(|_| ((0..n).map(|_| r.gen_range(-2.0..2.0)).collect(), r.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    Arc::new(move |x: &[f64]| {
        let mut v = 0.0;
        for (c, amp, w) in &terms {
            let d2: f64 = x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum();
            v += amp * (-d2 / (w * w)).exp();
        }
        if !nonnegative {
            for (f, ph) in &waves {
                v += 0.5 * (x.iter().zip(f).map(|(p, q)| p * q).sum::<f64>() + ph).sin();
            }
            v -= 0.5;
        }
        v
    })
}

/// `|B_1|` in `n` dimensions.
pub fn ball_measure(n: usize) -> f64 {
    unit_ball_volume(n)
}
