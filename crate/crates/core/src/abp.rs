//! Concave envelope on grids, detachment sets, the ABP rectangle family, the
//! Caffarelli–Calderón cover and the anisotropic Calderón–Zygmund splitting.
//!
//! Everything here runs on grid data in dimension one or two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{frak_c, unit_ball_volume, AnisoRect, Anisotropy, Ellipsoid};
use crate::grid::{Exterior, GridFunction};
use crate::kernels::KernelSpec;
use crate::operator::{GridInterp, OperatorPlan};

const B3: f64 = 3.0;

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > 2 {
        return Err(Error::Domain(format!("grid envelopes are implemented for n = 1, 2; got n = {n}")));
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeOptions {
    /// Overrides the default `min(2‖D²u‖_∞ h², 10^{−3}(1 + sup u⁺))`.
    pub contact_tol: Option<f64>,
    /// Points representing `∂B_3` in two dimensions.
    pub circle_points: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self { contact_tol: None, circle_points: 3 * 512 }
    }
}

/// `Γ` on the nodes of the grid of `u`, its supergradients and the contact mask.
#[derive(Clone, Debug)]
pub struct ConcaveEnvelope {
    pub gamma: GridFunction,
    /// Row-major `len × n` supergradients; zero outside `B_3`.
    pub grad: Vec<f64>,
    pub contact: Vec<bool>,
    pub contact_tol: f64,
    pub sup_u: f64,
    /// `|∂Γ(x_i)|` at contact nodes, zero elsewhere.
    pub subdifferential: Vec<f64>,
}

impl ConcaveEnvelope {
    pub fn grad_at(&self, flat: usize) -> &[f64] {
        let n = self.gamma.n();
        &self.grad[flat * n..(flat + 1) * n]
    }

    /// Contact nodes inside the open unit ball.
    pub fn contact_in_b1(&self) -> Vec<usize> {
        (0..self.gamma.len()).filter(|&i| self.contact[i] && norm(&self.gamma.node(i)) < 1.0).collect()
    }
}

/// Small dense solve with partial pivoting; `None` if singular.
fn solve(mut m: [[f64; 3]; 3], mut b: [f64; 3], k: usize) -> Option<[f64; 3]> {
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..k {
            let f = m[r][c] / m[c][c];
            for j in c..k {
                m[r][j] -= f * m[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..k).rev() {
        let mut v = b[c];
        for j in c + 1..k {
            v -= m[c][j] * x[j];
        }
        x[c] = v / m[c][c];
    }
    Some(x)
}

/// Lifted point cloud `(x_i, v_i)`; `xs` is row-major with `n` columns.
struct Cloud {
    n: usize,
    xs: Vec<f64>,
    vs: Vec<f64>,
    circle: usize,
    /// Points used for pricing.
    active: Vec<usize>,
}

impl Cloud {
    fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.n..(i + 1) * self.n]
    }

    /// `[1; x_j]` as columns.
    fn basis_matrix(&self, basis: &[usize]) -> [[f64; 3]; 3] {
        let k = self.n + 1;
        let mut m = [[0.0; 3]; 3];
        for (c, &j) in basis.iter().enumerate() {
            m[0][c] = 1.0;
            for r in 1..k {
                m[r][c] = self.x(j)[r - 1];
            }
        }
        m
    }

    fn barycentric(&self, basis: &[usize], x: &[f64]) -> Option<[f64; 3]> {
        let mut rhs = [1.0, 0.0, 0.0];
        rhs[1..=self.n].copy_from_slice(x);
        solve(self.basis_matrix(basis), rhs, self.n + 1)
    }

    /// Plane `a + g·x` through the lifted basis points.
    fn plane(&self, basis: &[usize]) -> Option<[f64; 3]> {
        let k = self.n + 1;
        let m = self.basis_matrix(basis);
        let mut t = [[0.0; 3]; 3];
        for r in 0..k {
            for c in 0..k {
                t[r][c] = m[c][r];
            }
        }
        let mut rhs = [0.0; 3];
        for (c, &j) in basis.iter().enumerate() {
            rhs[c] = self.vs[j];
        }
        solve(t, rhs, k)
    }

    /// Basis of `∂B_3` points whose hull contains `x`.
    fn start(&self, x: &[f64]) -> Vec<usize> {
        if self.n == 1 {
            return vec![0, 1];
        }
        let m = self.circle;
        let phi = x[1].atan2(x[0]).rem_euclid(std::f64::consts::TAU);
        let k0 = ((phi / std::f64::consts::TAU * m as f64).round() as usize) % m;
        vec![k0, (k0 + m / 3) % m, (k0 + 2 * m / 3) % m]
    }

    /// Measure of `{p : g + p·(x_j − x) ≥ v_j for every active j}`.
    fn subdifferential(&self, x: &[f64], g: f64) -> f64 {
        let scale = 1e6 * (1.0 + self.vs.iter().cloned().fold(0.0, f64::max));
        if self.n == 1 {
            let (mut lo, mut hi) = (-scale, scale);
            for &j in &self.active {
                let d = self.x(j)[0] - x[0];
                let w = self.vs[j] - g;
                if d > 1e-12 {
                    lo = lo.max(w / d);
                } else if d < -1e-12 {
                    hi = hi.min(w / d);
                }
            }
            return (hi - lo).max(0.0);
        }
        let mut poly = vec![[-scale, -scale], [scale, -scale], [scale, scale], [-scale, scale]];
        for &j in &self.active {
            let d = [self.x(j)[0] - x[0], self.x(j)[1] - x[1]];
            if d[0].abs() + d[1].abs() < 1e-12 {
                continue;
            }
            let w = self.vs[j] - g;
            let side = |p: &[f64; 2]| p[0] * d[0] + p[1] * d[1] - w;
            let mut next = Vec::with_capacity(poly.len() + 1);
            for k in 0..poly.len() {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                let (sa, sb) = (side(&a), side(&b));
                if sa >= 0.0 {
                    next.push(a);
                }
                if (sa >= 0.0) != (sb >= 0.0) {
                    let t = sa / (sa - sb);
                    next.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            poly = next;
            if poly.len() < 3 {
                return 0.0;
            }
        }
        let m = poly.len();
        (0..m).map(|k| poly[k][0] * poly[(k + 1) % m][1] - poly[k][1] * poly[(k + 1) % m][0]).sum::<f64>().abs() / 2.0
    }

    /// `max Σ λ_i v_i` subject to `Σ λ_i (1, x_i) = (1, x)`, `λ ≥ 0`, warm-started from `basis`.
    fn envelope_at(&self, x: &[f64], basis: &mut Vec<usize>, tol: f64) -> Option<(f64, [f64; 3])> {
        let k = self.n + 1;
        let feasible = |b: &[usize]| self.barycentric(b, x).map(|l| l[..k].iter().all(|v| *v >= -1e-12)).unwrap_or(false);
        if basis.len() != k || !feasible(basis) {
            *basis = self.start(x);
            if !feasible(basis) {
                return None;
            }
        }
        for it in 0..20_000 {
            let pl = self.plane(basis)?;
            let viol = |i: usize| {
                let xi = self.x(i);
                let mut p = pl[0];
                for r in 0..self.n {
                    p += pl[r + 1] * xi[r];
                }
                self.vs[i] - p
            };
            let entering = if it < 500 {
                let (mut best, mut arg) = (tol, None);
                for &i in &self.active {
                    let v = viol(i);
                    if v > best {
                        best = v;
                        arg = Some(i);
                    }
                }
                arg
            } else {
                self.active.iter().cloned().find(|&i| viol(i) > tol)
            };
            let Some(e) = entering else {
                return Some((pl[0] + (0..self.n).map(|r| pl[r + 1] * x[r]).sum::<f64>(), pl));
            };
            let lam = self.barycentric(basis, x)?;
            let mu = self.barycentric(basis, self.x(e))?;
            let mut leave = None;
            let mut theta = f64::INFINITY;
            for j in 0..k {
                if mu[j] > 1e-12 {
                    let t = lam[j].max(0.0) / mu[j];
                    if t < theta - 1e-15 || (t <= theta + 1e-15 && leave.map_or(true, |l: usize| basis[j] < basis[l])) {
                        theta = t.min(theta);
                        leave = Some(j);
                    }
                }
            }
            basis[leave?] = e;
        }
        None
    }
}

/// Concave envelope with default options.
pub fn concave_envelope(u: &GridFunction) -> Result<ConcaveEnvelope> {
    concave_envelope_with(u, &EnvelopeOptions::default())
}

/// `Γ(x) = min { p(x) : p plane, p ≥ u⁺ on B_3 }` at every grid node of `B_3`, `0` elsewhere.
///
/// The lifted cloud is the positive nodes of `u` plus `∂B_3` at height zero
/// (two points in one dimension, a regular polygon in two).
pub fn concave_envelope_with(u: &GridFunction, opts: &EnvelopeOptions) -> Result<ConcaveEnvelope> {
    let n = u.n();
    check_dim(n)?;
    let hmax = u.spacing().iter().cloned().fold(0.0, f64::max);
    for i in 0..u.len() {
        let x = u.node(i);
        if norm(&x) >= 1.0 && u.values()[i] > 1e-12 {
            return Err(Error::Precondition(format!("u = {} > 0 at {x:?} outside B_1", u.values()[i])));
        }
    }
    if let Exterior::Constant(c) = u.exterior() {
        if *c > 0.0 {
            return Err(Error::Precondition(format!("exterior value {c} is positive")));
        }
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    let circle = if n == 1 { 2 } else { opts.circle_points.max(3) / 3 * 3 };
    if n == 1 {
        xs.extend([-B3, B3]);
        vs.extend([0.0, 0.0]);
    } else {
        for k in 0..circle {
            let t = std::f64::consts::TAU * k as f64 / circle as f64;
            xs.extend([B3 * t.cos(), B3 * t.sin()]);
            vs.push(0.0);
        }
    }
    let mut sup_u: f64 = 0.0;
    let mut owner = Vec::new();
    for i in 0..u.len() {
        let v = u.values()[i];
        if v > 0.0 {
            xs.extend(u.node(i));
            vs.push(v);
            owner.push(i);
            sup_u = sup_u.max(v);
        }
    }
    let mut active: Vec<usize> = (0..circle).collect();
    if let Some(top) = (0..owner.len()).max_by(|&i, &j| vs[circle + i].partial_cmp(&vs[circle + j]).unwrap()) {
        active.push(circle + top);
    }
    let mut cloud = Cloud { n, xs, vs, circle, active };
    let tol = 1e-13 * (1.0 + sup_u);
    let dims = u.dims().to_vec();
    let rows: Vec<usize> = if n == 1 { vec![0] } else { (0..dims[0]).collect() };
    let row_len = if n == 1 { dims[0] } else { dims[1] };
    let mut gamma = vec![0.0; u.len()];
    let mut grad = vec![0.0; u.len() * n];
    // the envelope of the active points is the full envelope once it dominates every point
    loop {
        let results: Vec<Vec<(f64, [f64; 3])>> = rows
            .par_iter()
            .map(|&r| {
                let mut basis = Vec::new();
                (0..row_len)
                    .map(|c| {
                        let x = u.node(r * row_len + c);
                        if norm(&x) >= B3 {
                            return (0.0, [0.0; 3]);
                        }
                        // nodes between the polygon and the circle get Γ = 0
                        cloud.envelope_at(&x, &mut basis, tol).unwrap_or((0.0, [0.0; 3]))
                    })
                    .collect()
            })
            .collect();
        for (r, row) in results.iter().enumerate() {
            for (c, (v, pl)) in row.iter().enumerate() {
                let flat = r * row_len + c;
                gamma[flat] = *v;
                grad[flat * n..(flat + 1) * n].copy_from_slice(&pl[1..=n]);
            }
        }
        let missing: Vec<usize> = (0..owner.len())
            .filter(|&i| cloud.vs[circle + i] > gamma[owner[i]] + 10.0 * tol)
            .map(|i| circle + i)
            .collect();
        if missing.is_empty() {
            break;
        }
        cloud.active.extend(missing);
    }
    let contact_tol = opts
        .contact_tol
        .unwrap_or_else(|| (2.0 * u.max_hessian_norm() * hmax * hmax).min(1e-3 * (1.0 + sup_u)));
    let contact: Vec<bool> = (0..u.len()).map(|i| gamma[i] - u.values()[i] <= contact_tol).collect();
    let subdifferential = (0..u.len())
        .into_par_iter()
        .map(|i| if contact[i] { cloud.subdifferential(&u.node(i), gamma[i]) } else { 0.0 })
        .collect();
    let gamma = GridFunction::new(dims, u.lo().to_vec(), u.spacing().to_vec(), gamma, Exterior::Constant(0.0))?;
    Ok(ConcaveEnvelope { gamma, grad, contact, contact_tol, sup_u, subdifferential })
}

/// Largest discrete second difference of `Γ` along grid lines inside `B_3`.
pub fn max_line_second_difference(env: &ConcaveEnvelope) -> f64 {
    let g = &env.gamma;
    let n = g.n();
    let mut idx = vec![0usize; n];
    let mut worst = f64::NEG_INFINITY;
    for flat in 0..g.len() {
        g.multi_index(flat, &mut idx);
        for k in 0..n {
            if idx[k] == 0 || idx[k] + 1 >= g.dims()[k] {
                continue;
            }
            let mut p = idx.clone();
            let mut m = idx.clone();
            p[k] += 1;
            m[k] -= 1;
            let (fp, fm) = (g.flat_index(&p), g.flat_index(&m));
            if [flat, fp, fm].iter().all(|&i| norm(&g.node(i)) < B3) {
                let d = g.values()[fp] + g.values()[fm] - 2.0 * g.values()[flat];
                worst = worst.max(d);
            }
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetachmentParams {
    pub m: f64,
    pub rho0: f64,
    pub frak_c: u32,
    /// Rings `k = 0..depth`.
    pub depth: usize,
    pub c0: f64,
    /// `f(x)` at the contact point.
    pub f_x: f64,
    /// Lattice points per axis over the bounding box of each ring.
    pub samples_per_axis: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetachmentReport {
    pub radii: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `|W_k(x)|`
    pub measures: Vec<f64>,
    /// `|E_{r_k,1} ∖ E_{r_{k+1},1}|`, exact.
    pub ring_measures: Vec<f64>,
    /// First `k` with `|W_k| ≤ C_0 (f(x)/M) |ring_k|`.
    pub first_k: Option<usize>,
}

/// `r_k = ρ_0 2^{−1/q_min} 2^{−ℭ b_min k/2}`.
pub fn ring_radius(a: &Anisotropy, rho0: f64, frak_c: u32, k: usize) -> f64 {
    rho0 * 2f64.powf(-1.0 / a.q_min()) * 2f64.powf(-(frak_c as f64) * a.b_min() * k as f64 / 2.0)
}

/// `W_k(x) = (E_{r_k,1} ∖ E_{r_{k+1},1}) ∩ {y : u(x+y) < u(x) + y·∇Γ(x) − M (q_min/q_max) r_k^{4/b_min}}`.
pub fn detachment_sets(
    a: &Anisotropy,
    u: &GridFunction,
    env: &ConcaveEnvelope,
    node: usize,
    p: &DetachmentParams,
) -> Result<DetachmentReport> {
    let n = a.n();
    if u.n() != n {
        return Err(Error::Range("grid and anisotropy dimensions differ".into()));
    }
    if !env.contact[node] {
        return Err(Error::Precondition(format!("node {node} is not a contact point")));
    }
    let x = u.node(node);
    let ux = u.values()[node];
    let g = env.grad_at(node).to_vec();
    let ratio = a.q_min() / a.q_max();
    let m = p.samples_per_axis.max(2);
    let mut rep = DetachmentReport { radii: vec![], thresholds: vec![], measures: vec![], ring_measures: vec![], first_k: None };
    for k in 0..=p.depth {
        let rk = ring_radius(a, p.rho0, p.frak_c, k);
        let rk1 = ring_radius(a, p.rho0, p.frak_c, k + 1);
        let thr = p.m * ratio * rk.powf(4.0 / a.b_min());
        let outer = Ellipsoid::e(vec![0.0; n], rk, 1.0);
        let inner = Ellipsoid::e(vec![0.0; n], rk1, 1.0);
        let hw = outer.half_widths(a);
        let box_vol: f64 = hw.iter().map(|w| 2.0 * w).product();
        let total = m.pow(n as u32);
        let mut count = 0usize;
        let mut y = vec![0.0; n];
        let mut xy = vec![0.0; n];
        for flat in 0..total {
            let mut r = flat;
            for i in (0..n).rev() {
                let j = r % m;
                r /= m;
                y[i] = -hw[i] + (2.0 * j as f64 + 1.0) * hw[i] / m as f64;
            }
            if !outer.contains(a, &y) || inner.contains(a, &y) {
                continue;
            }
            for i in 0..n {
                xy[i] = x[i] + y[i];
            }
            let plane = ux + y.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            if u.value_at(&xy) < plane - thr {
                count += 1;
            }
        }
        let meas = count as f64 * box_vol / total as f64;
        let ring = outer.volume(a) - inner.volume(a);
        if rep.first_k.is_none() && meas <= p.c0 * p.f_x / p.m * ring {
            rep.first_k = Some(k);
        }
        rep.radii.push(rk);
        rep.thresholds.push(thr);
        rep.measures.push(meas);
        rep.ring_measures.push(ring);
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbpOptions {
    pub rho0: f64,
    /// `ℭ`; computed by [`frak_c`] when absent.
    pub frak_c: Option<u32>,
    /// Constant of property (5).
    pub c5: f64,
    /// Constant in the threshold of property (6).
    pub c6: f64,
    pub varsigma: f64,
    pub max_depth: u32,
    /// Quadrature level for the `ℳ⁺u ≥ −f` check; `None` skips it.
    pub check_level: Option<u32>,
}

impl Default for AbpOptions {
    fn default() -> Self {
        Self { rho0: 1.0, frak_c: None, c5: 1.0, c6: 1.0, varsigma: 0.05, max_depth: 8, check_level: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RectRecord {
    pub rect: AnisoRect,
    pub generation: u32,
    pub diameter: f64,
    pub companion: AnisoRect,
    pub companion_diameter: f64,
    pub contact_nodes: usize,
    /// `|∇Γ(R̄_j)|`
    pub gradient_image: f64,
    /// `max_{R̃_j} f⁺`
    pub f_max: f64,
    /// `|∇Γ(R̄_j)| / ((max f⁺)^n |R̃_j|)`
    pub ratio5: f64,
    /// Fraction of `|R̃_j|` where `u ≥ Γ − C (max f) d̃_j²` inside the dilated companion.
    pub fraction6: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyProperties {
    pub disjoint: bool,
    pub covers_contact: bool,
    pub meets_contact: bool,
    pub diameter_bound: f64,
    pub diameters_bounded: bool,
    pub gradient_image_bounded: bool,
    pub detachment_bounded_below: bool,
    /// Smallest `C` for which property (5) holds on the family.
    pub c5_produced: f64,
    /// Largest `ς` for which property (6) holds on the family.
    pub varsigma_produced: f64,
}

impl FamilyProperties {
    pub fn all(&self) -> bool {
        self.disjoint
            && self.covers_contact
            && self.meets_contact
            && self.diameters_bounded
            && self.gradient_image_bounded
            && self.detachment_bounded_below
    }
}

/// Discrete ABP chain `|B_1| (sup u⁺/4)^n ≤ Σ|∇Γ(R̄_j)| ≤ C Σ (max f⁺)^n |R̃_j|` and the union
/// `|⋃ E_{r_j,1}(x_j)|` of the generation ellipsoids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeChain {
    pub gradient_ball: f64,
    pub gradient_image_sum: f64,
    pub abp_bound: f64,
    pub union_measure: f64,
    /// `|⋃ E| / (sup u)^n`, the constant of the volume lower bound on this instance.
    pub c_volume: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RectangleFamily {
    pub rects: Vec<RectRecord>,
    pub depth: u32,
    pub frak_c: u32,
    pub dilation: f64,
    pub r0: f64,
    pub properties: FamilyProperties,
    pub volume: VolumeChain,
    /// `min (ℳ⁺u + f)` over contact nodes in `B_1`, when checked.
    pub subsolution_margin: Option<f64>,
}

/// Measure of the convex hull of points in one or two dimensions.
pub fn hull_measure(n: usize, pts: &[[f64; 2]]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    if n == 1 {
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return hi - lo;
    }
    let mut p: Vec<[f64; 2]> = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let it: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in it {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let m = hull.len();
    (0..m).map(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % m]);
        a[0] * b[1] - a[1] * b[0]
    })
    .sum::<f64>()
    .abs()
        / 2.0
}

/// Grid nodes in the closed rectangle.
fn nodes_in(u: &GridFunction, r: &AnisoRect, tol: f64) -> Vec<usize> {
    let n = u.n();
    let mut lo = vec![0usize; n];
    let mut hi = vec![0usize; n];
    for k in 0..n {
        let a = ((r.center[k] - r.half_widths[k] - tol - u.lo()[k]) / u.spacing()[k]).ceil();
        let b = ((r.center[k] + r.half_widths[k] + tol - u.lo()[k]) / u.spacing()[k]).floor();
        if b < 0.0 || a > (u.dims()[k] - 1) as f64 || a > b {
            return vec![];
        }
        lo[k] = a.max(0.0) as usize;
        hi[k] = (b as usize).min(u.dims()[k] - 1);
    }
    let mut out = Vec::new();
    let mut idx = lo.clone();
    loop {
        out.push(u.flat_index(&idx));
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < hi[k] {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = lo[j];
                }
                break;
            }
        }
    }
}

struct FamilyCtx<'a> {
    a: &'a Anisotropy,
    u: &'a GridFunction,
    env: &'a ConcaveEnvelope,
    f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    opts: &'a AbpOptions,
    contact: Vec<bool>,
    frak_c: u32,
    dilation: f64,
    r0: f64,
    tol: f64,
    cell: f64,
}

impl FamilyCtx<'_> {
    fn record(&self, rect: AnisoRect, generation: u32) -> RectRecord {
        let n = self.a.n();
        let companion = AnisoRect::companion(self.a, rect.center.clone(), self.r0, generation, self.frak_c);
        let inside = nodes_in(self.u, &rect, self.tol);
        let contact_nodes = inside.iter().filter(|&&i| self.contact[i]).count();
        // subdifferentials of distinct vertices overlap in measure zero
        let gradient_image: f64 = inside.iter().map(|&i| self.env.subdifferential[i]).sum();
        let mut f_max = (self.f)(&companion.center).max(0.0);
        for i in nodes_in(self.u, &companion, 0.0) {
            f_max = f_max.max((self.f)(&self.u.node(i)));
        }
        let vol = companion.volume();
        let ratio5 = if gradient_image == 0.0 { 0.0 } else { gradient_image / (f_max.powi(n as i32) * vol) };
        let dil = companion.dilate(self.dilation);
        let d = companion.diameter();
        let thr = self.opts.c6 * f_max * d * d;
        let good = nodes_in(self.u, &dil, 0.0)
            .into_iter()
            .filter(|&i| self.u.values()[i] >= self.env.gamma.values()[i] - thr)
            .count();
        let fraction6 = good as f64 * self.cell / vol;
        RectRecord {
            diameter: rect.diameter(),
            companion_diameter: d,
            rect,
            generation,
            companion,
            contact_nodes,
            gradient_image,
            f_max,
            ratio5,
            fraction6,
        }
    }

    fn passes(&self, r: &RectRecord) -> bool {
        r.ratio5 <= self.opts.c5 && r.fraction6 >= self.opts.varsigma
    }

    fn children(&self, r: &AnisoRect) -> Vec<AnisoRect> {
        let n = r.center.len();
        let m = 1usize << self.frak_c;
        let total = m.pow(n as u32);
        (0..total)
            .map(|flat| {
                let mut rr = flat;
                let mut c = vec![0.0; n];
                let mut hw = vec![0.0; n];
                for k in (0..n).rev() {
                    let j = rr % m;
                    rr /= m;
                    hw[k] = r.half_widths[k] / m as f64;
                    c[k] = r.center[k] - r.half_widths[k] + (2.0 * j as f64 + 1.0) * hw[k];
                }
                AnisoRect::new(c, hw)
            })
            .collect()
    }

    fn meets_contact(&self, r: &AnisoRect) -> bool {
        nodes_in(self.u, r, self.tol).iter().any(|&i| self.contact[i])
    }
}

/// `min (ℳ⁺u + f)` over the contact nodes in `B_1`, with the quadrature error bar added.
/// Nonnegative exactly when `ℳ⁺u ≥ −f` is certified there.
pub fn subsolution_margin(
    u: &GridFunction,
    env: &ConcaveEnvelope,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: &KernelSpec,
    level: u32,
) -> Result<f64> {
    let plan = OperatorPlan::default_for(k.clone(), level)?;
    let ext_sup = match u.exterior() {
        Exterior::Constant(c) => c.abs(),
        Exterior::Function(_) => u.values().iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let g = GridInterp::new(u.clone(), ext_sup);
    let margins: Vec<f64> = env
        .contact_in_b1()
        .par_iter()
        .map(|&i| {
            let x = u.node(i);
            plan.evaluate_all(&g, &x).map(|t| t.plus.value - t.plus.error + f(&x))
        })
        .collect::<Result<_>>()?;
    Ok(margins.into_iter().fold(f64::INFINITY, f64::min))
}

/// The recursive tiling of `B_1`: initial edges `(ρ_0 2^{−1/q_min})^{2/b_i} / 2^ℭ`, tiles
/// missing the contact set discarded, failing tiles split by `2^ℭ` per axis.
///
/// `f` is the right-hand side in `ℳ⁺u ≥ −f`; when `opts.check_level` is set this
/// inequality is verified at the contact nodes with `k`.
pub fn abp_rectangle_family(
    u: &GridFunction,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: &KernelSpec,
    opts: &AbpOptions,
) -> Result<RectangleFamily> {
    let env = concave_envelope(u)?;
    abp_family_with_envelope(u, &env, f, k, opts)
}

pub fn abp_family_with_envelope(
    u: &GridFunction,
    env: &ConcaveEnvelope,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    k: &KernelSpec,
    opts: &AbpOptions,
) -> Result<RectangleFamily> {
    let a = k.anisotropy();
    let n = a.n();
    check_dim(n)?;
    if u.n() != n {
        return Err(Error::Range("grid and kernel dimensions differ".into()));
    }
    let frak = opts.frak_c.unwrap_or_else(|| frak_c(a).value);
    let r0 = opts.rho0 * 2f64.powf(-1.0 / a.q_min());
    let contact_nodes = env.contact_in_b1();
    let mut contact = vec![false; u.len()];
    for &i in &contact_nodes {
        contact[i] = true;
    }
    let subsolution_margin = match opts.check_level {
        Some(level) => {
            let m = subsolution_margin(u, env, f, k, level)?;
            if m < 0.0 {
                return Err(Error::Precondition(format!("ℳ⁺u ≥ −f fails at a contact node (margin {m:e})")));
            }
            Some(m)
        }
        None => None,
    };
    let hmin = u.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let ctx = FamilyCtx {
        a,
        u,
        env,
        f,
        opts,
        contact,
        frak_c: frak,
        dilation: 2f64.powi(frak as i32),
        r0,
        tol: 1e-9 * hmin,
        cell: u.spacing().iter().product(),
    };
    // initial tiling of [−1, 1]^n anchored at the origin
    let edges: Vec<f64> = a.b().iter().map(|b| r0.powf(2.0 / b) / 2f64.powi(frak as i32)).collect();
    let counts: Vec<i64> = edges.iter().map(|e| (1.0 / e).ceil() as i64).collect();
    let mut tiles = Vec::new();
    let mut idx: Vec<i64> = counts.iter().map(|c| -c).collect();
    loop {
        let center: Vec<f64> = idx.iter().zip(&edges).map(|(i, e)| (*i as f64 + 0.5) * e).collect();
        let rect = AnisoRect::new(center, edges.iter().map(|e| e / 2.0).collect());
        // closest point of the closed tile to the origin
        let d2: f64 = rect
            .center
            .iter()
            .zip(&rect.half_widths)
            .map(|(c, w)| (c.abs() - w).max(0.0).powi(2))
            .sum();
        if d2 < 1.0 && ctx.meets_contact(&rect) {
            tiles.push(rect);
        }
        let mut kk = n;
        loop {
            if kk == 0 {
                break;
            }
            kk -= 1;
            if idx[kk] < counts[kk] - 1 {
                idx[kk] += 1;
                for j in kk + 1..n {
                    idx[j] = -counts[j];
                }
                break;
            }
            if kk == 0 {
                idx[0] = counts[0];
            }
        }
        if idx[0] >= counts[0] {
            break;
        }
    }
    let mut family = Vec::new();
    let mut pending: Vec<(AnisoRect, u32)> = tiles.into_iter().map(|t| (t, 0)).collect();
    let mut depth = 0;
    while !pending.is_empty() {
        let recs: Vec<RectRecord> = pending.par_iter().map(|(r, g)| ctx.record(r.clone(), *g)).collect();
        let mut next = Vec::new();
        let mut offending = Vec::new();
        for rec in recs {
            if ctx.passes(&rec) {
                family.push(rec);
                continue;
            }
            let resolvable = rec.rect.half_widths.iter().zip(u.spacing()).all(|(w, h)| 2.0 * w / (1u64 << frak) as f64 >= *h);
            if rec.generation >= opts.max_depth || !resolvable {
                offending.push(rec);
                continue;
            }
            for c in ctx.children(&rec.rect) {
                if ctx.meets_contact(&c) {
                    next.push((c, rec.generation + 1));
                }
            }
        }
        if !offending.is_empty() {
            let r = &offending[0];
            return Err(Error::NonTerminating(format!(
                "{} rectangles still fail at generation {} (e.g. center {:?}, ratio5 {:.3e}, fraction6 {:.3e})",
                offending.len(),
                r.generation,
                r.rect.center,
                r.ratio5,
                r.fraction6
            )));
        }
        if !next.is_empty() {
            depth = next.iter().map(|(_, g)| *g).max().unwrap_or(depth);
        }
        pending = next;
    }
    family.sort_by(|x, y| x.rect.center.partial_cmp(&y.rect.center).unwrap());
    let properties = certify(&ctx, &family, &contact_nodes);
    let volume = volume_chain(&ctx, &family);
    Ok(RectangleFamily { rects: family, depth, frak_c: frak, dilation: ctx.dilation, r0, properties, volume, subsolution_margin })
}

fn certify(ctx: &FamilyCtx, family: &[RectRecord], contact_nodes: &[usize]) -> FamilyProperties {
    let a = ctx.a;
    let disjoint = (0..family.len())
        .all(|i| (i + 1..family.len()).all(|j| !family[i].rect.intersects(&family[j].rect)));
    let covers_contact = contact_nodes.iter().all(|&i| {
        let x = ctx.u.node(i);
        family.iter().any(|r| r.rect.contains_closed(&x, ctx.tol))
    });
    let meets_contact = family.iter().all(|r| r.contact_nodes > 0);
    let diameter_bound = a.b().iter().map(|b| ctx.r0.powf(4.0 / b)).sum::<f64>().sqrt();
    let diameters_bounded = family.iter().all(|r| r.diameter <= diameter_bound * (1.0 + 1e-12));
    let c5_produced = family.iter().map(|r| r.ratio5).fold(0.0, f64::max);
    let varsigma_produced = family.iter().map(|r| r.fraction6).fold(f64::INFINITY, f64::min);
    FamilyProperties {
        disjoint,
        covers_contact,
        meets_contact,
        diameter_bound,
        diameters_bounded,
        gradient_image_bounded: c5_produced <= ctx.opts.c5,
        detachment_bounded_below: family.is_empty() || varsigma_produced >= ctx.opts.varsigma,
        c5_produced,
        varsigma_produced: if family.is_empty() { 0.0 } else { varsigma_produced },
    }
}

fn volume_chain(ctx: &FamilyCtx, family: &[RectRecord]) -> VolumeChain {
    let a = ctx.a;
    let n = a.n();
    let sup = ctx.env.sup_u;
    let gradient_ball = unit_ball_volume(n) * (sup / 4.0).powi(n as i32);
    let gradient_image_sum: f64 = family.iter().map(|r| r.gradient_image).sum();
    let abp_bound: f64 = family.iter().map(|r| ctx.opts.c5 * r.f_max.powi(n as i32) * r.companion.volume()).sum();
    // union of E_{r_j,1}(x_j), counted on a lattice refining the grid 4 times
    let ells: Vec<Ellipsoid> = family
        .iter()
        .map(|r| {
            let rj = 2f64.powf(-(ctx.frak_c as f64) * a.b_min() * r.generation as f64 / 2.0) * ctx.r0;
            Ellipsoid::e(r.rect.center.clone(), rj, 1.0)
        })
        .collect();
    let mut union_measure = 0.0;
    if !ells.is_empty() {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for e in &ells {
            let hw = e.half_widths(a);
            for k in 0..n {
                lo[k] = lo[k].min(e.center[k] - hw[k]);
                hi[k] = hi[k].max(e.center[k] + hw[k]);
            }
        }
        let m: Vec<usize> = (0..n).map(|k| (((hi[k] - lo[k]) / ctx.u.spacing()[k] * 4.0).ceil() as usize).clamp(8, 2048)).collect();
        let h: Vec<f64> = (0..n).map(|k| (hi[k] - lo[k]) / m[k] as f64).collect();
        let total: usize = m.iter().product();
        let hits: usize = (0..total)
            .into_par_iter()
            .filter(|&flat| {
                let mut r = flat;
                let mut y = vec![0.0; n];
                for k in (0..n).rev() {
                    let j = r % m[k];
                    r /= m[k];
                    y[k] = lo[k] + (j as f64 + 0.5) * h[k];
                }
                ells.iter().any(|e| e.contains(a, &y))
            })
            .count();
        union_measure = hits as f64 * h.iter().product::<f64>();
    }
    let c_volume = if sup > 0.0 { union_measure / sup.powi(n as i32) } else { f64::INFINITY };
    let holds = gradient_ball <= gradient_image_sum * (1.0 + 1e-9) + 1e-12 && gradient_image_sum <= abp_bound * (1.0 + 1e-9) + 1e-12;
    VolumeChain { gradient_ball, gradient_image_sum, abp_bound, union_measure, c_volume, holds }
}

/// Covering produced by [`cc_cover`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cover {
    pub selected: Vec<usize>,
    pub rects: Vec<AnisoRect>,
    pub max_overlap: usize,
}

/// Greedy cover: points by decreasing parameter, each point not yet covered opens
/// its rectangle with edges `h_i(t(x))`.
pub fn cc_cover<H>(points: &[Vec<f64>], params: &[f64], edges: H) -> Result<Cover>
where
    H: Fn(f64) -> Vec<f64>,
{
    if points.len() != params.len() {
        return Err(Error::Range("one parameter per point is required".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| params[j].partial_cmp(&params[i]).unwrap().then(i.cmp(&j)));
    let mut selected = Vec::new();
    let mut rects: Vec<AnisoRect> = Vec::new();
    for &i in &order {
        if rects.iter().any(|r| r.contains(&points[i])) {
            continue;
        }
        let hw = edges(params[i]).iter().map(|e| e / 2.0).collect();
        selected.push(i);
        rects.push(AnisoRect::new(points[i].clone(), hw));
    }
    let max_overlap = points.iter().map(|x| rects.iter().filter(|r| r.contains(x)).count()).max().unwrap_or(0);
    Ok(Cover { selected, rects, max_overlap })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CzNode {
    pub rect: AnisoRect,
    pub generation: u32,
    pub fraction: f64,
    /// The parent rectangle (the root for generation 0).
    pub predecessor: AnisoRect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CzTree {
    pub selected: Vec<CzNode>,
    pub visited: usize,
    pub max_generation: u32,
}

/// Per-axis split factors from generation `k` to `k + 1`: `2^{⌊2(k+1)/b_i⌋ − ⌊2k/b_i⌋}`.
pub fn cz_split(a: &Anisotropy, k: u32) -> Vec<usize> {
    a.b()
        .iter()
        .map(|b| {
            let e = (2.0 * (k + 1) as f64 / b).floor() - (2.0 * k as f64 / b).floor();
            1usize << (e as u32)
        })
        .collect()
}

/// Children of `r` at generation `k`.
pub fn cz_children(a: &Anisotropy, r: &AnisoRect, k: u32) -> Vec<AnisoRect> {
    let n = a.n();
    let f = cz_split(a, k);
    let total: usize = f.iter().product();
    (0..total)
        .map(|flat| {
            let mut rr = flat;
            let mut c = vec![0.0; n];
            let mut hw = vec![0.0; n];
            for i in (0..n).rev() {
                let j = rr % f[i];
                rr /= f[i];
                hw[i] = r.half_widths[i] / f[i] as f64;
                c[i] = r.center[i] - r.half_widths[i] + (2.0 * j as f64 + 1.0) * hw[i];
            }
            AnisoRect::new(c, hw)
        })
        .collect()
}

/// Calderón–Zygmund selection on `Q_1 = (−1/2, 1/2)^n`: a node is selected when its mask
/// fraction exceeds `threshold` and its parent's does not. Fractions count grid nodes in
/// half-open cells; recursion stops when a cell holds at most one node.
pub fn cz_decompose(mask: &GridFunction, a: &Anisotropy, threshold: f64) -> Result<CzTree> {
    let n = a.n();
    if mask.n() != n {
        return Err(Error::Range("mask and anisotropy dimensions differ".into()));
    }
    let pts: Vec<(Vec<f64>, bool)> = (0..mask.len())
        .map(|i| (mask.node(i), mask.values()[i] >= 0.5))
        .filter(|(x, _)| x.iter().all(|v| *v >= -0.5 && *v < 0.5))
        .collect();
    let root = AnisoRect::new(vec![0.0; n], vec![0.5; n]);
    let mut tree = CzTree { selected: vec![], visited: 0, max_generation: 0 };
    let all: Vec<usize> = (0..pts.len()).collect();
    cz_visit(a, &pts, &root, &root, &all, 0, threshold, &mut tree);
    Ok(tree)
}

#[allow(clippy::too_many_arguments)]
fn cz_visit(
    a: &Anisotropy,
    pts: &[(Vec<f64>, bool)],
    rect: &AnisoRect,
    parent: &AnisoRect,
    members: &[usize],
    k: u32,
    threshold: f64,
    tree: &mut CzTree,
) {
    tree.visited += 1;
    tree.max_generation = tree.max_generation.max(k);
    if members.is_empty() {
        return;
    }
    let hits = members.iter().filter(|&&i| pts[i].1).count();
    let fraction = hits as f64 / members.len() as f64;
    if fraction > threshold {
        tree.selected.push(CzNode { rect: rect.clone(), generation: k, fraction, predecessor: parent.clone() });
        return;
    }
    if members.len() <= 1 || hits == 0 {
        return;
    }
    for c in cz_children(a, rect, k) {
        let inside: Vec<usize> = members
            .iter()
            .cloned()
            .filter(|&i| {
                pts[i].0.iter().zip(&c.center).zip(&c.half_widths).all(|((x, c), w)| *x >= c - w && *x < c + w)
            })
            .collect();
        cz_visit(a, pts, &c, rect, &inside, k + 1, threshold, tree);
    }
}
