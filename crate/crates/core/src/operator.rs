//! `L u(x) = ∫ δ(u, x, y) K(y) dy` and the Pucci operators
//! `ℳ⁺u = q ∫ (Λ δ⁺ − λ δ⁻) K_0`, `ℳ⁻u = q ∫ (λ δ⁺ − Λ δ⁻) K_0`.
//!
//! The integral splits in three zones of generalized polar coordinates:
//!
//! * `ρ < r_in`: `δ` is replaced by the local model `yᵀ D²u(x) y`, integrated in
//!   closed form along each ray; the remainder is bounded by the declared
//!   quartic constant (or by `2M|y|²` when only the `C^{1,1}` constant is known).
//! * `r_in ≤ ρ ≤ r_out`: GK15 shells in `log ρ`.
//! * `ρ > r_out`: GK15 panels in `t = ρ^{−s}`.
//!
//! With this convention `(−Δ)^{β,s} u = −½ L u` for the reference kernel `q_max,s K_0`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Anisotropy;
use crate::grid::{Exterior, GridFunction};
use crate::kernels::{KernelMode, KernelSpec};
use crate::quadrature::{AngularRule, QuadratureScheme};

const MAX_DIM: usize = 8;

/// Local regularity at a point: `|u(x+y) − u(x) − v·y| ≤ M|y|²` for `|y| < η₀`.
///
/// `hessian` (row-major) enables the quadratic near-field model; `quartic` bounds
/// `|δ(u,x,y) − yᵀ D²u y| ≤ quartic · |y|⁴` on the same ball.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalRegularity {
    pub m: f64,
    pub eta0: f64,
    pub hessian: Option<Vec<f64>>,
    pub quartic: Option<f64>,
}

/// Functions the operator can be applied to.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Regularity declaration at `x`; `None` means no declaration.
    fn local(&self, x: &[f64]) -> Option<LocalRegularity>;
    fn sup_abs(&self) -> f64;

    /// `δ(u, x, y) = u(x+y) + u(x−y) − 2u(x)`, given `ux = u(x)`.
    fn second_difference(&self, x: &[f64], y: &[f64], ux: f64) -> f64 {
        let n = x.len();
        let mut p = [0.0; MAX_DIM];
        let mut m = [0.0; MAX_DIM];
        for k in 0..n {
            p[k] = x[k] + y[k];
            m[k] = x[k] - y[k];
        }
        self.value(&p[..n]) + self.value(&m[..n]) - 2.0 * ux
    }

    /// Bound on `|δ(u, x, y)|` for all `x, y`.
    fn delta_bound(&self) -> f64 {
        4.0 * self.sup_abs()
    }
}

/// `δ(u, x, y)`.
pub fn second_difference(u: &dyn TestFunction, x: &[f64], y: &[f64]) -> f64 {
    u.second_difference(x, y, u.value(x))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `u ≡ value`.
#[derive(Clone, Debug)]
pub struct Constant {
    pub n: usize,
    pub value: f64,
}

impl TestFunction for Constant {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.value
    }
    fn local(&self, _: &[f64]) -> Option<LocalRegularity> {
        Some(LocalRegularity { m: 0.0, eta0: f64::INFINITY, hessian: Some(vec![0.0; self.n * self.n]), quartic: Some(0.0) })
    }
    fn sup_abs(&self) -> f64 {
        self.value.abs()
    }
    fn second_difference(&self, _: &[f64], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn delta_bound(&self) -> f64 {
        0.0
    }
}

/// `offset + grad·x`, optionally clamped radially outside `B_R`: `offset + grad·x R/|x|`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub offset: f64,
    pub grad: Vec<f64>,
    pub clamp: Option<f64>,
}

impl TestFunction for Affine {
    fn dim(&self) -> usize {
        self.grad.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.grad.iter().zip(x).map(|(g, v)| g * v).sum();
        match self.clamp {
            Some(r) => {
                let nx = norm2(x).sqrt();
                if nx > r {
                    self.offset + lin * r / nx
                } else {
                    self.offset + lin
                }
            }
            None => self.offset + lin,
        }
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let n = self.dim();
        let eta0 = match self.clamp {
            Some(r) => r - norm2(x).sqrt(),
            None => f64::INFINITY,
        };
        (eta0 > 0.0).then(|| LocalRegularity { m: 0.0, eta0, hessian: Some(vec![0.0; n * n]), quartic: Some(0.0) })
    }
    fn sup_abs(&self) -> f64 {
        match self.clamp {
            Some(r) => self.offset.abs() + norm2(&self.grad).sqrt() * r,
            None => f64::INFINITY,
        }
    }
    fn second_difference(&self, x: &[f64], y: &[f64], ux: f64) -> f64 {
        if self.clamp.is_none() {
            return 0.0;
        }
        let n = x.len();
        let mut p = [0.0; MAX_DIM];
        let mut m = [0.0; MAX_DIM];
        for k in 0..n {
            p[k] = x[k] + y[k];
            m[k] = x[k] - y[k];
        }
        self.value(&p[..n]) + self.value(&m[..n]) - 2.0 * ux
    }
    fn delta_bound(&self) -> f64 {
        match self.clamp {
            Some(_) => 4.0 * self.sup_abs(),
            None => 0.0,
        }
    }
}

/// `η(x) = (1 − |x|²)²` on `B_1`, zero outside.
#[derive(Clone, Debug)]
pub struct Eta {
    pub n: usize,
}

impl TestFunction for Eta {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2 = norm2(x);
        if r2 < 1.0 {
            (1.0 - r2) * (1.0 - r2)
        } else {
            0.0
        }
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let n = self.n;
        let r2 = norm2(x);
        let r = r2.sqrt();
        let mut h = vec![0.0; n * n];
        if r < 1.0 {
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = 8.0 * x[i] * x[j] - if i == j { 4.0 * (1.0 - r2) } else { 0.0 };
                }
            }
            Some(LocalRegularity { m: 4.0, eta0: 1.0 - r, hessian: Some(h), quartic: Some(2.0) })
        } else if r > 1.0 {
            Some(LocalRegularity { m: 4.0, eta0: r - 1.0, hessian: Some(h), quartic: Some(0.0) })
        } else {
            Some(LocalRegularity { m: 4.0, eta0: f64::INFINITY, hessian: None, quartic: None })
        }
    }
    fn sup_abs(&self) -> f64 {
        1.0
    }
}

/// `A (1 − |x − c|²/R²)^p` inside `B_R(c)`, zero outside.
#[derive(Clone, Debug)]
pub struct PolyBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    pub power: u32,
}

impl PolyBump {
    /// Bound on `|D⁴u[e,e,e,e]|` over unit `e`, valid in the support.
    fn d4_bound(&self) -> f64 {
        let p = self.power as f64;
        let r4 = self.radius.powi(4);
        self.amplitude.abs() / r4
            * (16.0 * p * (p - 1.0) * (p - 2.0) * (p - 3.0).max(0.0)
                + 48.0 * p * (p - 1.0) * (p - 2.0).max(0.0)
                + 12.0 * p * (p - 1.0))
    }
}

impl TestFunction for PolyBump {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        let w = 1.0 - r2 / (self.radius * self.radius);
        if w > 0.0 {
            self.amplitude * w.powi(self.power as i32)
        } else {
            0.0
        }
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let n = self.dim();
        let z: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let r = norm2(&z).sqrt();
        let rr = self.radius * self.radius;
        let p = self.power as f64;
        let a = self.amplitude;
        let w = 1.0 - r * r / rr;
        let mut h = vec![0.0; n * n];
        if w > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    let mut v = a * p * (p - 1.0) * w.powi(self.power as i32 - 2) * 4.0 * z[i] * z[j] / (rr * rr);
                    if i == j {
                        v -= a * p * w.powi(self.power as i32 - 1) * 2.0 / rr;
                    }
                    h[i * n + j] = v;
                }
            }
        }
        let m = a.abs() * (4.0 * p * (p - 1.0) + 2.0 * p) / rr / 2.0;
        let quartic = self.d4_bound() / 12.0;
        let eta0 = if self.power >= 4 { f64::INFINITY } else { (r - self.radius).abs() };
        if eta0 == 0.0 {
            return Some(LocalRegularity { m, eta0: f64::INFINITY, hessian: None, quartic: None });
        }
        Some(LocalRegularity { m, eta0, hessian: Some(h), quartic: Some(if w > 0.0 || self.power >= 4 { quartic } else { 0.0 }) })
    }
    fn sup_abs(&self) -> f64 {
        self.amplitude.abs()
    }
}

/// `min(κ^{−p}, |S x|^{−p})` with diagonal `S` (identity, or `T_{β,r}^{−1}`).
#[derive(Clone, Debug)]
pub struct PowerBarrier {
    pub p: f64,
    pub kappa: f64,
    pub scale: Vec<f64>,
}

impl PowerBarrier {
    /// `f(x) = min(2^p, |x|^{−p})`.
    pub fn new(n: usize, p: f64) -> Self {
        Self { p, kappa: 0.5, scale: vec![1.0; n] }
    }

    /// `g(x) = min(κ^{−p}, |T_{β,r}^{−1} x|^{−p})`.
    pub fn scaled(a: &Anisotropy, p: f64, kappa: f64, r: f64) -> Self {
        Self { p, kappa, scale: a.b().iter().map(|b| r.powf(-2.0 / b)).collect() }
    }
}

impl TestFunction for PowerBarrier {
    fn dim(&self) -> usize {
        self.scale.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.scale).map(|(v, s)| (v * s) * (v * s)).sum();
        let cap = self.kappa.powf(-self.p);
        if r2 <= self.kappa * self.kappa {
            cap
        } else {
            r2.powf(-self.p / 2.0).min(cap)
        }
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let n = self.dim();
        let z: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        let rho = norm2(&z).sqrt();
        let smax = self.scale.iter().cloned().fold(0.0, f64::max);
        let p = self.p;
        let m = p * (p + 1.0) * self.kappa.powf(-p - 2.0) * smax * smax / 2.0;
        let mut h = vec![0.0; n * n];
        if rho > self.kappa {
            let ez = (rho - self.kappa) / 2.0;
            for i in 0..n {
                for j in 0..n {
                    let mut v = p * (p + 2.0) * rho.powf(-p - 4.0) * z[i] * z[j];
                    if i == j {
                        v -= p * rho.powf(-p - 2.0);
                    }
                    h[i * n + j] = v * self.scale[i] * self.scale[j];
                }
            }
            let quartic = power_d4(p) * (rho - ez).powf(-p - 4.0) / 12.0 * smax.powi(4);
            Some(LocalRegularity { m, eta0: ez / smax, hessian: Some(h), quartic: Some(quartic) })
        } else if rho < self.kappa {
            Some(LocalRegularity { m, eta0: (self.kappa - rho) / smax, hessian: Some(h), quartic: Some(0.0) })
        } else {
            None
        }
    }
    fn sup_abs(&self) -> f64 {
        self.kappa.powf(-self.p)
    }
}

/// Sup of the fourth directional derivative of `|z|^{−p}` on the unit sphere:
/// `24 C_4^{(p/2)}(1) = p(p+1)(p+2)(p+3)`.
pub(crate) fn power_d4(p: f64) -> f64 {
    p * (p + 1.0) * (p + 2.0) * (p + 3.0)
}

/// `factor · u`.
#[derive(Clone)]
pub struct Scaled {
    pub inner: Arc<dyn TestFunction>,
    pub factor: f64,
}

impl TestFunction for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        self.inner.local(x).map(|l| LocalRegularity {
            m: l.m * self.factor.abs(),
            eta0: l.eta0,
            hessian: l.hessian.map(|h| h.into_iter().map(|v| v * self.factor).collect()),
            quartic: l.quartic.map(|q| q * self.factor.abs()),
        })
    }
    fn sup_abs(&self) -> f64 {
        self.factor.abs() * self.inner.sup_abs()
    }
    fn second_difference(&self, x: &[f64], y: &[f64], ux: f64) -> f64 {
        if self.factor == 0.0 {
            return 0.0;
        }
        self.factor * self.inner.second_difference(x, y, ux / self.factor)
    }
    fn delta_bound(&self) -> f64 {
        self.factor.abs() * self.inner.delta_bound()
    }
}

/// Sum of test functions.
#[derive(Clone)]
pub struct Sum(pub Vec<Arc<dyn TestFunction>>);

impl TestFunction for Sum {
    fn dim(&self) -> usize {
        self.0[0].dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|u| u.value(x)).sum()
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let mut acc: Option<LocalRegularity> = None;
        for u in &self.0 {
            let l = u.local(x)?;
            acc = Some(match acc {
                None => l,
                Some(a) => LocalRegularity {
                    m: a.m + l.m,
                    eta0: a.eta0.min(l.eta0),
                    hessian: match (a.hessian, l.hessian) {
                        (Some(p), Some(q)) => Some(p.iter().zip(&q).map(|(u, v)| u + v).collect()),
                        _ => None,
                    },
                    quartic: match (a.quartic, l.quartic) {
                        (Some(p), Some(q)) => Some(p + q),
                        _ => None,
                    },
                },
            });
        }
        acc
    }
    fn sup_abs(&self) -> f64 {
        self.0.iter().map(|u| u.sup_abs()).sum()
    }
    fn delta_bound(&self) -> f64 {
        self.0.iter().map(|u| u.delta_bound()).sum()
    }
}

/// Multilinear interpolant of a grid function, exterior rule outside its box.
///
/// The local model uses the centered-difference Hessian of the nearest node.
#[derive(Clone, Debug)]
pub struct GridInterp {
    grid: GridFunction,
    hess_max: f64,
    sup: f64,
}

impl GridInterp {
    /// `exterior_sup` bounds the exterior rule when it is a function.
    pub fn new(grid: GridFunction, exterior_sup: f64) -> Self {
        let hess_max = grid.max_hessian_norm();
        let ext = match grid.exterior() {
            Exterior::Constant(c) => c.abs(),
            Exterior::Function(_) => exterior_sup,
        };
        let sup = grid.values().iter().fold(ext, |m, v| m.max(v.abs()));
        Self { grid, hess_max, sup }
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    fn nearest(&self, x: &[f64]) -> usize {
        let g = &self.grid;
        let idx: Vec<usize> = (0..g.n())
            .map(|k| (((x[k] - g.lo()[k]) / g.spacing()[k]).round().max(0.0) as usize).min(g.dims()[k] - 1))
            .collect();
        g.flat_index(&idx)
    }
}

impl TestFunction for GridInterp {
    fn dim(&self) -> usize {
        self.grid.n()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.grid.value_at(x)
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        if !self.grid.in_box(x) {
            return None;
        }
        let h = self.grid.hessian_at(self.nearest(x));
        Some(LocalRegularity { m: self.hess_max, eta0: f64::INFINITY, hessian: Some(h), quartic: None })
    }
    fn sup_abs(&self) -> f64 {
        self.sup
    }
}

/// Value and error estimate of a quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub error: f64,
}

/// `L u`, `ℳ⁺u` and `ℳ⁻u` at one point from one set of second differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub l: Evaluation,
    pub plus: Evaluation,
    pub minus: Evaluation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PucciSign {
    Plus,
    Minus,
}

/// Exponent group of the near-field model: `Σ_{(i,j)} H_ij θ_i θ_j ρ^{e}` with `e = 2/b_i + 2/b_j`.
#[derive(Clone, Debug)]
struct Group {
    e: f64,
    pairs: Vec<(usize, usize)>,
}

/// Kernel and scheme with every node, weight and near-field factor precomputed.
#[derive(Clone, Debug)]
pub struct OperatorPlan {
    kernel: KernelSpec,
    scheme: QuadratureScheme,
    n: usize,
    ys: Vec<f64>,
    // kernel weights: full, full − radial Gauss, full − angular Gauss
    w: Vec<f64>,
    dwg: Vec<f64>,
    dwa: Vec<f64>,
    // q K_0 weights for the Pucci operators
    v: Vec<f64>,
    dvg: Vec<f64>,
    dva: Vec<f64>,
    thetas: Vec<f64>,
    near_base: Vec<f64>,
    near_dbase: Vec<f64>,
    near_mult: Vec<f64>,
    groups: Vec<Group>,
    s2: f64,
    s4: f64,
    tail: f64,
}

impl OperatorPlan {
    pub fn new(kernel: KernelSpec, scheme: QuadratureScheme) -> Result<Self> {
        scheme.validate()?;
        let a = kernel.anisotropy().clone();
        let n = a.n();
        if n > MAX_DIM {
            return Err(Error::Domain(format!("dimension {n} exceeds {MAX_DIM}")));
        }
        if let KernelMode::Truncated { radius, .. } = kernel.mode() {
            if *radius < scheme.r_in * (n as f64).sqrt() {
                return Err(Error::Precondition("truncation radius must contain E_{r_in,1}".into()));
            }
        }
        let ang = AngularRule::half_sphere(n, scheme.angular_panels)?;
        let (c, s, q) = (a.c(), a.s(), a.q_max());
        let afac: Vec<f64> =
            (0..ang.len()).map(|j| a.polar_jacobian(ang.node(j)) * a.norm(ang.node(j)).powf(-(c + s))).collect();
        let kmax = kernel.big_lambda() * q;
        let mut plan = Self {
            kernel,
            scheme: scheme.clone(),
            n,
            ys: Vec::new(),
            w: Vec::new(),
            dwg: Vec::new(),
            dwa: Vec::new(),
            v: Vec::new(),
            dvg: Vec::new(),
            dva: Vec::new(),
            thetas: Vec::new(),
            near_base: Vec::new(),
            near_dbase: Vec::new(),
            near_mult: Vec::new(),
            groups: Vec::new(),
            s2: 0.0,
            s4: 0.0,
            tail: 0.0,
        };
        let mut y = vec![0.0; n];
        let mut push = |plan: &mut Self, rho: f64, radial: f64, radial_g: f64, j: usize| -> bool {
            let th = ang.node(j);
            for i in 0..n {
                y[i] = rho.powf(2.0 / a.b()[i]) * th[i];
            }
            if y.iter().any(|v| !v.is_finite() || v.abs() > 1e100) {
                return false;
            }
            let kn = plan.kernel.normalized(&y);
            let base = afac[j] * ang.weights[j];
            let w = kn * radial * base;
            let wg = kn * radial_g * base;
            let wa = kn * radial * afac[j] * ang.coarse[j];
            let v = q * radial * base;
            let vg = q * radial_g * base;
            let va = q * radial * afac[j] * ang.coarse[j];
            plan.ys.extend_from_slice(&y);
            plan.w.push(w);
            plan.dwg.push(w - wg);
            plan.dwa.push(w - wa);
            plan.v.push(v);
            plan.dvg.push(v - vg);
            plan.dva.push(v - va);
            true
        };
        for (rho, wr, wrg, _) in scheme.middle_nodes() {
            let f = rho.powf(-s - 1.0);
            for j in 0..ang.len() {
                push(&mut plan, rho, wr * f, wrg * f, j);
            }
        }
        for (t, wt, wtg) in scheme.far_nodes(s) {
            let rho = t.powf(-1.0 / s);
            for j in 0..ang.len() {
                if !push(&mut plan, rho, wt / s, wtg / s, j) {
                    plan.tail += wt / s * afac[j] * ang.weights[j] * kmax;
                }
            }
        }
        // near field
        let r = scheme.r_in;
        let mut groups: Vec<Group> = Vec::new();
        for i in 0..n {
            for k in i..n {
                let e = 2.0 / a.b()[i] + 2.0 / a.b()[k];
                match groups.iter_mut().find(|g| (g.e - e).abs() < 1e-12) {
                    Some(g) => g.pairs.push((i, k)),
                    None => groups.push(Group { e, pairs: vec![(i, k)] }),
                }
            }
        }
        groups.sort_by(|x, y| x.e.total_cmp(&y.e));
        plan.groups = groups;
        for j in 0..ang.len() {
            let th = ang.node(j);
            for i in 0..n {
                y[i] = r.powf(2.0 / a.b()[i]) * th[i];
            }
            plan.thetas.extend_from_slice(th);
            let base = q * afac[j] * ang.weights[j];
            plan.near_base.push(base);
            plan.near_dbase.push(base - q * afac[j] * ang.coarse[j]);
            plan.near_mult.push(plan.kernel.multiplier(&y));
            let mut m2 = 0.0;
            let mut m4 = 0.0;
            for i in 0..n {
                let p = 4.0 / a.b()[i] - s;
                m2 += th[i] * th[i] * r.powf(p) / p;
                for k in 0..n {
                    let p = 4.0 / a.b()[i] + 4.0 / a.b()[k] - s;
                    m4 += th[i] * th[i] * th[k] * th[k] * r.powf(p) / p;
                }
            }
            plan.s2 += base * m2;
            plan.s4 += base * m4;
        }
        Ok(plan)
    }

    /// Plan with [`QuadratureScheme::default_for`] at `level`.
    pub fn default_for(kernel: KernelSpec, level: u32) -> Result<Self> {
        let scheme = QuadratureScheme::default_for(kernel.anisotropy(), level);
        Self::new(kernel, scheme)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }
    pub fn node_count(&self) -> usize {
        self.w.len()
    }
    /// `∫_{E_{r_in,1}} |y|² q K_0`.
    pub fn near_second_moment(&self) -> f64 {
        self.s2
    }

    /// Euclidean reach of `E_{r_in,1}`.
    pub fn near_reach(&self) -> f64 {
        let a = self.kernel.anisotropy();
        a.b().iter().map(|b| self.scheme.r_in.powf(2.0 / b)).fold(0.0, f64::max)
    }

    /// Quadrature offsets (row-major, `n` columns) and their `L` weights; each node
    /// stands for the pair `±y`.
    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.ys, &self.w)
    }

    /// `N` with `∫_{E_{r_in,1}} yᵀHy 𝒦 = Σ_{ik} H_ik N_ik` (multiplier frozen on the inner shell).
    pub fn near_hessian_weights(&self) -> Vec<f64> {
        let n = self.n;
        let a = self.kernel.anisotropy();
        let (r, s) = (self.scheme.r_in, a.s());
        let mut out = vec![0.0; n * n];
        for j in 0..self.near_base.len() {
            let th = &self.thetas[j * n..(j + 1) * n];
            let b = self.near_base[j] * self.near_mult[j];
            for i in 0..n {
                for k in 0..n {
                    let p = 2.0 / a.b()[i] + 2.0 / a.b()[k] - s;
                    out[i * n + k] += b * th[i] * th[k] * r.powf(p) / p;
                }
            }
        }
        out
    }

    fn check(&self, u: &dyn TestFunction, x: &[f64]) -> Result<LocalRegularity> {
        if u.dim() != self.n || x.len() != self.n {
            return Err(Error::Range(format!("expected dimension {}", self.n)));
        }
        let loc = u.local(x).ok_or_else(|| Error::Precondition(format!("no regularity declaration at x = {x:?}")))?;
        let reach = self.near_reach();
        if reach > loc.eta0 {
            return Err(Error::Precondition(format!(
                "near-field reach {reach} exceeds the regularity radius {} at x = {x:?}",
                loc.eta0
            )));
        }
        Ok(loc)
    }

    /// Signed integral of `Q(ρ) = Σ_g C_g ρ^{e_g}` against `ρ^{−s−1}` on `(0, r_in)`,
    /// split into its positive and negative parts.
    fn ray(&self, coef: &[f64]) -> (f64, f64) {
        let s = self.kernel.anisotropy().s();
        let r = self.scheme.r_in;
        let prim = |a: f64, b: f64| -> f64 {
            self.groups
                .iter()
                .zip(coef)
                .map(|(g, c)| {
                    let p = g.e - s;
                    c * (b.powf(p) - a.powf(p)) / p
                })
                .sum()
        };
        if self.groups.len() == 1 {
            let v = prim(0.0, r);
            return if v > 0.0 { (v, 0.0) } else { (0.0, -v) };
        }
        let q = |rho: f64| -> f64 { self.groups.iter().zip(coef).map(|(g, c)| c * rho.powf(g.e)).sum() };
        let sgn = |v: f64| -> i8 {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        const STEPS: usize = 96;
        let bottom = r * 1e-12;
        let mut cuts = vec![0.0];
        let mut prev = bottom;
        let mut sp = sgn(q(prev));
        for k in 1..=STEPS {
            let cur = bottom * (1e12f64).powf(k as f64 / STEPS as f64);
            let sc = sgn(q(cur));
            if sp * sc < 0 {
                let (mut lo, mut hi) = (prev, cur);
                let slo = sp;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let sm = sgn(q(mid));
                    if sm == 0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if sm == slo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
            if sc != 0 {
                sp = sc;
            }
            prev = cur;
        }
        cuts.push(r);
        let (mut pos, mut neg) = (0.0, 0.0);
        for w in cuts.windows(2) {
            let v = prim(w[0], w[1]);
            if v > 0.0 {
                pos += v;
            } else {
                neg -= v;
            }
        }
        (pos, neg)
    }

    /// Evaluates `L u`, `ℳ⁺u`, `ℳ⁻u` at `x`.
    pub fn evaluate_all(&self, u: &dyn TestFunction, x: &[f64]) -> Result<Triple> {
        let loc = self.check(u, x)?;
        let n = self.n;
        let (lam, big) = (self.kernel.lambda(), self.kernel.big_lambda());
        let ux = u.value(x);
        let mut acc = [0.0f64; 9];
        for k in 0..self.w.len() {
            let y = &self.ys[k * n..(k + 1) * n];
            let d = u.second_difference(x, y, ux);
            let tp = if d > 0.0 { big * d } else { lam * d };
            let tm = if d > 0.0 { lam * d } else { big * d };
            acc[0] += self.w[k] * d;
            acc[1] += self.dwg[k] * d;
            acc[2] += self.dwa[k] * d;
            acc[3] += self.v[k] * tp;
            acc[4] += self.dvg[k] * tp;
            acc[5] += self.dva[k] * tp;
            acc[6] += self.v[k] * tm;
            acc[7] += self.dvg[k] * tm;
            acc[8] += self.dva[k] * tm;
        }
        let tail = self.tail * u.delta_bound();
        let mut near = [0.0f64; 6];
        let mut freeze = 0.0;
        let model_err;
        match &loc.hessian {
            Some(h) => {
                let mut coef = vec![0.0; self.groups.len()];
                let constant_m = self.kernel.has_constant_multiplier();
                for j in 0..self.near_base.len() {
                    let th = &self.thetas[j * n..(j + 1) * n];
                    for (g, c) in self.groups.iter().zip(coef.iter_mut()) {
                        *c = g
                            .pairs
                            .iter()
                            .map(|&(i, k)| h[i * n + k] * th[i] * th[k] * if i == k { 1.0 } else { 2.0 })
                            .sum();
                    }
                    let (pos, neg) = self.ray(&coef);
                    let (b, db) = (self.near_base[j], self.near_dbase[j]);
                    let lv = self.near_mult[j] * (pos - neg);
                    let pv = big * pos - lam * neg;
                    let mv = lam * pos - big * neg;
                    near[0] += b * lv;
                    near[1] += db * lv;
                    near[2] += b * pv;
                    near[3] += db * pv;
                    near[4] += b * mv;
                    near[5] += db * mv;
                    if !constant_m {
                        freeze += b * (big - lam) * (pos + neg);
                    }
                }
                model_err = match loc.quartic {
                    Some(qc) => qc * self.s4,
                    None => {
                        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                        (2.0 * loc.m + hn) * self.s2
                    }
                };
            }
            None => model_err = 2.0 * loc.m * self.s2,
        }
        let l = Evaluation {
            value: acc[0] + near[0],
            error: acc[1].abs() + acc[2].abs() + near[1].abs() + big * model_err + freeze + tail,
        };
        let plus = Evaluation {
            value: acc[3] + near[2],
            error: acc[4].abs() + acc[5].abs() + near[3].abs() + big * model_err + tail,
        };
        let minus = Evaluation {
            value: acc[6] + near[4],
            error: acc[7].abs() + acc[8].abs() + near[5].abs() + big * model_err + tail,
        };
        Ok(Triple { l, plus, minus })
    }

    pub fn evaluate(&self, u: &dyn TestFunction, x: &[f64]) -> Result<Evaluation> {
        Ok(self.evaluate_all(u, x)?.l)
    }

    pub fn pucci(&self, u: &dyn TestFunction, x: &[f64], sign: PucciSign) -> Result<Evaluation> {
        let t = self.evaluate_all(u, x)?;
        Ok(match sign {
            PucciSign::Plus => t.plus,
            PucciSign::Minus => t.minus,
        })
    }

    /// Parallel evaluation at many points; results keep the input order.
    pub fn evaluate_many(&self, u: &dyn TestFunction, xs: &[Vec<f64>]) -> Result<Vec<Triple>> {
        xs.par_iter().map(|x| self.evaluate_all(u, x)).collect()
    }
}

/// `L u(x)` with the given kernel and scheme.
pub fn evaluate_l(u: &dyn TestFunction, x: &[f64], k: &KernelSpec, q: &QuadratureScheme) -> Result<Evaluation> {
    OperatorPlan::new(k.clone(), q.clone())?.evaluate(u, x)
}

/// `ℳ±u(x)` with the bounds `(λ, Λ)` of `k`.
pub fn pucci(u: &dyn TestFunction, x: &[f64], k: &KernelSpec, q: &QuadratureScheme, sign: PucciSign) -> Result<Evaluation> {
    OperatorPlan::new(k.clone(), q.clone())?.pucci(u, x, sign)
}

/// `(−Δ)^{β,s}u(x) = −½ L_ref u(x)`; the plan must use the reference kernel.
pub fn fractional_laplacian(plan: &OperatorPlan, u: &dyn TestFunction, x: &[f64]) -> Result<Evaluation> {
    if !matches!(plan.kernel().mode(), KernelMode::Reference) {
        return Err(Error::Precondition("the fractional Laplacian uses the reference kernel".into()));
    }
    let e = plan.evaluate(u, x)?;
    Ok(Evaluation { value: -0.5 * e.value, error: 0.5 * e.error })
}

/// `η(x)`.
pub fn barrier_eta(x: &[f64]) -> f64 {
    Eta { n: x.len() }.value(x)
}

/// `L η(x)` with the default scheme at level 1.
pub fn barrier_eta_l(x: &[f64], k: &KernelSpec) -> Result<Evaluation> {
    let plan = OperatorPlan::default_for(k.clone(), 1)?;
    plan.evaluate(&Eta { n: x.len() }, x)
}
