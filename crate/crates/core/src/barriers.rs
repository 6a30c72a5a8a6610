//! The barriers `η`, `f = min(κ^{−p}, |x|^{−p})`, the bump `Ψ`, and the
//! certificate searches built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnisoRect, Anisotropy};
use crate::kernels::{bathtub_infimum, polar_radius_for_euclid, KernelSpec};
use crate::operator::{fractional_laplacian, power_d4, Eta, LocalRegularity, OperatorPlan, PowerBarrier, TestFunction};
use crate::quadrature::{semi_infinite, AngularRule, QuadratureScheme};
use crate::sampling::{ball_points, DEFAULT_SEED};

const SEARCH_CAP: usize = 60;

/// `sup` of `(−Δ)^{β,s} η` over a point set at one quadrature level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaSup {
    pub level: u32,
    /// `max |value|`.
    pub sup_abs: f64,
    /// `max (value + error)`, an upper bound for the sup of the operator.
    pub sup_upper: f64,
    pub argmax: Vec<f64>,
    pub max_error: f64,
}

/// The origin followed by `count − 1` Halton points of `B_{3/4}`.
pub fn b34_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut xs = vec![vec![0.0; n]];
    xs.extend(ball_points(n, 0.75, count.saturating_sub(1), seed));
    xs
}

pub fn eta_sup(a: &Anisotropy, xs: &[Vec<f64>], level: u32) -> Result<EtaSup> {
    let plan = OperatorPlan::default_for(KernelSpec::reference(a.clone()), level)?;
    let eta = Eta { n: a.n() };
    let vals: Vec<_> = xs.iter().map(|x| fractional_laplacian(&plan, &eta, x)).collect::<Result<_>>()?;
    let mut out = EtaSup { level, sup_abs: 0.0, sup_upper: f64::NEG_INFINITY, argmax: xs[0].clone(), max_error: 0.0 };
    for (x, e) in xs.iter().zip(&vals) {
        if e.value.abs() > out.sup_abs {
            out.sup_abs = e.value.abs();
            out.argmax = x.clone();
        }
        out.sup_upper = out.sup_upper.max(e.value + e.error);
        out.max_error = out.max_error.max(e.error);
    }
    Ok(out)
}

/// Sample points of the annulus `1 ≤ |x| ≤ R`: geometric radii times a fixed set of directions.
pub fn annulus_points(n: usize, big_r: f64, radii: usize) -> Result<Vec<Vec<f64>>> {
    let dirs: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 8.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let mut d = Vec::new();
            for i in -1..=1 {
                for j in -1..=1 {
                    for k in -1..=1 {
                        if (i, j, k) != (0, 0, 0) {
                            let v = [i as f64, j as f64, k as f64];
                            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                            d.push(v.iter().map(|x| x / l).collect());
                        }
                    }
                }
            }
            d
        }
        _ => return Err(Error::Domain(format!("annulus sampling supports n ≤ 3, got {n}"))),
    };
    let m = radii.max(2);
    let mut out = Vec::new();
    for k in 0..m {
        let r = big_r.powf(k as f64 / (m - 1) as f64);
        for d in &dirs {
            out.push(d.iter().map(|v| v * r).collect());
        }
    }
    Ok(out)
}

/// One trial of [`find_p`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PTrial {
    pub p: f64,
    /// `min_x (ℳ⁻f(x) − error(x))` over the annulus samples.
    pub min_certified: f64,
    pub argmin: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerCertificate {
    pub p: f64,
    pub big_r: f64,
    pub samples: usize,
    pub trials: Vec<PTrial>,
}

/// Quadrature scheme for `f = min(2^p, |x|^{−p})`: the near zone shrinks like `1/p`
/// so the quadratic model of `δ` stays accurate.
pub fn power_scheme(a: &Anisotropy, p: f64, level: u32) -> QuadratureScheme {
    let reach = (0.25 / p.max(1.0)).min(0.05);
    let r_in = a.b().iter().map(|b| reach.powf(b / 2.0)).fold(f64::INFINITY, f64::min);
    let r_out = a.b().iter().map(|b| 4f64.powf(b / 2.0)).fold(0.0, f64::max);
    let mut q = QuadratureScheme::with_radii(r_in, r_out, level);
    // keep the shell density of the default scheme
    let octaves = (r_out / r_in).log2().ceil() as usize;
    q.shells = octaves.max(1) << level;
    q
}

/// `ℳ⁻f` at each point, with `f = min(2^p, |x|^{−p})`.
pub fn power_minus(k: &KernelSpec, p: f64, xs: &[Vec<f64>], level: u32) -> Result<Vec<(f64, f64)>> {
    let a = k.anisotropy();
    let plan = OperatorPlan::new(k.clone(), power_scheme(a, p, level))?;
    let f = PowerBarrier::new(a.n(), p);
    Ok(plan.evaluate_many(&f, xs)?.into_iter().map(|t| (t.minus.value, t.minus.error)).collect())
}

/// Doubles `p` from 1 until `ℳ⁻f − error ≥ 0` on every annulus sample.
pub fn find_p(k: &KernelSpec, big_r: f64, level: u32) -> Result<PowerCertificate> {
    if !(big_r > 1.0) {
        return Err(Error::Range(format!("R must exceed 1, got {big_r}")));
    }
    let xs = annulus_points(k.anisotropy().n(), big_r, 8)?;
    let mut trials = Vec::new();
    let mut p = 1.0;
    for _ in 0..SEARCH_CAP {
        if !2f64.powf(p).is_finite() || p > 512.0 {
            break;
        }
        let vals = power_minus(k, p, &xs, level)?;
        let (mut min, mut arg) = (f64::INFINITY, xs[0].clone());
        for (x, (v, e)) in xs.iter().zip(&vals) {
            let c = v - e;
            if !(c >= min) {
                min = c;
                arg = x.clone();
            }
        }
        trials.push(PTrial { p, min_certified: min, argmin: arg });
        if min >= 0.0 {
            return Ok(PowerCertificate { p, big_r, samples: xs.len(), trials });
        }
        p *= 2.0;
    }
    let last = trials.last().map(|t| t.min_certified).unwrap_or(f64::NAN);
    Err(Error::NoCertificate(format!(
        "no p ≤ {} certified ℳ⁻f ≥ 0 on 1 ≤ |x| ≤ {big_r}; last margin {last:e}",
        trials.last().map(|t| t.p).unwrap_or(0.0)
    )))
}

/// `Ψ = c̃ (|z|^{−p} − (3√n)^{−p})` on `1 ≤ |z| ≤ 3√n`, `c̃ (A − (p/2)|z|²)` for `|z| < 1`,
/// `0` beyond, with `z = T_{β,1/4}^{−1} x`. `A = 1 − (3√n)^{−p} + p/2` matches value
/// and gradient across `|z| = 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Psi {
    pub p: f64,
    pub c_tilde: f64,
    /// `(1/4)^{2/b_i}`
    pub axes: Vec<f64>,
}

impl Psi {
    pub fn new(a: &Anisotropy, p: f64, c_tilde: f64) -> Self {
        Self { p, c_tilde, axes: a.b().iter().map(|b| 0.25f64.powf(2.0 / b)).collect() }
    }

    fn outer(&self) -> f64 {
        3.0 * (self.axes.len() as f64).sqrt()
    }

    /// Cap `A − Σ κ_i x_i²`: returns `(A, κ)`.
    pub fn cap(&self) -> (f64, Vec<f64>) {
        let p = self.p;
        let a = 1.0 - self.outer().powf(-p) + p / 2.0;
        (a, self.axes.iter().map(|ai| p / (2.0 * ai * ai)).collect())
    }

    fn z(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.axes).map(|(v, a)| v / a).collect()
    }

    /// `Ψ / c̃`.
    pub fn shape(&self, x: &[f64]) -> f64 {
        let z2: f64 = self.z(x).iter().map(|v| v * v).sum();
        let out = self.outer();
        if z2 >= out * out {
            0.0
        } else if z2 >= 1.0 {
            z2.powf(-self.p / 2.0) - out.powf(-self.p)
        } else {
            let (a, _) = self.cap();
            a - self.p / 2.0 * z2
        }
    }
}

impl TestFunction for Psi {
    fn dim(&self) -> usize {
        self.axes.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.c_tilde * self.shape(x)
    }
    fn local(&self, x: &[f64]) -> Option<LocalRegularity> {
        let n = self.dim();
        let z = self.z(x);
        let rho = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let amin = self.axes.iter().cloned().fold(f64::INFINITY, f64::min);
        let p = self.p;
        let c = self.c_tilde;
        let m = c * p * (p + 1.0) / (amin * amin) / 2.0;
        let out = self.outer();
        let mut h = vec![0.0; n * n];
        if rho < 1.0 {
            let (_, kap) = self.cap();
            for i in 0..n {
                h[i * n + i] = -2.0 * c * kap[i];
            }
            Some(LocalRegularity { m, eta0: (1.0 - rho) * amin, hessian: Some(h), quartic: Some(0.0) })
        } else if rho > 1.0 && rho < out {
            let ez = (rho - 1.0).min(out - rho) / 2.0;
            for i in 0..n {
                for j in 0..n {
                    let mut v = p * (p + 2.0) * rho.powf(-p - 4.0) * z[i] * z[j];
                    if i == j {
                        v -= p * rho.powf(-p - 2.0);
                    }
                    h[i * n + j] = c * v / (self.axes[i] * self.axes[j]);
                }
            }
            let quartic = c * power_d4(p) * (rho - ez).powf(-p - 4.0) / 12.0 / amin.powi(4);
            Some(LocalRegularity { m, eta0: ez * amin, hessian: Some(h), quartic: Some(quartic) })
        } else if rho > out {
            Some(LocalRegularity { m, eta0: (rho - out) * amin, hessian: Some(h), quartic: Some(0.0) })
        } else {
            None
        }
    }
    fn sup_abs(&self) -> f64 {
        self.c_tilde * self.cap().0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiCalibration {
    pub psi: Psi,
    /// `min Ψ/c̃` over the cell centers of `R_{1/4,3}`.
    pub shape_min: f64,
    pub cells_per_axis: usize,
}

/// Chooses `c̃ = 3(1 + 10^{−3}) / min_{R_{1/4,3}} Ψ/c̃` on a cell-center grid.
///
/// The corners of `R_{1/4,3}` lie on `∂E_{1/4,3√n}` when `b_min = 2` and outside it
/// when `b_min < 2`; in the latter case no `c̃` exists.
pub fn calibrate_psi(a: &Anisotropy, p: f64, cells_per_axis: usize) -> Result<PsiCalibration> {
    let n = a.n();
    let rect = AnisoRect::r_l(a, vec![0.0; n], 0.25, 3.0);
    let psi = Psi::new(a, p, 1.0);
    let m = cells_per_axis.max(1);
    let total = m.pow(n as u32);
    let mut x = vec![0.0; n];
    let mut min = f64::INFINITY;
    for flat in 0..total {
        let mut r = flat;
        for i in (0..n).rev() {
            let k = r % m;
            r /= m;
            let w = rect.half_widths[i];
            x[i] = -w + (2.0 * k as f64 + 1.0) * w / m as f64;
        }
        min = min.min(psi.shape(&x));
    }
    if !(min > 0.0) {
        return Err(Error::NoCertificate(format!(
            "Ψ vanishes on part of R_{{1/4,3}} (b_min = {}); no c̃ makes Ψ > 3 there",
            a.b_min()
        )));
    }
    let c_tilde = 3.0 * (1.0 + 1e-3) / min;
    Ok(PsiCalibration { psi: Psi::new(a, p, c_tilde), shape_min: min, cells_per_axis: m })
}

/// Resolution of a Silvestre check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilvestreGrid {
    pub bathtub_cells: usize,
    pub x_points: usize,
    pub level: u32,
}

impl SilvestreGrid {
    pub fn for_dim(n: usize) -> Self {
        let bathtub_cells = match n {
            1 => 512,
            2 => 128,
            _ => 48,
        };
        Self { bathtub_cells, x_points: 50, level: 1 }
    }

    pub fn doubled(&self) -> Self {
        Self { bathtub_cells: 2 * self.bathtub_cells, x_points: 2 * self.x_points, level: self.level + 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SilvestreCheck {
    pub kappa: f64,
    pub tau: f64,
    pub delta: f64,
    /// Upper bound of `sup_{B_{3/4}} (−Δ)^{β,s} η`.
    pub eta_sup: f64,
    /// `2 ∫_{|y|>1/4} (|8y|^τ − 1) K_0`.
    pub tail: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// `2 ∫_{ℝⁿ∖B_{1/4}} (|8y|^τ − 1) K_0(y) dy`; finite iff `τ < s b_min / 2`.
pub fn silvestre_tail(a: &Anisotropy, tau: f64, level: u32) -> Result<f64> {
    let eps = a.s() - 2.0 * tau / a.b_min();
    if !(tau > 0.0) || !(eps > 0.0) {
        return Err(Error::Range(format!("need 0 < τ < s b_min/2 = {}, got {tau}", a.s() * a.b_min() / 2.0)));
    }
    let ang = AngularRule::half_sphere(a.n(), 2 << level)?;
    let (c, s) = (a.c(), a.s());
    let mut total = 0.0;
    for j in 0..ang.len() {
        let th = ang.node(j);
        let w = ang.weights[j] * a.polar_jacobian(th) * a.norm(th).powf(-(c + s));
        let rho0 = polar_radius_for_euclid(a, th, 0.25);
        let f = |rho: f64| {
            let y2: f64 = th.iter().zip(a.b()).map(|(t, b)| rho.powf(4.0 / b) * t * t).sum();
            ((64.0 * y2).powf(tau / 2.0) - 1.0) * rho.powf(-s - 1.0)
        };
        total += w * semi_infinite(f, rho0, eps, 8 << level).0;
    }
    Ok(2.0 * total)
}

struct SilvestreParts {
    eta_sup: f64,
    rhs: f64,
}

fn silvestre_parts(a: &Anisotropy, delta: f64, grid: &SilvestreGrid) -> Result<SilvestreParts> {
    let xs = b34_points(a.n(), grid.x_points, DEFAULT_SEED);
    let eta = eta_sup(a, &xs, grid.level)?;
    let rhs = 0.5 * bathtub_infimum(a, delta, grid.bathtub_cells)?.value;
    Ok(SilvestreParts { eta_sup: eta.sup_upper, rhs })
}

fn assemble_check(a: &Anisotropy, parts: &SilvestreParts, delta: f64, kappa: f64, tau: f64, level: u32) -> Result<SilvestreCheck> {
    let tail = silvestre_tail(a, tau, level)?;
    let lhs = kappa * parts.eta_sup + tail;
    Ok(SilvestreCheck { kappa, tau, delta, eta_sup: parts.eta_sup, tail, lhs, rhs: parts.rhs, margin: parts.rhs - lhs })
}

/// Both sides of `κ (−Δ)^{β,s}η(x) + 2∫_{|y|>1/4}(|8y|^τ − 1)K_0 < ½ inf_{|𝓑|=δ} ∫_𝓑 K_0`,
/// the left side maximized over the origin and Halton points of `B_{3/4}`.
pub fn silvestre_check(a: &Anisotropy, delta: f64, kappa: f64, tau: f64, grid: &SilvestreGrid) -> Result<SilvestreCheck> {
    if !(kappa > 0.0 && kappa < 0.25) {
        return Err(Error::Range(format!("κ must lie in (0, 1/4), got {kappa}")));
    }
    let parts = silvestre_parts(a, delta, grid)?;
    assemble_check(a, &parts, delta, kappa, tau, grid.level)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SilvestreCertificate {
    pub check: SilvestreCheck,
    pub iterations: usize,
}

/// Halves `(κ, τ)` from `(1/8, s b_min / 4)` until the margin exceeds a quarter of the right side.
pub fn find_kappa_tau(a: &Anisotropy, delta: f64, grid: &SilvestreGrid) -> Result<SilvestreCertificate> {
    let parts = silvestre_parts(a, delta, grid)?;
    let mut kappa = 0.125;
    let mut tau = a.s() * a.b_min() / 4.0;
    for it in 0..SEARCH_CAP {
        let check = assemble_check(a, &parts, delta, kappa, tau, grid.level)?;
        if check.margin > check.rhs / 4.0 {
            return Ok(SilvestreCertificate { check, iterations: it + 1 });
        }
        kappa /= 2.0;
        tau /= 2.0;
    }
    Err(Error::NoCertificate(format!("no (κ, τ) after {SEARCH_CAP} halvings")))
}
