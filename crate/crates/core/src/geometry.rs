//! Anisotropic norm, ellipsoids, rectangles and scaling maps.
//!
//! All sets are open: membership uses strict inequalities and boundary points
//! are outside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{Halton, DEFAULT_SEED};

/// Homogeneity exponents `b` and order `s` with every derived exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnisotropyJson", into = "AnisotropyJson")]
pub struct Anisotropy {
    b: Vec<f64>,
    s: f64,
    c: f64,
    b_min: f64,
    b_max: f64,
    q_max: f64,
    q_min: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnisotropyJson {
    b: Vec<f64>,
    s: f64,
}

impl TryFrom<AnisotropyJson> for Anisotropy {
    type Error = Error;
    fn try_from(v: AnisotropyJson) -> Result<Self> {
        Anisotropy::new(v.b, v.s)
    }
}

impl From<Anisotropy> for AnisotropyJson {
    fn from(a: Anisotropy) -> Self {
        AnisotropyJson { b: a.b, s: a.s }
    }
}

impl Anisotropy {
    /// Builds the anisotropy, rejecting `s` outside `(0, 4/b_max)`.
    pub fn new(b: Vec<f64>, s: f64) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::Range("at least one exponent b_i is required".into()));
        }
        if b.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Range(format!("exponents must be positive and finite, got {b:?}")));
        }
        let b_min = b.iter().cloned().fold(f64::INFINITY, f64::min);
        let b_max = b.iter().cloned().fold(0.0, f64::max);
        if !(s > 0.0) || !(s < 4.0 / b_max) {
            return Err(Error::Range(format!(
                "order s = {s} must lie in (0, 4/b_max) = (0, {})",
                4.0 / b_max
            )));
        }
        let c = b.iter().map(|v| 2.0 / v).sum();
        Ok(Self { b, s, c, b_min, b_max, q_max: 4.0 / b_max - s, q_min: 4.0 / b_min - s })
    }

    /// Isotropic anisotropy `b = (2, ..., 2)`.
    pub fn isotropic(n: usize, s: f64) -> Result<Self> {
        Self::new(vec![2.0; n], s)
    }

    /// Same exponents with a different order.
    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(self.b.clone(), s)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    /// `c = Σ 2/b_i`.
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn b_min(&self) -> f64 {
        self.b_min
    }
    pub fn b_max(&self) -> f64 {
        self.b_max
    }
    /// `q_max,s = 4/b_max − s`.
    pub fn q_max(&self) -> f64 {
        self.q_max
    }
    /// `q_min,s = 4/b_min − s`.
    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    /// `‖y‖² = Σ |y_i|^{b_i}`.
    pub fn norm_sq(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.n());
        y.iter().zip(&self.b).map(|(&v, &b)| pow_abs(v, b)).sum()
    }

    /// The anisotropic norm `‖y‖`.
    pub fn norm(&self, y: &[f64]) -> f64 {
        self.norm_sq(y).sqrt()
    }

    /// `J(θ) = Σ (2/b_i) θ_i²`, the radial Jacobian factor of generalized polar coordinates.
    pub fn polar_jacobian(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.b).map(|(t, b)| 2.0 / b * t * t).sum()
    }
}

/// `|x|^b`, by repeated multiplication when `b` is a small integer.
pub fn pow_abs(x: f64, b: f64) -> f64 {
    let ax = x.abs();
    if b.fract() == 0.0 && (1.0..=16.0).contains(&b) {
        let mut out = ax;
        for _ in 1..b as u32 {
            out *= ax;
        }
        out
    } else if ax == 0.0 {
        0.0
    } else {
        ax.powf(b)
    }
}

/// Lebesgue measure of the Euclidean unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let mut v = [1.0, 2.0];
    for k in 2..=n {
        let next = v[0] * 2.0 * std::f64::consts::PI / k as f64;
        v[0] = v[1];
        v[1] = next;
    }
    if n == 0 {
        1.0
    } else {
        v[1]
    }
}

/// Lebesgue measure of `Θ_1 = {‖y‖ < 1}`.
pub fn theta_unit_volume(a: &Anisotropy) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let inv: f64 = a.b().iter().map(|b| 1.0 / b).sum();
    let ln: f64 = a.b().iter().map(|b| ln_gamma(1.0 + 1.0 / b)).sum::<f64>() - ln_gamma(1.0 + inv);
    2f64.powi(a.n() as i32) * ln.exp()
}

fn euclid(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Ellipsoid family of a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EllipsoidKind {
    /// `E_{r,l}(x)`: `Σ (y_i−x_i)²/r^{4/b_i} < l²`.
    E,
    /// `E^max_{r,l}(x)`: `Σ (y_i−x_i)²/r^{2 b_max/b_i} < l²`.
    Emax,
    /// `Θ_r(x)`: `‖y − x‖ < r`.
    Theta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipsoid {
    pub kind: EllipsoidKind,
    pub center: Vec<f64>,
    pub r: f64,
    #[serde(default = "one")]
    pub l: f64,
}

fn one() -> f64 {
    1.0
}

impl Ellipsoid {
    pub fn e(center: Vec<f64>, r: f64, l: f64) -> Self {
        Self { kind: EllipsoidKind::E, center, r, l }
    }
    pub fn emax(center: Vec<f64>, r: f64, l: f64) -> Self {
        Self { kind: EllipsoidKind::Emax, center, r, l }
    }
    pub fn theta(center: Vec<f64>, r: f64) -> Self {
        Self { kind: EllipsoidKind::Theta, center, r, l: 1.0 }
    }

    /// Semi-axes of the bounding box (exact semi-axes for `E` and `Emax`).
    pub fn half_widths(&self, a: &Anisotropy) -> Vec<f64> {
        a.b()
            .iter()
            .map(|&b| match self.kind {
                EllipsoidKind::E => self.l * self.r.powf(2.0 / b),
                EllipsoidKind::Emax => self.l * self.r.powf(a.b_max() / b),
                EllipsoidKind::Theta => self.r.powf(2.0 / b),
            })
            .collect()
    }

    pub fn contains(&self, a: &Anisotropy, y: &[f64]) -> bool {
        Indicator::new(a, &Region::Ellipsoid(self.clone())).contains(y)
    }

    pub fn volume(&self, a: &Anisotropy) -> f64 {
        let n = a.n();
        match self.kind {
            EllipsoidKind::E => self.r.powf(a.c()) * self.l.powi(n as i32) * unit_ball_volume(n),
            EllipsoidKind::Emax => {
                self.r.powf(a.b_max() * a.c() / 2.0) * self.l.powi(n as i32) * unit_ball_volume(n)
            }
            EllipsoidKind::Theta => self.r.powf(a.c()) * theta_unit_volume(a),
        }
    }
}

/// Axis-aligned open rectangle `{|y_i − x_i| < l_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisoRect {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl AnisoRect {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>) -> Self {
        Self { center, half_widths }
    }

    /// `R_{r,l}(x)`: half-widths `l^{2/b_min} r^{2/b_i}`.
    pub fn r_l(a: &Anisotropy, center: Vec<f64>, r: f64, l: f64) -> Self {
        let lf = l.powf(2.0 / a.b_min());
        let half_widths = a.b().iter().map(|&b| lf * r.powf(2.0 / b)).collect();
        Self { center, half_widths }
    }

    /// Companion rectangle `R̃(x)` of generation `k`: half-widths `(2^{−ℭ b_min k/2} r)^{2/b_i}`.
    pub fn companion(a: &Anisotropy, center: Vec<f64>, r: f64, k: u32, frak_c: u32) -> Self {
        let rk = 2f64.powf(-(frak_c as f64) * a.b_min() * k as f64 / 2.0) * r;
        let half_widths = a.b().iter().map(|&b| rk.powf(2.0 / b)).collect();
        Self { center, half_widths }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().zip(&self.center).zip(&self.half_widths).all(|((p, c), w)| (p - c).abs() < *w)
    }

    /// Membership in the closure.
    pub fn contains_closed(&self, y: &[f64], tol: f64) -> bool {
        y.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .all(|((p, c), w)| (p - c).abs() <= *w + tol)
    }

    pub fn volume(&self) -> f64 {
        self.half_widths.iter().map(|w| 2.0 * w).product()
    }

    pub fn diameter(&self) -> f64 {
        2.0 * euclid(&self.half_widths)
    }

    /// Concentric dilation by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        Self {
            center: self.center.clone(),
            half_widths: self.half_widths.iter().map(|w| w * factor).collect(),
        }
    }

    /// Whether two open rectangles intersect.
    pub fn intersects(&self, other: &AnisoRect) -> bool {
        self.center
            .iter()
            .zip(&self.half_widths)
            .zip(other.center.iter().zip(&other.half_widths))
            .all(|((c1, w1), (c2, w2))| (c1 - c2).abs() < w1 + w2)
    }
}

/// Sets accepted by [`inclusion_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    Ellipsoid(Ellipsoid),
    Rect(AnisoRect),
    /// Euclidean ball `B_radius(center)`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn center(&self) -> &[f64] {
        match self {
            Region::Ellipsoid(e) => &e.center,
            Region::Rect(r) => &r.center,
            Region::Ball { center, .. } => center,
        }
    }

    pub fn contains(&self, a: &Anisotropy, y: &[f64]) -> bool {
        Indicator::new(a, self).contains(y)
    }

    pub fn half_widths(&self, a: &Anisotropy) -> Vec<f64> {
        match self {
            Region::Ellipsoid(e) => e.half_widths(a),
            Region::Rect(r) => r.half_widths.clone(),
            Region::Ball { radius, center } => vec![*radius; center.len()],
        }
    }

    pub fn volume(&self, a: &Anisotropy) -> f64 {
        match self {
            Region::Ellipsoid(e) => e.volume(a),
            Region::Rect(r) => r.volume(),
            Region::Ball { radius, center } => {
                radius.powi(center.len() as i32) * unit_ball_volume(center.len())
            }
        }
    }

    /// Scale `t` with `center + t·d` on the boundary, for a nonzero direction `d`.
    fn boundary_scale(&self, a: &Anisotropy, d: &[f64]) -> f64 {
        match self {
            Region::Ellipsoid(e) if e.kind == EllipsoidKind::Theta => {
                // Σ c_i t^{b_i} is convex and increasing, so Newton from above is monotone
                let g = |t: f64| -> (f64, f64) {
                    d.iter().zip(a.b()).fold((-e.r * e.r, 0.0), |(v, dv), (x, &b)| {
                        let p = pow_abs(x * t, b);
                        (v + p, dv + b * p / t)
                    })
                };
                let mut t = 1.0;
                while g(t).0 < 0.0 {
                    t *= 2.0;
                }
                for _ in 0..200 {
                    let (v, dv) = g(t);
                    let next = t - v / dv;
                    if !(next < t) || next <= 0.0 {
                        break;
                    }
                    t = next;
                }
                t
            }
            Region::Ellipsoid(e) => {
                let h = e.half_widths(a);
                let q: f64 = d.iter().zip(&h).map(|(x, w)| (x / w) * (x / w)).sum();
                1.0 / q.sqrt()
            }
            Region::Rect(r) => {
                let m = d.iter().zip(&r.half_widths).map(|(x, w)| x.abs() / w).fold(0.0, f64::max);
                1.0 / m
            }
            Region::Ball { radius, .. } => radius / euclid(d),
        }
    }
}

/// Allocation-free membership test for a [`Region`], with the anisotropy folded in.
#[derive(Clone, Debug)]
pub struct Indicator {
    center: Vec<f64>,
    shape: Shape,
}

#[derive(Clone, Debug)]
enum Shape {
    /// `Σ ((y−c)_i / w_i)² < 1`
    Ellipsoid(Vec<f64>),
    /// `Σ |y−c|_i^{b_i} < r²`
    Theta(Vec<f64>, f64),
    Rect(Vec<f64>),
}

impl Indicator {
    pub fn new(a: &Anisotropy, region: &Region) -> Self {
        let center = region.center().to_vec();
        let shape = match region {
            Region::Ellipsoid(e) if e.kind == EllipsoidKind::Theta => Shape::Theta(a.b().to_vec(), e.r * e.r),
            Region::Ellipsoid(e) => Shape::Ellipsoid(e.half_widths(a).iter().map(|w| 1.0 / w).collect()),
            Region::Ball { center, radius } => Shape::Ellipsoid(vec![1.0 / radius; center.len()]),
            Region::Rect(r) => Shape::Rect(r.half_widths.clone()),
        };
        Self { center, shape }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        let c = &self.center;
        match &self.shape {
            Shape::Ellipsoid(inv) => {
                y.iter().zip(c).zip(inv).map(|((p, c), w)| ((p - c) * w).powi(2)).sum::<f64>() < 1.0
            }
            Shape::Theta(b, r2) => y.iter().zip(c).zip(b).map(|((p, c), b)| pow_abs(p - c, *b)).sum::<f64>() < *r2,
            Shape::Rect(hw) => y.iter().zip(c).zip(hw).all(|((p, c), w)| (p - c).abs() < *w),
        }
    }
}

impl From<Ellipsoid> for Region {
    fn from(e: Ellipsoid) -> Self {
        Region::Ellipsoid(e)
    }
}

impl From<AnisoRect> for Region {
    fn from(r: AnisoRect) -> Self {
        Region::Rect(r)
    }
}

/// Outcome of a sampled inclusion test `A ⊂ B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionCertificate {
    pub holds_on_samples: bool,
    pub samples: usize,
    pub violations: usize,
    pub witness: Option<Vec<f64>>,
}

/// Tests `A ⊂ B` on `samples` quasi-random points of `A`.
///
/// Half of the points are uniform in `A`; the other half are pushed radially to
/// within a relative `1e−9` of `∂A`, where violations of tight inclusions live.
pub fn inclusion_check(
    a: &Anisotropy,
    set_a: &Region,
    set_b: &Region,
    samples: usize,
    seed: u64,
) -> InclusionCertificate {
    let n = a.n();
    let center = set_a.center().to_vec();
    let hw = set_a.half_widths(a);
    let in_a = Indicator::new(a, set_a);
    let in_b = Indicator::new(a, set_b);
    let mut halton = Halton::new(n, seed);
    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut tested = 0usize;
    let mut violations = 0usize;
    let mut witness = None;
    let mut attempts = 0usize;
    let max_attempts = samples.saturating_mul(256).max(1024);
    while tested < samples && attempts < max_attempts {
        attempts += 1;
        halton.fill(&mut u);
        for k in 0..n {
            d[k] = (2.0 * u[k] - 1.0) * hw[k];
            p[k] = center[k] + d[k];
        }
        if !in_a.contains(&p) {
            continue;
        }
        if tested % 2 == 1 && d.iter().any(|v| *v != 0.0) {
            let t = set_a.boundary_scale(a, &d) * (1.0 - 1e-9);
            for k in 0..n {
                p[k] = center[k] + t * d[k];
            }
            if !in_a.contains(&p) {
                for k in 0..n {
                    p[k] = center[k] + d[k];
                }
            }
        }
        tested += 1;
        if !in_b.contains(&p) {
            violations += 1;
            if witness.is_none() {
                witness = Some(p.clone());
            }
        }
    }
    InclusionCertificate { holds_on_samples: violations == 0, samples: tested, violations, witness }
}

/// Linear maps `T_{β,r}`, `T_{max,r}` and `T_{j,β,r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingMap {
    TBeta { r: f64 },
    TMax { r: f64 },
    TAxis { j: usize, r: f64 },
}

impl ScalingMap {
    /// Diagonal entries of the map.
    pub fn factors(&self, a: &Anisotropy) -> Vec<f64> {
        match *self {
            ScalingMap::TBeta { r } => a.b().iter().map(|&b| r.powf(2.0 / b)).collect(),
            ScalingMap::TMax { r } => a.b().iter().map(|&b| r.powf(a.b_max() / b)).collect(),
            ScalingMap::TAxis { j, r } => {
                let bj = a.b()[j];
                a.b()
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| if i == j { r } else { r.powf(bj / b) })
                    .collect()
            }
        }
    }

    pub fn apply(&self, a: &Anisotropy, y: &[f64]) -> Vec<f64> {
        self.factors(a).iter().zip(y).map(|(f, v)| f * v).collect()
    }

    pub fn apply_inverse(&self, a: &Anisotropy, y: &[f64]) -> Vec<f64> {
        self.factors(a).iter().zip(y).map(|(f, v)| v / f).collect()
    }

    pub fn det(&self, a: &Anisotropy) -> f64 {
        match *self {
            ScalingMap::TBeta { r } => r.powf(a.c()),
            _ => self.factors(a).iter().product(),
        }
    }
}

/// Applies `T_{β,r}` to `y`.
pub fn scale_apply(a: &Anisotropy, map: &ScalingMap, y: &[f64]) -> Vec<f64> {
    map.apply(a, y)
}

/// Conditions whose conjunction defines `ℭ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrakCondition {
    /// `Θ_{r√n}(x) ⊂ E_{rℭ,1}(x)`.
    ThetaInE,
    /// `E_{2^{−ℭ}r,1}(x) ⊂ E_{r,1/4}(x)`.
    QuarterShrink,
    /// `E_{lr,1} ⊂ E_{r,1/2}` with `l = 2^{−ℭ b_min/2}`.
    ShellHalving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrakC {
    pub value: u32,
    pub binding: FrakCondition,
    /// Smallest admissible value for each condition on its own.
    pub per_condition: Vec<(FrakCondition, u32)>,
    pub samples_per_check: usize,
}

const FRAK_C_CAP: u32 = 256;

fn frak_condition_holds(a: &Anisotropy, cond: FrakCondition, k: u32, samples: usize, seed: u64) -> bool {
    let n = a.n();
    let o = vec![0.0; n];
    let kf = k as f64;
    let (sa, sb): (Region, Region) = match cond {
        FrakCondition::ThetaInE => (
            Ellipsoid::theta(o.clone(), (n as f64).sqrt()).into(),
            Ellipsoid::e(o, kf, 1.0).into(),
        ),
        FrakCondition::QuarterShrink => {
            (Ellipsoid::e(o.clone(), 2f64.powf(-kf), 1.0).into(), Ellipsoid::e(o, 1.0, 0.25).into())
        }
        FrakCondition::ShellHalving => {
            let l = 2f64.powf(-kf * a.b_min() / 2.0);
            (Ellipsoid::e(o.clone(), l, 1.0).into(), Ellipsoid::e(o, 1.0, 0.5).into())
        }
    };
    inclusion_check(a, &sa, &sb, samples, seed).holds_on_samples
}

/// Smallest natural `ℭ` satisfying every inclusion in [`FrakCondition`], by sampled certificates.
///
/// The sets are homogeneous under `T_{β,r}`, so each condition is tested at `r = 1`.
pub fn frak_c(a: &Anisotropy) -> FrakC {
    frak_c_with(a, 200_000, DEFAULT_SEED)
}

pub fn frak_c_with(a: &Anisotropy, samples: usize, seed: u64) -> FrakC {
    let conds = [FrakCondition::ThetaInE, FrakCondition::QuarterShrink, FrakCondition::ShellHalving];
    let mut per_condition = Vec::with_capacity(3);
    for cond in conds {
        let mut k = 1;
        while k < FRAK_C_CAP && !frak_condition_holds(a, cond, k, samples, seed) {
            k += 1;
        }
        per_condition.push((cond, k));
    }
    let (binding, value) = per_condition
        .iter()
        .fold((conds[0], 0), |acc, &(c, v)| if v > acc.1 { (c, v) } else { acc });
    FrakC { value, binding, per_condition, samples_per_check: samples }
}

/// One ring `E_{outer,1} ∖ E_{inner,1}` of a dyadic shell decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub outer: Ellipsoid,
    pub inner: Ellipsoid,
    pub measure: f64,
}

impl Shell {
    pub fn contains(&self, a: &Anisotropy, y: &[f64]) -> bool {
        self.outer.contains(a, y) && !self.inner.contains(a, y)
    }
}

/// Shells `E_{r_k,1} ∖ E_{r_{k+1},1}` with `r_k = r0 2^{−k}`, `k = 0..depth`.
pub fn shell_decomposition(a: &Anisotropy, r0: f64, depth: usize) -> Vec<Shell> {
    let o = vec![0.0; a.n()];
    let ball = unit_ball_volume(a.n());
    (0..depth)
        .map(|k| {
            let rk = r0 * 2f64.powi(-(k as i32));
            Shell {
                outer: Ellipsoid::e(o.clone(), rk, 1.0),
                inner: Ellipsoid::e(o.clone(), rk / 2.0, 1.0),
                measure: rk.powf(a.c()) * (1.0 - 2f64.powf(-a.c())) * ball,
            }
        })
        .collect()
}

/// Radii `(r′, r″)` with `B_{r′} ⊆ Θ_r ⊆ B_{r″}`.
///
/// `r″ = (Σ r^{4/b_i})^{1/2}` bounds the box of `Θ_r`; `r′` solves `Σ r′^{b_i} = r²`.
pub fn topology_radii(a: &Anisotropy, r: f64) -> (f64, f64) {
    let outer = a.b().iter().map(|&b| r.powf(4.0 / b)).sum::<f64>().sqrt();
    let g = |t: f64| a.b().iter().map(|&b| t.powf(b)).sum::<f64>() - r * r;
    let (mut lo, mut hi) = (0.0, outer.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, outer)
}
