//! Jump kernels: the reference kernel `q_max,s · K_0`, bounded multiples of it,
//! truncated kernels, and integrals derived from `K_0`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Anisotropy;
use crate::quadrature::{gk15_nodes, AngularRule, QuadratureScheme};

/// `K_0(y) = ‖y‖^{−(c+s)}`.
pub fn eval_k0(a: &Anisotropy, y: &[f64]) -> Result<f64> {
    let nsq = a.norm_sq(y);
    if nsq == 0.0 {
        return Err(Error::Domain("K_0 is singular at y = 0".into()));
    }
    Ok(nsq.powf(-(a.c() + a.s()) / 2.0))
}

pub type MultiplierFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Multiplier `m(y)` applied to `q_max,s K_0`. Values are symmetrized and
/// clamped to `[λ, Λ]` before use.
#[derive(Clone)]
pub enum Multiplier {
    Constant { value: f64 },
    /// `mid + amplitude · half · cos(frequency ‖y‖)` with `mid, half` from `[λ, Λ]`.
    Radial { amplitude: f64, frequency: f64 },
    /// `λ + (Λ − λ) y_axis² / |y|²`.
    Directional { axis: usize },
    Custom(MultiplierFn),
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplier::Constant { value } => write!(f, "Constant({value})"),
            Multiplier::Radial { amplitude, frequency } => write!(f, "Radial({amplitude}, {frequency})"),
            Multiplier::Directional { axis } => write!(f, "Directional({axis})"),
            Multiplier::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiplierConfig {
    Constant { value: f64 },
    Radial { amplitude: f64, frequency: f64 },
    Directional { axis: usize },
}

impl From<&MultiplierConfig> for Multiplier {
    fn from(c: &MultiplierConfig) -> Self {
        match *c {
            MultiplierConfig::Constant { value } => Multiplier::Constant { value },
            MultiplierConfig::Radial { amplitude, frequency } => Multiplier::Radial { amplitude, frequency },
            MultiplierConfig::Directional { axis } => Multiplier::Directional { axis },
        }
    }
}

#[derive(Clone, Debug)]
pub enum KernelMode {
    Reference,
    Bounded(Multiplier),
    /// `m q K_0` on `Θ_ρ`, plus the L¹ piece `c_1/|Θ_{2ρ}∖Θ_ρ|` on that shell.
    Truncated { multiplier: Multiplier, radius: f64, c1: f64 },
}

/// A symmetric kernel with two-sided bounds `λ q K_0 ≤ K ≤ Λ q K_0` (near the origin
/// in truncated mode).
#[derive(Clone, Debug)]
pub struct KernelSpec {
    a: Anisotropy,
    lambda: f64,
    big_lambda: f64,
    mode: KernelMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Reference,
    Bounded,
    Truncated,
}

/// JSON form of a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub b: Vec<f64>,
    pub s: f64,
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(rename = "Lambda", default = "unit")]
    pub big_lambda: f64,
    #[serde(default = "reference")]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<MultiplierConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
}

fn unit() -> f64 {
    1.0
}
fn reference() -> ModeName {
    ModeName::Reference
}

impl KernelSpec {
    pub fn reference(a: Anisotropy) -> Self {
        Self { a, lambda: 1.0, big_lambda: 1.0, mode: KernelMode::Reference }
    }

    pub fn new(a: Anisotropy, lambda: f64, big_lambda: f64, mode: KernelMode) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(Error::Range(format!("need 0 < λ ≤ Λ, got λ = {lambda}, Λ = {big_lambda}")));
        }
        match &mode {
            KernelMode::Truncated { radius, c1, .. } if !(*radius > 0.0 && *c1 >= 0.0) => {
                return Err(Error::Range("truncation radius must be positive and c_1 ≥ 0".into()))
            }
            KernelMode::Bounded(Multiplier::Directional { axis })
            | KernelMode::Truncated { multiplier: Multiplier::Directional { axis }, .. }
                if *axis >= a.n() =>
            {
                return Err(Error::Range(format!("multiplier axis {axis} out of range")))
            }
            _ => {}
        }
        Ok(Self { a, lambda, big_lambda, mode })
    }

    pub fn bounded(a: Anisotropy, lambda: f64, big_lambda: f64, m: Multiplier) -> Result<Self> {
        Self::new(a, lambda, big_lambda, KernelMode::Bounded(m))
    }

    pub fn from_config(c: &KernelConfig) -> Result<Self> {
        let a = Anisotropy::new(c.b.clone(), c.s)?;
        let m = c.multiplier.as_ref().map(Multiplier::from);
        let mode = match c.mode {
            ModeName::Reference => KernelMode::Reference,
            ModeName::Bounded => KernelMode::Bounded(
                m.ok_or_else(|| Error::Range("bounded mode needs a multiplier".into()))?,
            ),
            ModeName::Truncated => KernelMode::Truncated {
                multiplier: m.unwrap_or(Multiplier::Constant { value: c.lambda }),
                radius: c
                    .truncation_radius
                    .ok_or_else(|| Error::Range("truncated mode needs truncation_radius".into()))?,
                c1: c.c1.unwrap_or(0.0),
            },
        };
        Self::new(a, c.lambda, c.big_lambda, mode)
    }

    pub fn anisotropy(&self) -> &Anisotropy {
        &self.a
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }
    pub fn mode(&self) -> &KernelMode {
        &self.mode
    }

    /// Whether `K(y)/K_0(y)` is constant, so the near-field model is exact in the kernel.
    pub fn has_constant_multiplier(&self) -> bool {
        match &self.mode {
            KernelMode::Reference => true,
            KernelMode::Bounded(Multiplier::Constant { .. }) => true,
            KernelMode::Bounded(_) => self.lambda == self.big_lambda,
            KernelMode::Truncated { .. } => false,
        }
    }

    fn raw_multiplier(&self, m: &Multiplier, y: &[f64]) -> f64 {
        let mid = 0.5 * (self.lambda + self.big_lambda);
        let half = 0.5 * (self.big_lambda - self.lambda);
        match m {
            Multiplier::Constant { value } => *value,
            Multiplier::Radial { amplitude, frequency } => {
                mid + amplitude * half * (frequency * self.a.norm(y)).cos()
            }
            Multiplier::Directional { axis } => {
                let e: f64 = y.iter().map(|v| v * v).sum();
                if e == 0.0 {
                    mid
                } else {
                    self.lambda + (self.big_lambda - self.lambda) * y[*axis] * y[*axis] / e
                }
            }
            Multiplier::Custom(f) => f(y),
        }
    }

    /// `clamp((m(y) + m(−y))/2, λ, Λ)`.
    pub fn multiplier(&self, y: &[f64]) -> f64 {
        let m = match &self.mode {
            KernelMode::Reference => return 1.0,
            KernelMode::Bounded(m) => m,
            KernelMode::Truncated { multiplier, .. } => multiplier,
        };
        let v = match m {
            Multiplier::Custom(_) => {
                let neg: Vec<f64> = y.iter().map(|v| -v).collect();
                0.5 * (self.raw_multiplier(m, y) + self.raw_multiplier(m, &neg))
            }
            _ => self.raw_multiplier(m, y),
        };
        v.clamp(self.lambda, self.big_lambda)
    }

    /// Measure of `Θ_{2ρ} ∖ Θ_ρ`.
    fn truncation_shell(&self, radius: f64) -> f64 {
        radius.powf(self.a.c()) * (2f64.powf(self.a.c()) - 1.0) * crate::geometry::theta_unit_volume(&self.a)
    }

    /// `K(y) ‖y‖^{c+s}`, finite everywhere including `y → 0` and `y → ∞`.
    pub fn normalized(&self, y: &[f64]) -> f64 {
        let q = self.a.q_max();
        match &self.mode {
            KernelMode::Reference => q,
            KernelMode::Bounded(_) => self.multiplier(y) * q,
            KernelMode::Truncated { radius, c1, .. } => {
                let nrm = self.a.norm(y);
                if nrm < *radius {
                    self.multiplier(y) * q
                } else if nrm < 2.0 * radius {
                    c1 / self.truncation_shell(*radius) * nrm.powf(self.a.c() + self.a.s())
                } else {
                    0.0
                }
            }
        }
    }

    /// `K(y)`; domain error at the origin.
    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        let k0 = eval_k0(&self.a, y)?;
        Ok(self.normalized(y) * k0)
    }
}

/// Result of [`bathtub_infimum`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BathtubResult {
    pub value: f64,
    pub delta: f64,
    pub cells_per_axis: usize,
    /// Row-major mask of selected cells; the last selected cell may be partial.
    pub mask: Vec<bool>,
    /// Cells whose closure contains the origin are never candidates.
    pub singular_cell_excluded: bool,
}

/// `inf { ∫_𝓑 K_0 : 𝓑 ⊂ B_2, |𝓑| = δ }` by the bathtub principle on a uniform grid of `[−2, 2]^n`.
pub fn bathtub_infimum(a: &Anisotropy, delta: f64, cells_per_axis: usize) -> Result<BathtubResult> {
    let inv = -(a.c() + a.s()) / 2.0;
    bathtub_infimum_with(a.n(), delta, cells_per_axis, |y| a.norm_sq(y).powf(inv))
}

/// Bathtub infimum for an arbitrary nonnegative cell function, e.g. a constant.
pub fn bathtub_infimum_with<F>(n: usize, delta: f64, cells_per_axis: usize, kernel: F) -> Result<BathtubResult>
where
    F: Fn(&[f64]) -> f64,
{
    let ball2 = crate::geometry::unit_ball_volume(n) * 2f64.powi(n as i32);
    if !(delta > 0.0 && delta < ball2) {
        return Err(Error::Range(format!("delta must lie in (0, |B_2|) = (0, {ball2}), got {delta}")));
    }
    let m = cells_per_axis.max(1);
    let h = 4.0 / m as f64;
    let cell_vol = h.powi(n as i32);
    if cell_vol > delta / 16.0 {
        return Err(Error::Resolution(format!(
            "cell volume {cell_vol} cannot resolve measure {delta}; use more cells per axis"
        )));
    }
    let total = m.pow(n as u32);
    let sub = 8usize;
    let mut cells: Vec<(f64, f64, usize)> = Vec::new();
    let mut idx = vec![0usize; n];
    let mut center = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut sidx = vec![0usize; n];
    let mut excluded = false;
    for flat in 0..total {
        let mut r = flat;
        for k in (0..n).rev() {
            idx[k] = r % m;
            r /= m;
        }
        for k in 0..n {
            center[k] = -2.0 + (idx[k] as f64 + 0.5) * h;
        }
        if center.iter().all(|c| c.abs() <= 0.5 * h + 1e-15) {
            excluded = true;
            continue;
        }
        let near: f64 = center.iter().map(|c| (c.abs() - 0.5 * h).max(0.0).powi(2)).sum();
        let far: f64 = center.iter().map(|c| (c.abs() + 0.5 * h).powi(2)).sum();
        let frac = if far <= 4.0 {
            1.0
        } else if near >= 4.0 {
            0.0
        } else {
            let count = sub.pow(n as u32);
            let mut inside = 0usize;
            for s in 0..count {
                let mut t = s;
                for k in (0..n).rev() {
                    sidx[k] = t % sub;
                    t /= sub;
                }
                for k in 0..n {
                    p[k] = center[k] + ((sidx[k] as f64 + 0.5) / sub as f64 - 0.5) * h;
                }
                if p.iter().map(|v| v * v).sum::<f64>() < 4.0 {
                    inside += 1;
                }
            }
            inside as f64 / count as f64
        };
        if frac > 0.0 {
            cells.push((kernel(&center), frac * cell_vol, flat));
        }
    }
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
    let mut mask = vec![false; total];
    let mut acc = 0.0;
    let mut value = 0.0;
    for &(k, vol, flat) in &cells {
        if acc >= delta {
            break;
        }
        let take = vol.min(delta - acc);
        value += k * take;
        acc += take;
        mask[flat] = true;
    }
    if acc < delta * (1.0 - 1e-12) {
        return Err(Error::Resolution(format!("grid resolves only measure {acc} < {delta}")));
    }
    Ok(BathtubResult { value, delta, cells_per_axis: m, mask, singular_cell_excluded: excluded })
}

/// Radius `ρ` with `|T_{β,ρ} θ| = τ` (Euclidean).
pub fn polar_radius_for_euclid(a: &Anisotropy, theta: &[f64], tau: f64) -> f64 {
    let g = |rho: f64| -> f64 {
        theta.iter().zip(a.b()).map(|(t, b)| rho.powf(4.0 / b) * t * t).sum::<f64>() - tau * tau
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `∫_{ℝⁿ∖B_{τ0}} |K(y) − K(y − h)| / |h| dy` in generalized polar coordinates.
///
/// Radially the integral runs from the Euclidean sphere `|y| = τ0` to `R = 64 τ0`
/// in geometric GK15 panels and from `R` to infinity through `t = ρ^{−s}`.
/// `level` refines both the radial and the angular rule.
pub fn translation_modulus(k: &KernelSpec, h: &[f64], tau0: f64, level: u32) -> Result<f64> {
    let a = k.anisotropy();
    let n = a.n();
    if h.len() != n {
        return Err(Error::Range("shift has the wrong dimension".into()));
    }
    let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(hn < tau0 / 2.0) || !(tau0 > 0.0) {
        return Err(Error::Precondition(format!("need 0 < |h| < τ0/2, got |h| = {hn}, τ0 = {tau0}")));
    }
    if hn == 0.0 {
        return Err(Error::Precondition("the modulus is a difference quotient; h must be nonzero".into()));
    }
    let per = 1usize << level;
    let ang = AngularRule::full_sphere(n, 2 * per)?;
    let c = a.c();
    let s = a.s();
    let mut total = 0.0;
    let mut ym = vec![0.0; n];
    for j in 0..ang.len() {
        let th = ang.node(j);
        let angular = ang.weights[j] * a.polar_jacobian(th) * a.norm(th).powf(-(c + s));
        let rho0 = polar_radius_for_euclid(a, th, tau0);
        let rho1 = polar_radius_for_euclid(a, th, 64.0 * tau0);
        // |K(y) − K(y−h)| ρ^{c+s}, with ‖θ‖^{−(c+s)} pulled out.
        let mut integrand = |rho: f64| -> f64 {
            let y: Vec<f64> = th.iter().zip(a.b()).map(|(t, b)| rho.powf(2.0 / b) * t).collect();
            for i in 0..n {
                ym[i] = y[i] - h[i];
            }
            let ky = k.normalized(&y);
            let ratio = a.norm(th) * rho / a.norm(&ym);
            let kyh = k.normalized(&ym) * ratio.powf(c + s);
            (ky - kyh).abs()
        };
        let panels = 12 * per;
        let (l0, l1) = (rho0.ln(), rho1.ln());
        let dl = (l1 - l0) / panels as f64;
        for p in 0..panels {
            for (t, w, _) in gk15_nodes(l0 + dl * p as f64, l0 + dl * (p + 1) as f64) {
                let rho = t.exp();
                total += angular * w * rho.powf(-s) * integrand(rho);
            }
        }
        let far = QuadratureScheme { r_in: rho0, r_out: rho1, shells: 1, angular_panels: 1, far_panels: 12 * per };
        for (t, w, _) in far.far_nodes(s) {
            if t <= 0.0 {
                continue;
            }
            let rho = t.powf(-1.0 / s);
            total += angular * w / s * integrand(rho);
        }
    }
    Ok(total / hn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn iso(s: f64) -> Anisotropy {
        Anisotropy::isotropic(2, s).unwrap()
    }

    #[test]
    fn k0_examples() {
        assert_relative_eq!(eval_k0(&iso(1.0), &[3.0, 4.0]).unwrap(), 0.008, max_relative = 1e-14);
        assert!(matches!(eval_k0(&iso(1.0), &[0.0, 0.0]), Err(Error::Domain(_))));
        let a = Anisotropy::new(vec![1.0, 4.0], 0.5).unwrap();
        let y = [0.3, -0.7];
        let r = 2.5;
        let ty = crate::geometry::ScalingMap::TBeta { r }.apply(&a, &y);
        assert_relative_eq!(
            eval_k0(&a, &ty).unwrap(),
            r.powf(-(a.c() + a.s())) * eval_k0(&a, &y).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn degenerate_bounds_reduce_to_reference() {
        let a = Anisotropy::new(vec![1.0, 2.0], 0.7).unwrap();
        let k = KernelSpec::bounded(a.clone(), 1.0, 1.0, Multiplier::Radial { amplitude: 1.0, frequency: 3.0 })
            .unwrap();
        let r = KernelSpec::reference(a);
        for y in [[0.1, 0.2], [-3.0, 1.0], [0.0, 1e-3]] {
            assert_eq!(k.eval(&y).unwrap(), r.eval(&y).unwrap());
        }
    }

    #[test]
    fn custom_multiplier_is_symmetrized_and_clamped() {
        let a = iso(1.0);
        let f: MultiplierFn = Arc::new(|y: &[f64]| 1.0 + 5.0 * y[0]);
        let k = KernelSpec::bounded(a, 0.5, 2.0, Multiplier::Custom(f)).unwrap();
        assert_eq!(k.multiplier(&[0.3, 0.1]), 1.0);
        assert_eq!(k.multiplier(&[0.3, 0.1]), k.multiplier(&[-0.3, -0.1]));
    }

    #[test]
    fn config_round_trip_and_strictness() {
        let js = r#"{"b":[1,4],"s":0.5,"lambda":0.5,"Lambda":2,"mode":"bounded",
                     "multiplier":{"type":"directional","axis":1}}"#;
        let c: KernelConfig = serde_json::from_str(js).unwrap();
        let k = KernelSpec::from_config(&c).unwrap();
        assert_eq!(k.multiplier(&[0.0, 1.0]), 2.0);
        assert!(serde_json::from_str::<KernelConfig>(r#"{"b":[2],"s":1,"extra":0}"#).is_err());
        let c: KernelConfig = serde_json::from_str(r#"{"b":[2],"s":1,"lambda":2,"Lambda":1}"#).unwrap();
        assert!(KernelSpec::from_config(&c).is_err());
    }

    #[test]
    fn truncated_kernel_has_compact_support() {
        let a = iso(1.0);
        let k = KernelSpec::new(
            a,
            1.0,
            1.0,
            KernelMode::Truncated { multiplier: Multiplier::Constant { value: 1.0 }, radius: 1.0, c1: 0.3 },
        )
        .unwrap();
        assert_eq!(k.eval(&[0.5, 0.0]).unwrap(), 1.0 / 0.125);
        assert_relative_eq!(k.eval(&[1.5, 0.0]).unwrap(), 0.3 / (3.0 * PI), max_relative = 1e-14);
        assert_eq!(k.eval(&[2.5, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn bathtub_constant_kernel() {
        let r = bathtub_infimum_with(2, 0.7, 200, |_| 3.0).unwrap();
        assert_relative_eq!(r.value, 2.1, max_relative = 1e-12);
    }

    #[test]
    fn bathtub_matches_outer_annulus() {
        // Minimizer is the annulus r0 < |y| < 2 with π(4 − r0²) = δ; value 2π(1/r0 − 1/2).
        let a = iso(1.0);
        let delta = 0.1;
        let r0 = (4.0 - delta / PI).sqrt();
        let exact = 2.0 * PI * (1.0 / r0 - 0.5);
        let coarse = bathtub_infimum(&a, delta, 400).unwrap();
        let fine = bathtub_infimum(&a, delta, 800).unwrap();
        assert!(((coarse.value - fine.value) / fine.value).abs() < 0.01);
        assert!(((fine.value - exact) / exact).abs() < 0.01, "{} vs {exact}", fine.value);
        assert!(fine.singular_cell_excluded);
    }

    #[test]
    fn bathtub_errors() {
        let a = iso(1.0);
        assert!(matches!(bathtub_infimum(&a, 0.1, 4), Err(Error::Resolution(_))));
        assert!(matches!(bathtub_infimum(&a, 20.0, 100), Err(Error::Range(_))));
    }

    #[test]
    fn bathtub_is_monotone() {
        let a = Anisotropy::new(vec![1.0, 2.0], 0.5).unwrap();
        let mut last = 0.0;
        for d in [0.05, 0.2, 1.0, 3.0, 8.0] {
            let v = bathtub_infimum(&a, d, 120).unwrap().value;
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn shell_scaling_law() {
        // ∫_{E_{r,1}∖E_{r/2,1}} K_0 = r^{−s} ∫_{E_{1,1}∖E_{1/2,1}} K_0, by direct polar quadrature.
        let a = Anisotropy::new(vec![1.0, 3.0], 0.6).unwrap();
        let ang = AngularRule::half_sphere(2, 4).unwrap();
        let shell = |r: f64| -> f64 {
            let mut tot = 0.0;
            for j in 0..ang.len() {
                let th = ang.node(j);
                for (rho, w, _) in gk15_nodes(r / 2.0, r) {
                    let y: Vec<f64> = th.iter().zip(a.b()).map(|(t, b)| rho.powf(2.0 / b) * t).collect();
                    tot += ang.weights[j] * w * rho.powf(a.c() - 1.0) * a.polar_jacobian(th) * eval_k0(&a, &y).unwrap();
                }
            }
            tot
        };
        let base = shell(1.0);
        for r in [0.3, 4.0] {
            assert_relative_eq!(shell(r), r.powf(-a.s()) * base, max_relative = 1e-2);
        }
    }

    #[test]
    fn translation_modulus_is_rotation_invariant_for_isotropic() {
        let k = KernelSpec::reference(iso(1.0));
        let v1 = translation_modulus(&k, &[0.1, 0.0], 1.0, 1).unwrap();
        let v2 = translation_modulus(&k, &[0.1 / 2f64.sqrt(), 0.1 / 2f64.sqrt()], 1.0, 1).unwrap();
        assert!(v1.is_finite() && v1 > 0.0);
        assert_relative_eq!(v1, v2, max_relative = 1e-3);
        assert!(matches!(translation_modulus(&k, &[0.6, 0.0], 1.0, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn translation_modulus_one_dimensional_closed_form() {
        // n = 1, b = 2: K = q|y|^{−1−s}; for y > τ0 the difference has one sign.
        let a = Anisotropy::isotropic(1, 1.0).unwrap();
        let k = KernelSpec::reference(a.clone());
        let (h, tau) = (0.1f64, 1.0f64);
        let q = a.q_max();
        let s = a.s();
        // ∫_{|y|>τ} |K(y) − K(y−h)| dy with K(y)=q|y|^{−1−s}: right side ∫_τ^∞ (K(y−h) − K(y)),
        // left side ∫_{−∞}^{−τ} (K(y) − K(y−h)).
        let right = q / s * ((tau - h).powf(-s) - tau.powf(-s));
        let left = q / s * (tau.powf(-s) - (tau + h).powf(-s));
        let exact = (right + left) / h;
        let v = translation_modulus(&k, &[h], tau, 1).unwrap();
        assert_relative_eq!(v, exact, max_relative = 1e-8);
    }
}
