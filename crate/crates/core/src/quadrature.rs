//! Gauss–Kronrod panels, angular rules on the sphere and the shell scheme
//! used in generalized polar coordinates `y = T_{β,ρ} θ`, `|θ| = 1`.
//!
//! In these coordinates `dy = ρ^{c−1} J(θ) dρ dσ(θ)` with `J(θ) = Σ (2/b_i) θ_i²`,
//! and the shell `{ρ_b ≤ ρ < ρ_a}` is `E_{ρ_a,1} ∖ E_{ρ_b,1}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Anisotropy;

/// Kronrod abscissae on `[−1, 1]`, positive half, decreasing.
pub const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

/// Kronrod weights matching [`XGK`].
pub const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for `XGK[1], XGK[3], XGK[5], XGK[7]`.
pub const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// The 15 nodes of a GK15 panel on `[a, b]` as `(x, kronrod weight, gauss weight)`.
pub fn gk15_nodes(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, 0.0); 15];
    for k in 0..7 {
        let wg = if k % 2 == 1 { WG[k / 2] * h } else { 0.0 };
        out[2 * k] = (c - h * XGK[k], WGK[k] * h, wg);
        out[2 * k + 1] = (c + h * XGK[k], WGK[k] * h, wg);
    }
    out[14] = (c, WGK[7] * h, WG[3] * h);
    out
}

/// GK15 on `[a, b]`: returns `(kronrod, gauss)`.
pub fn gk15<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> (f64, f64) {
    let mut k = 0.0;
    let mut g = 0.0;
    for (x, wk, wg) in gk15_nodes(a, b) {
        let v = f(x);
        k += wk * v;
        g += wg * v;
    }
    (k, g)
}

/// Composite GK15 over `panels` equal panels of `[a, b]`.
pub fn gk15_composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> (f64, f64) {
    let h = (b - a) / panels as f64;
    let mut k = 0.0;
    let mut g = 0.0;
    for p in 0..panels {
        let (pk, pg) = gk15(&mut f, a + h * p as f64, a + h * (p + 1) as f64);
        k += pk;
        g += pg;
    }
    (k, g)
}

/// Quadrature on the Euclidean unit sphere `S^{n−1}`.
///
/// `coarse` holds the embedded Gauss-only weights; `|Σ w f − Σ coarse f|` is the
/// angular error estimate. Half-sphere rules carry doubled weights and integrate
/// even functions exactly like the full rule.
#[derive(Clone, Debug)]
pub struct AngularRule {
    n: usize,
    nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub coarse: Vec<f64>,
}

impl AngularRule {
    /// Rule on a closed half sphere with doubled weights, for even integrands.
    pub fn half_sphere(n: usize, panels: usize) -> Result<Self> {
        Self::build(n, panels, true)
    }

    pub fn full_sphere(n: usize, panels: usize) -> Result<Self> {
        Self::build(n, panels, false)
    }

    fn build(n: usize, panels: usize, half: bool) -> Result<Self> {
        let panels = panels.max(1);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut coarse = Vec::new();
        let factor = if half { 2.0 } else { 1.0 };
        match n {
            1 => {
                nodes.push(1.0);
                weights.push(factor);
                coarse.push(factor);
                if !half {
                    nodes.push(-1.0);
                    weights.push(1.0);
                    coarse.push(1.0);
                }
            }
            2 => {
                let quadrants = if half { 2 } else { 4 };
                for q in 0..quadrants {
                    let a0 = q as f64 * PI / 2.0;
                    let h = PI / 2.0 / panels as f64;
                    for p in 0..panels {
                        for (phi, wk, wg) in gk15_nodes(a0 + h * p as f64, a0 + h * (p + 1) as f64) {
                            nodes.extend_from_slice(&[phi.cos(), phi.sin()]);
                            weights.push(factor * wk);
                            coarse.push(factor * wg);
                        }
                    }
                }
            }
            3 => {
                let polar_halves = if half { 1 } else { 2 };
                let hp = PI / 2.0 / panels as f64;
                for ph in 0..polar_halves {
                    for pp in 0..panels {
                        let a = ph as f64 * PI / 2.0 + hp * pp as f64;
                        for (phi, wk1, wg1) in gk15_nodes(a, a + hp) {
                            let (sp, cp) = phi.sin_cos();
                            for q in 0..4 {
                                let h = PI / 2.0 / panels as f64;
                                for p in 0..panels {
                                    let b0 = q as f64 * PI / 2.0 + h * p as f64;
                                    for (psi, wk2, wg2) in gk15_nodes(b0, b0 + h) {
                                        nodes.extend_from_slice(&[sp * psi.cos(), sp * psi.sin(), cp]);
                                        weights.push(factor * wk1 * wk2 * sp);
                                        coarse.push(factor * wg1 * wg2 * sp);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                return Err(Error::Domain(format!(
                    "angular quadrature is implemented for n ≤ 3, got n = {n}"
                )))
            }
        }
        Ok(Self { n, nodes, weights, coarse })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.n..(k + 1) * self.n]
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Radii and node counts of the shell quadrature.
///
/// The middle zone `[r_in, r_out]` is cut into geometric shells, each integrated
/// with GK15 in `log ρ`. Beyond `r_out` the substitution `t = ρ^{−s}` maps the tail
/// to `(0, r_out^{−s}]`, covered by geometrically graded GK15 panels. Below `r_in`
/// the operator uses a local model instead of nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureScheme {
    pub r_in: f64,
    pub r_out: f64,
    pub shells: usize,
    pub angular_panels: usize,
    pub far_panels: usize,
}

impl QuadratureScheme {
    /// Default scheme at refinement `level` (0, 1, 2, ...).
    ///
    /// `r_in = min_i 0.05^{b_i/2}` keeps `E_{r_in,1}` inside a Euclidean ball of
    /// radius 0.05; `r_out = max_i 4^{b_i/2}` puts `E_{r_out,1}` outside `B_4`.
    pub fn default_for(a: &Anisotropy, level: u32) -> Self {
        let r_in = a.b().iter().map(|b| 0.05f64.powf(b / 2.0)).fold(f64::INFINITY, f64::min);
        let r_out = a.b().iter().map(|b| 4f64.powf(b / 2.0)).fold(0.0, f64::max);
        Self::with_radii(r_in, r_out, level)
    }

    pub fn with_radii(r_in: f64, r_out: f64, level: u32) -> Self {
        let octaves = (r_out / r_in).log2().ceil().max(1.0) as usize;
        let per = 1usize << level;
        Self { r_in, r_out, shells: octaves * per, angular_panels: per, far_panels: 6 * per }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_in > 0.0 && self.r_out > self.r_in && self.r_out.is_finite()) {
            return Err(Error::Range(format!(
                "need 0 < r_in < r_out, got r_in = {}, r_out = {}",
                self.r_in, self.r_out
            )));
        }
        if self.shells == 0 || self.angular_panels == 0 || self.far_panels == 0 {
            return Err(Error::Range("node counts must be positive".into()));
        }
        Ok(())
    }

    /// Shell boundaries `r_in = ρ_0 < ρ_1 < ... < ρ_K = r_out`.
    pub fn shell_radii(&self) -> Vec<f64> {
        let ratio = (self.r_out / self.r_in).ln() / self.shells as f64;
        (0..=self.shells)
            .map(|k| if k == self.shells { self.r_out } else { self.r_in * (ratio * k as f64).exp() })
            .collect()
    }

    /// Radial nodes of the middle zone: `(ρ, w, w_gauss, shell)` where `w` already
    /// carries the `dρ = ρ d(log ρ)` factor.
    pub fn middle_nodes(&self) -> Vec<(f64, f64, f64, usize)> {
        let radii = self.shell_radii();
        let mut out = Vec::with_capacity(15 * self.shells);
        for k in 0..self.shells {
            for (t, wk, wg) in gk15_nodes(radii[k].ln(), radii[k + 1].ln()) {
                let rho = t.exp();
                out.push((rho, wk * rho, wg * rho, k));
            }
        }
        out
    }

    /// Nodes in `t = ρ^{−s}` on `(0, r_out^{−s}]`: `(t, w, w_gauss)`.
    ///
    /// Panels halve towards `t = 0`; the last panel `(0, t_min]` is included.
    pub fn far_nodes(&self, s: f64) -> Vec<(f64, f64, f64)> {
        let t_max = self.r_out.powf(-s);
        let mut edges = vec![t_max];
        for _ in 0..self.far_panels {
            let last = *edges.last().unwrap();
            edges.push(last / 4.0);
        }
        edges.push(0.0);
        let mut out = Vec::with_capacity(15 * edges.len());
        for w in edges.windows(2) {
            for node in gk15_nodes(w[1], w[0]) {
                out.push(node);
            }
        }
        out
    }
}

/// `∫_{ρ0}^∞ f(ρ) dρ` for integrands decaying like `ρ^{−1−ε}`: GK15 panels in
/// `log ρ` over `[ρ0, 2^{12} ρ0]`, then `t = ρ^{−ε}` panels down to `t = 0`.
/// Returns `(kronrod, gauss)`.
pub fn semi_infinite<F: FnMut(f64) -> f64>(mut f: F, rho0: f64, eps: f64, panels: usize) -> (f64, f64) {
    let rho1 = rho0 * 4096.0;
    let (mut k, mut g) = (0.0, 0.0);
    let (l0, l1) = (rho0.ln(), rho1.ln());
    let dl = (l1 - l0) / (2 * panels) as f64;
    for p in 0..2 * panels {
        for (t, wk, wg) in gk15_nodes(l0 + dl * p as f64, l0 + dl * (p + 1) as f64) {
            let rho = t.exp();
            let v = f(rho) * rho;
            k += wk * v;
            g += wg * v;
        }
    }
    let mut hi = rho1.powf(-eps);
    for p in 0..=panels {
        let lo = if p == panels { 0.0 } else { hi / 4.0 };
        for (t, wk, wg) in gk15_nodes(lo, hi) {
            let rho = t.powf(-1.0 / eps);
            if !rho.is_finite() {
                continue;
            }
            // dρ = ρ^{1+ε} dt / ε
            let v = f(rho) * rho.powf(1.0 + eps) / eps;
            k += wk * v;
            g += wg * v;
        }
        hi = lo;
    }
    (k, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk15_exactness_degrees() {
        for d in 0..=22u32 {
            let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
            let (k, g) = gk15(|x| x.powi(d as i32), -1.0, 1.0);
            assert!((k - exact).abs() < 1e-14, "kronrod degree {d}: {k} vs {exact}");
            if d <= 13 {
                assert!((g - exact).abs() < 1e-14, "gauss degree {d}: {g} vs {exact}");
            }
        }
        let (_, g) = gk15(|x| x.powi(14), -1.0, 1.0);
        assert!((g - 2.0 / 15.0).abs() > 1e-6);
    }

    #[test]
    fn gk15_weights_sum() {
        let (k, g) = gk15(|_| 1.0, 0.0, 3.0);
        assert_relative_eq!(k, 3.0, max_relative = 1e-15);
        assert_relative_eq!(g, 3.0, max_relative = 1e-15);
    }

    #[test]
    fn sphere_areas() {
        for n in 1..=3 {
            let area = n as f64 * crate::geometry::unit_ball_volume(n);
            for half in [true, false] {
                let r = AngularRule::build(n, 2, half).unwrap();
                let s: f64 = r.weights.iter().sum();
                assert_relative_eq!(s, area, max_relative = 1e-13);
                for k in 0..r.len() {
                    let th = r.node(k);
                    assert_relative_eq!(th.iter().map(|v| v * v).sum::<f64>(), 1.0, max_relative = 1e-14);
                }
            }
        }
        assert!(AngularRule::half_sphere(4, 1).is_err());
    }

    #[test]
    fn second_moments_on_sphere() {
        // ∫ θ_1² dσ = |S^{n−1}|/n = |B_1|
        for n in 2..=3 {
            let r = AngularRule::half_sphere(n, 1).unwrap();
            let m: f64 = (0..r.len()).map(|k| r.weights[k] * r.node(k)[0].powi(2)).sum();
            assert_relative_eq!(m, crate::geometry::unit_ball_volume(n), max_relative = 1e-13);
        }
    }

    #[test]
    fn shell_weights_sum_to_shell_measures() {
        let a = Anisotropy::new(vec![1.0, 4.0], 0.5).unwrap();
        let q = QuadratureScheme::default_for(&a, 0);
        q.validate().unwrap();
        let ang = AngularRule::half_sphere(2, q.angular_panels).unwrap();
        let jac: f64 = (0..ang.len()).map(|k| ang.weights[k] * a.polar_jacobian(ang.node(k))).sum();
        let radii = q.shell_radii();
        let mut per_shell = vec![0.0; q.shells];
        for (rho, w, _, k) in q.middle_nodes() {
            per_shell[k] += w * rho.powf(a.c() - 1.0) * jac;
        }
        let ball = crate::geometry::unit_ball_volume(2);
        for k in 0..q.shells {
            let exact = (radii[k + 1].powf(a.c()) - radii[k].powf(a.c())) * ball;
            assert_relative_eq!(per_shell[k], exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn semi_infinite_power_law() {
        let (k, _) = semi_infinite(|r| r.powf(-1.3), 0.5, 0.3, 8);
        assert_relative_eq!(k, 0.5f64.powf(-0.3) / 0.3, max_relative = 1e-10);
    }

    #[test]
    fn far_nodes_cover_tail() {
        let q = QuadratureScheme::with_radii(0.01, 4.0, 0);
        let s = 0.7;
        // ∫_{r_out}^∞ ρ^{−s−1} dρ = r_out^{−s}/s = (1/s) ∫ dt
        let tot: f64 = q.far_nodes(s).iter().map(|(_, w, _)| w / s).sum();
        assert_relative_eq!(tot, 4f64.powf(-s) / s, max_relative = 1e-13);
    }
}
