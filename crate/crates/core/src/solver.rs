//! Monotone discretization of `L u = 0` on a grid box with exterior data, and a
//! Jacobi-type fixed-point solver.
//!
//! Quadrature pairs `x ± y` read grid values by multilinear interpolation inside the
//! box and the exterior data outside it. Inside `E_{r_in,1}` the second difference is
//! replaced by `yᵀHy` with `H` from axis second differences, plus wide
//! diagonal differences when the near-field moments have cross terms.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Anisotropy;
use crate::grid::{Exterior, ExteriorFn, GridFunction};
use crate::kernels::KernelSpec;
use crate::operator::OperatorPlan;
use crate::quadrature::QuadratureScheme;

/// Uniform grid on a closed box; boundary nodes carry the exterior data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl GridSpec {
    pub fn cube(n: usize, half: f64, nodes: usize) -> Self {
        Self { lo: vec![-half; n], hi: vec![half; n], nodes: vec![nodes; n] }
    }

    /// Box `Π [−R^{2/b_i}, R^{2/b_i}]` with `nodes` points per axis.
    pub fn aniso_box(a: &Anisotropy, r: f64, nodes: usize) -> Self {
        let hw: Vec<f64> = a.b().iter().map(|b| r.powf(2.0 / b)).collect();
        Self { lo: hw.iter().map(|w| -w).collect(), hi: hw, nodes: vec![nodes; a.n()] }
    }

    /// Same box, `2(m − 1) + 1` nodes per axis.
    pub fn refined(&self) -> Self {
        Self { lo: self.lo.clone(), hi: self.hi.clone(), nodes: self.nodes.iter().map(|m| 2 * m - 1).collect() }
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.n()).map(|k| (self.hi[k] - self.lo[k]) / (self.nodes[k] - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.hi.len() != n || self.nodes.len() != n {
            return Err(Error::Range("lo, hi and nodes must have the same positive length".into()));
        }
        for k in 0..n {
            if !(self.hi[k] > self.lo[k]) || self.nodes[k] < 3 {
                return Err(Error::Range(format!("axis {k}: need lo < hi and at least 3 nodes")));
            }
        }
        Ok(())
    }

    fn template(&self) -> Result<GridFunction> {
        GridFunction::from_fn(&self.lo, &self.hi, &self.nodes, |_| 0.0, Exterior::Constant(0.0))
    }
}

/// Scheme whose inner ellipsoid reaches at least one grid spacing along every axis and
/// whose middle zone covers the box.
pub fn scheme_for_grid(a: &Anisotropy, grid: &GridSpec, level: u32) -> QuadratureScheme {
    let h = grid.spacing();
    let r_in = a.b().iter().zip(&h).map(|(b, h)| h.powf(b / 2.0)).fold(0.0, f64::max);
    let extent = (0..grid.n()).map(|k| grid.hi[k] - grid.lo[k]).fold(0.0, f64::max);
    let r_out = a.b().iter().map(|b| (2.0 * extent).powf(b / 2.0)).fold(0.0, f64::max).max(4.0 * r_in);
    QuadratureScheme::with_radii(r_in, r_out, level)
}

/// `L_h` restricted to the interior nodes: `diag_i u_i − Σ_j w_ij u_j − rhs_i`.
#[derive(Clone)]
pub struct DiscreteOperator {
    template: GridFunction,
    exterior: ExteriorFn,
    /// Flat grid index of each unknown.
    pub unknowns: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    pub diag: Vec<f64>,
    /// Weight landing on known values (box boundary and exterior).
    pub known_weight: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Smallest and largest known value read by the stencils.
    pub known_range: (f64, f64),
    /// Values on the box boundary nodes.
    boundary: Vec<f64>,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("dims", &self.template.dims())
            .field("unknowns", &self.unknowns.len())
            .field("nonzeros", &self.vals.len())
            .finish()
    }
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    pub fn nonzeros(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k] as usize, self.vals[k]))
    }

    /// `diag_i − Σ_j w_ij − known_i`, zero up to rounding.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let off: f64 = self.row(i).map(|(_, w)| w).sum();
                (self.diag[i] - off - self.known_weight[i]).abs() / self.diag[i]
            })
            .fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.vals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let s: f64 = self.row(i).map(|(j, w)| w * u[j]).sum();
            *o = self.diag[i] * u[i] - s - self.rhs[i];
        });
    }

    /// Grid function with solved interior values and the boundary data.
    pub fn to_grid(&self, u: &[f64]) -> GridFunction {
        let mut g = self.template.clone();
        g.values_mut().copy_from_slice(&self.boundary);
        for (i, &flat) in self.unknowns.iter().enumerate() {
            g.values_mut()[flat] = u[i];
        }
        g.set_exterior(Exterior::Function(self.exterior.clone()));
        g
    }

    pub fn grid(&self) -> &GridFunction {
        &self.template
    }
}

/// Multiplies the unit near-field stencil: `(offset in nodes, coefficient of 1/(h h))`.
fn near_stencil(n: usize, nw: &[f64], h: &[f64]) -> Result<Vec<(Vec<i64>, f64)>> {
    let mut diag: Vec<f64> = (0..n).map(|i| nw[i * n + i]).collect();
    let mut out = Vec::new();
    for i in 0..n {
        for k in i + 1..n {
            let c = nw[i * n + k] + nw[k * n + i];
            if c.abs() <= 1e-13 * (diag[i] + diag[k]) {
                continue;
            }
            // c H_ik = |c|/(2 h_i h_k) D_± − |c| h_i/(2h_k) H_ii − |c| h_k/(2h_i) H_kk
            diag[i] -= c.abs() * h[i] / (2.0 * h[k]);
            diag[k] -= c.abs() * h[k] / (2.0 * h[i]);
            let mut off = vec![0i64; n];
            off[i] = 1;
            off[k] = if c > 0.0 { 1 } else { -1 };
            out.push((off, c.abs() / (2.0 * h[i] * h[k])));
        }
    }
    for i in 0..n {
        if diag[i] < 0.0 {
            return Err(Error::Resolution(format!(
                "near-field cross moments exceed the axis moments on axis {i}; refine the grid anisotropically"
            )));
        }
        let mut off = vec![0i64; n];
        off[i] = 1;
        out.push((off, diag[i] / (h[i] * h[i])));
    }
    Ok(out)
}

/// Assembles `L_h` for `L u = 0` in the open box with `u = g` outside and on the box boundary.
pub fn assemble(grid: &GridSpec, g: ExteriorFn, k: &KernelSpec, q: &QuadratureScheme) -> Result<DiscreteOperator> {
    grid.validate()?;
    let a = k.anisotropy();
    let n = a.n();
    if grid.n() != n {
        return Err(Error::Range(format!("grid dimension {} differs from kernel dimension {n}", grid.n())));
    }
    let h = grid.spacing();
    for i in 0..n {
        let reach = q.r_in.powf(2.0 / a.b()[i]);
        if reach < 0.5 * h[i] {
            return Err(Error::Resolution(format!(
                "axis {i}: E_(r_in,1) reaches {reach:.3e} but the spacing is {:.3e}",
                h[i]
            )));
        }
    }
    let plan = OperatorPlan::new(k.clone(), q.clone())?;
    let (ys, ws) = plan.nodes();
    let stencil = near_stencil(n, &plan.near_hessian_weights(), &h)?;
    let template = grid.template()?;
    let dims = template.dims().to_vec();
    let mut index = vec![u32::MAX; template.len()];
    let mut unknowns = Vec::new();
    let mut boundary = vec![0.0; template.len()];
    let mut idx = vec![0usize; n];
    for flat in 0..template.len() {
        template.multi_index(flat, &mut idx);
        if (0..n).all(|k| idx[k] > 0 && idx[k] + 1 < dims[k]) {
            index[flat] = unknowns.len() as u32;
            unknowns.push(flat);
        } else {
            boundary[flat] = g(&template.node(flat));
        }
    }
    if unknowns.is_empty() {
        return Err(Error::Range("the grid has no interior nodes".into()));
    }
    struct Row {
        entries: Vec<(u32, f64)>,
        diag: f64,
        known: f64,
        rhs: f64,
        range: (f64, f64),
    }
    let rows: Vec<Row> = unknowns
        .par_iter()
        .map_init(
            || (vec![0.0f64; unknowns.len()], Vec::<u32>::new()),
            |(acc, touched), &flat| {
                let x = template.node(flat);
                let mut me = vec![0usize; n];
                template.multi_index(flat, &mut me);
                let (mut diag, mut known, mut rhs) = (0.0, 0.0, 0.0);
                let mut range = (f64::INFINITY, f64::NEG_INFINITY);
                let widen = |r: &mut (f64, f64), v: f64| {
                    r.0 = r.0.min(v);
                    r.1 = r.1.max(v);
                };
                let mut add = |j: usize, w: f64, known: &mut f64, rhs: &mut f64, range: &mut (f64, f64)| {
                    let c = index[j];
                    if c == u32::MAX {
                        *known += w;
                        *rhs += w * boundary[j];
                        widen(range, boundary[j]);
                    } else {
                        if acc[c as usize] == 0.0 {
                            touched.push(c);
                        }
                        acc[c as usize] += w;
                    }
                };
                let mut p = vec![0.0; n];
                for (kq, &w) in ws.iter().enumerate() {
                    let y = &ys[kq * n..(kq + 1) * n];
                    for sign in [1.0, -1.0] {
                        for i in 0..n {
                            p[i] = x[i] + sign * y[i];
                        }
                        diag += w;
                        if template.in_box(&p) {
                            template.interp_visit(&p, |j, t| add(j, w * t, &mut known, &mut rhs, &mut range));
                        } else {
                            let v = g(&p);
                            known += w;
                            rhs += w * v;
                            widen(&mut range, v);
                        }
                    }
                }
                let mut nb = vec![0usize; n];
                for (off, c) in &stencil {
                    for sign in [1i64, -1] {
                        for i in 0..n {
                            nb[i] = (me[i] as i64 + sign * off[i]) as usize;
                        }
                        diag += c;
                        add(template.flat_index(&nb), *c, &mut known, &mut rhs, &mut range);
                    }
                }
                // a pair may land on the node itself
                let own = index[flat] as usize;
                let self_w = acc[own];
                let mut entries: Vec<(u32, f64)> = Vec::with_capacity(touched.len());
                touched.sort_unstable();
                for &c in touched.iter() {
                    if c as usize != own {
                        entries.push((c, acc[c as usize]));
                    }
                    acc[c as usize] = 0.0;
                }
                touched.clear();
                Row { entries, diag: diag - self_w, known, rhs, range }
            },
        )
        .collect();
    let mut row_ptr = Vec::with_capacity(rows.len() + 1);
    row_ptr.push(0);
    let nnz: usize = rows.iter().map(|r| r.entries.len()).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let (mut diag, mut known_weight, mut rhs) = (Vec::new(), Vec::new(), Vec::new());
    let mut known_range = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        known_range = (known_range.0.min(r.range.0), known_range.1.max(r.range.1));
        for (c, w) in r.entries {
            cols.push(c);
            vals.push(w);
        }
        row_ptr.push(cols.len());
        diag.push(r.diag);
        known_weight.push(r.known);
        rhs.push(r.rhs);
    }
    Ok(DiscreteOperator {
        template,
        exterior: g,
        unknowns,
        row_ptr,
        cols,
        vals,
        diag,
        known_weight,
        rhs,
        known_range,
        boundary,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Relative to the size of the exterior data.
    pub tol: f64,
    pub max_iter: usize,
    /// Starts at this value and falls back to `1/2` when the residual grows.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, damping: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    /// `max |L_h u|` over the interior nodes.
    pub residual: f64,
    pub solution: GridFunction,
    /// Interior values, ordered like [`DiscreteOperator::unknowns`].
    pub interior: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub converged: bool,
    pub damping: f64,
}

/// Fixed-point iteration `u_i ← (1 − ω) u_i + ω (Σ_j w_ij u_j + rhs_i) / diag_i`,
/// started from the weighted exterior average `rhs_i / known_i`.
///
/// Stops when `max |L_h u| ≤ tol · D`, `D = max_i |rhs_i / known_i|` (taken as 1 when
/// the data vanish), so that data `t g` give exactly `t u`.
pub fn solve(op: &DiscreteOperator, opts: &SolveOptions) -> SolveReport {
    let init: Vec<f64> = (0..op.len()).map(|i| op.rhs[i] / op.known_weight[i]).collect();
    solve_from(op, opts, init)
}

pub fn solve_from(op: &DiscreteOperator, opts: &SolveOptions, init: Vec<f64>) -> SolveReport {
    let m = op.len();
    let mut u = init;
    let mut next = vec![0.0; m];
    let mut res = vec![0.0; m];
    let mut omega = opts.damping;
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = (0..m).map(|i| (op.rhs[i] / op.known_weight[i]).abs()).fold(0.0, f64::max);
    let target = opts.tol * if scale > 0.0 { scale } else { 1.0 };
    op.apply(&u, &mut res);
    let mut residual = max_abs(&res);
    let mut iterations = 0;
    while residual > target && iterations < opts.max_iter {
        next.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = u[i] - omega * res[i] / op.diag[i];
        });
        std::mem::swap(&mut u, &mut next);
        op.apply(&u, &mut res);
        let r = max_abs(&res);
        if r > residual * (1.0 + 1e-12) && omega > 0.5 {
            omega = 0.5;
        }
        residual = r;
        iterations += 1;
    }
    let solution = op.to_grid(&u);
    let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    SolveReport {
        iterations,
        residual,
        solution,
        interior: u,
        min,
        max,
        converged: residual <= target,
        damping: omega,
    }
}

/// Assemble and solve in one call.
pub fn solve_dirichlet(
    grid: &GridSpec,
    g: ExteriorFn,
    k: &KernelSpec,
    q: &QuadratureScheme,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    let op = assemble(grid, g, k, q)?;
    Ok(solve(&op, opts))
}

/// Whether `u1 ≥ u2 − tol` at every node (the reports come from data `g1 ≥ g2`).
pub fn comparison_check(u1: &SolveReport, u2: &SolveReport, tol: f64) -> bool {
    u1.solution.values().len() == u2.solution.values().len()
        && u1.solution.values().iter().zip(u2.solution.values()).all(|(a, b)| *a >= b - tol)
}

/// `max |u_h − u_{h/2}|` over the coarse nodes.
pub fn coarse_difference(coarse: &GridFunction, fine: &GridFunction) -> f64 {
    coarse_difference_within(coarse, fine, f64::INFINITY)
}

/// As [`coarse_difference`], restricted to nodes with `|x|_∞ ≤ radius`.
pub fn coarse_difference_within(coarse: &GridFunction, fine: &GridFunction, radius: f64) -> f64 {
    (0..coarse.len())
        .map(|i| coarse.node(i))
        .filter(|x| x.iter().all(|v| v.abs() <= radius + 1e-12))
        .map(|x| (coarse.value_at(&x) - fine.value_at(&x)).abs())
        .fold(0.0, f64::max)
}

/// Exterior data from a plain closure.
pub fn exterior<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> ExteriorFn {
    Arc::new(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Multiplier;
    use crate::sampling::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn iso(n: usize, s: f64) -> KernelSpec {
        KernelSpec::reference(Anisotropy::isotropic(n, s).unwrap())
    }

    fn op_for(k: &KernelSpec, grid: &GridSpec, g: ExteriorFn) -> DiscreteOperator {
        let q = scheme_for_grid(k.anisotropy(), grid, 0);
        assemble(grid, g, k, &q).unwrap()
    }

    #[test]
    fn constants_are_exact() {
        let k = iso(2, 1.0);
        let grid = GridSpec::cube(2, 1.0, 9);
        let op = op_for(&k, &grid, exterior(|_| 2.5));
        assert!(op.min_weight() > 0.0);
        assert!(op.row_sum_defect() < 1e-13);
        let r = solve(&op, &SolveOptions::default());
        assert!(r.iterations <= 2);
        assert!(r.solution.values().iter().all(|v| (v - 2.5).abs() <= 1e-12));
    }

    #[test]
    fn shift_by_one() {
        let k = KernelSpec::reference(Anisotropy::new(vec![1.0, 2.0], 0.5).unwrap());
        let grid = GridSpec::cube(2, 1.0, 9);
        let g = |x: &[f64]| (x[0] * 3.0).sin() + x[1];
        let r1 = solve(&op_for(&k, &grid, exterior(move |x| g(x) + 1.0)), &SolveOptions::default());
        let r2 = solve(&op_for(&k, &grid, exterior(g)), &SolveOptions::default());
        assert!(r1.converged && r2.converged);
        for (a, b) in r1.solution.values().iter().zip(r2.solution.values()) {
            assert!((a - b - 1.0).abs() < 1e-8);
        }
        assert!(comparison_check(&r1, &r2, 1e-10));
    }

    #[test]
    fn reflection_symmetry() {
        let k = iso(2, 1.2);
        let grid = GridSpec::cube(2, 1.0, 11);
        let r = solve(&op_for(&k, &grid, exterior(|x| (x[0] * x[0] + 0.3 * x[1].abs()).min(2.0))), &SolveOptions::default());
        let u = &r.solution;
        for i in 0..u.len() {
            let mut idx = vec![0; 2];
            u.multi_index(i, &mut idx);
            let j = u.flat_index(&[10 - idx[0], idx[1]]);
            let l = u.flat_index(&[idx[0], 10 - idx[1]]);
            assert!((u.values()[i] - u.values()[j]).abs() < 1e-8);
            assert!((u.values()[i] - u.values()[l]).abs() < 1e-8);
        }
    }

    #[test]
    fn uniqueness_from_two_guesses() {
        let k = iso(1, 1.0);
        let grid = GridSpec::cube(1, 1.0, 41);
        let op = op_for(&k, &grid, exterior(|x| if x[0] > 5.0 { 1.0 } else { 0.0 }));
        let a = solve_from(&op, &SolveOptions::default(), vec![0.0; op.len()]);
        let b = solve_from(&op, &SolveOptions::default(), vec![3.0; op.len()]);
        assert!(a.converged && b.converged);
        for (x, y) in a.interior.iter().zip(&b.interior) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn nearly_isotropic_weights() {
        let grid = GridSpec::cube(2, 1.0, 9);
        let eps = 1e-6;
        let k0 = iso(2, 1.0);
        let k1 = KernelSpec::reference(Anisotropy::new(vec![2.0, 2.0 + eps], 1.0).unwrap());
        let q = scheme_for_grid(k0.anisotropy(), &grid, 0);
        let g = exterior(|x| x[0]);
        let a = assemble(&grid, g.clone(), &k0, &q).unwrap();
        let b = assemble(&grid, g, &k1, &q).unwrap();
        assert_eq!(a.nonzeros(), b.nonzeros());
        let scale = a.diag.iter().cloned().fold(0.0, f64::max);
        for i in 0..a.len() {
            assert!((a.diag[i] - b.diag[i]).abs() <= 100.0 * eps * scale);
            for ((ca, wa), (cb, wb)) in a.row(i).zip(b.row(i)) {
                assert_eq!(ca, cb);
                assert!((wa - wb).abs() <= 100.0 * eps * scale);
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let k = iso(1, 1.0);
        let grid = GridSpec::cube(1, 1.0, 11);
        let q = QuadratureScheme::with_radii(1e-3, 4.0, 0);
        assert!(matches!(assemble(&grid, exterior(|_| 0.0), &k, &q), Err(Error::Resolution(_))));
    }

    #[test]
    fn self_convergence_1d() {
        let k = iso(1, 1.0);
        let g = exterior(|x| (-(x[0] - 0.5).powi(2)).exp());
        let mut sols = Vec::new();
        for m in [21, 41, 81] {
            let grid = GridSpec::cube(1, 1.0, m);
            let r = solve(&op_for(&k, &grid, g.clone()), &SolveOptions::default());
            assert!(r.converged);
            sols.push(r.solution);
        }
        // the boundary layer d^{σ/2} limits the rate on the whole box
        let d1 = coarse_difference_within(&sols[0], &sols[1], 0.5);
        let d2 = coarse_difference_within(&sols[1], &sols[2], 0.5);
        assert!(d1 / d2 >= 1.5, "{d1} {d2}");
    }

    #[test]
    fn bounded_multiplier_monotone() {
        let a = Anisotropy::new(vec![1.0, 2.0], 0.7).unwrap();
        let k = KernelSpec::bounded(a, 0.5, 2.0, Multiplier::Radial { amplitude: 0.5, frequency: 3.0 }).unwrap();
        let grid = GridSpec::cube(2, 1.0, 9);
        let op = op_for(&k, &grid, exterior(|x| x[0].abs()));
        assert!(op.min_weight() > 0.0);
        assert!(op.row_sum_defect() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn maximum_principle_and_comparison(seed in 0u64..1000) {
            let mut r = rng(seed);
            let k = iso(1, r.gen_range(0.3..1.7));
            let (c1, c2, f) = (r.gen_range(-1.0..1.0), r.gen_range(0.0..1.0), r.gen_range(1.0..6.0));
            let g2 = move |x: &[f64]| c1 * (f * x[0]).sin();
            let g1 = move |x: &[f64]| g2(x) + c2 * (1.0 + (f * x[0]).cos());
            let grid = GridSpec::cube(1, 1.0, 33);
            let u1 = solve(&op_for(&k, &grid, exterior(g1)), &SolveOptions::default());
            let u2 = solve(&op_for(&k, &grid, exterior(g2)), &SolveOptions::default());
            prop_assert!(comparison_check(&u1, &u2, 1e-10));
            prop_assert!(u2.min >= -c1.abs() - 1e-10 && u2.max <= c1.abs() + 1e-10);
            let op = op_for(&k, &grid, exterior(g1));
            let u = solve(&op, &SolveOptions::default());
            prop_assert!(u.min >= op.known_range.0 - 1e-10 && u.max <= op.known_range.1 + 1e-10);
        }
    }

    #[test]
    fn report_fields() {
        let k = iso(1, 1.0);
        let op = op_for(&k, &GridSpec::cube(1, 1.0, 21), exterior(|x| x[0].clamp(0.0, 1.0)));
        let r = solve(&op, &SolveOptions { max_iter: 3, ..Default::default() });
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        let r = solve(&op, &SolveOptions::default());
        assert!(r.converged && r.residual <= 1e-8);
        assert!(r.min >= 0.0 && r.max <= 1.0);
        assert_relative_eq!(r.solution.value_at(&[5.0]), 1.0);
    }
}
