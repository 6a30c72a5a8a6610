//! Functions sampled on uniform axis-aligned grids, with an exterior rule.
//!
//! Binary layout, little-endian throughout:
//!
//! | field     | type        |
//! |-----------|-------------|
//! | magic     | `b"ANLG"`   |
//! | version   | `u16` = 1   |
//! | n         | `u16`       |
//! | dims      | `n × u64`   |
//! | lo        | `n × f64`   |
//! | spacing   | `n × f64`   |
//! | exterior  | `f64`, NaN when the exterior is a function |
//! | values    | `Π dims × f64`, last axis fastest |

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ANLG";
pub const FORMAT_VERSION: u16 = 1;

pub type ExteriorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Values outside the grid box.
#[derive(Clone)]
pub enum Exterior {
    Constant(f64),
    Function(ExteriorFn),
}

impl Exterior {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Exterior::Constant(c) => *c,
            Exterior::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Exterior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exterior::Constant(c) => write!(f, "Constant({c})"),
            Exterior::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Node values on `lo + i·h`, `0 ≤ i_k < dims_k`, last axis fastest.
#[derive(Clone, Debug)]
pub struct GridFunction {
    dims: Vec<usize>,
    lo: Vec<f64>,
    h: Vec<f64>,
    values: Vec<f64>,
    exterior: Exterior,
}

impl GridFunction {
    pub fn new(dims: Vec<usize>, lo: Vec<f64>, h: Vec<f64>, values: Vec<f64>, exterior: Exterior) -> Result<Self> {
        let n = dims.len();
        if n == 0 || lo.len() != n || h.len() != n {
            return Err(Error::Format("dims, lo and spacing must share one nonzero length".into()));
        }
        if dims.iter().any(|&d| d < 2) || h.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Format("need at least two nodes and positive spacing per axis".into()));
        }
        let total: usize = dims.iter().product();
        if values.len() != total {
            return Err(Error::Format(format!("expected {total} values, got {}", values.len())));
        }
        Ok(Self { dims, lo, h, values, exterior })
    }

    /// Samples `f` at every node of the grid on `[lo, hi]` with `nodes` per axis.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(lo: &[f64], hi: &[f64], nodes: &[usize], f: F, exterior: Exterior) -> Result<Self> {
        let h: Vec<f64> = (0..lo.len()).map(|k| (hi[k] - lo[k]) / (nodes[k] as f64 - 1.0)).collect();
        let mut g = Self::new(nodes.to_vec(), lo.to_vec(), h, vec![0.0; nodes.iter().product()], exterior)?;
        let mut x = vec![0.0; lo.len()];
        for i in 0..g.len() {
            g.node_into(i, &mut x);
            g.values[i] = f(&x);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }
    pub fn hi(&self) -> Vec<f64> {
        (0..self.n()).map(|k| self.lo[k] + (self.dims[k] - 1) as f64 * self.h[k]).collect()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }
    pub fn set_exterior(&mut self, e: Exterior) {
        self.exterior = e;
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.n()).rev() {
            out[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut f = flat;
        for k in (0..self.n()).rev() {
            let i = f % self.dims[k];
            f /= self.dims[k];
            out[k] = self.lo[k] + i as f64 * self.h[k];
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        self.node_into(flat, &mut x);
        x
    }

    /// Whether `x` lies in the closed grid box.
    pub fn in_box(&self, x: &[f64]) -> bool {
        (0..self.n()).all(|k| {
            let t = (x[k] - self.lo[k]) / self.h[k];
            t >= -1e-12 && t <= (self.dims[k] - 1) as f64 + 1e-12
        })
    }

    /// Multilinear interpolation weights of `x` (inside the closed box), nonnegative, summing to one.
    /// Calls `visit(flat, weight)` for each corner with positive weight.
    pub fn interp_visit<F: FnMut(usize, f64)>(&self, x: &[f64], mut visit: F) {
        let n = self.n();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for k in 0..n {
            let t = ((x[k] - self.lo[k]) / self.h[k]).clamp(0.0, (self.dims[k] - 1) as f64);
            let i = (t.floor() as usize).min(self.dims[k] - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.dims[k] + base[k] + bit;
            }
            if w > 0.0 {
                visit(flat, w);
            }
        }
    }

    /// Interpolated value inside the box, exterior rule outside.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        if !self.in_box(x) {
            return self.exterior.eval(x);
        }
        let mut v = 0.0;
        self.interp_visit(x, |i, w| v += w * self.values[i]);
        v
    }

    /// Centered-difference Hessian at node `flat` (row-major `n × n`), using the
    /// nearest interior node on the box boundary.
    pub fn hessian_at(&self, flat: usize) -> Vec<f64> {
        let n = self.n();
        let mut idx = vec![0usize; n];
        self.multi_index(flat, &mut idx);
        for k in 0..n {
            idx[k] = idx[k].clamp(1, self.dims[k] - 2);
        }
        let at = |idx: &[usize], shifts: &[(usize, isize)]| -> f64 {
            let mut j = idx.to_vec();
            for &(k, d) in shifts {
                j[k] = (j[k] as isize + d) as usize;
            }
            self.values[self.flat_index(&j)]
        };
        let mut hs = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    (at(&idx, &[(i, 1)]) + at(&idx, &[(i, -1)]) - 2.0 * at(&idx, &[])) / (self.h[i] * self.h[i])
                } else {
                    (at(&idx, &[(i, 1), (j, 1)]) - at(&idx, &[(i, 1), (j, -1)]) - at(&idx, &[(i, -1), (j, 1)])
                        + at(&idx, &[(i, -1), (j, -1)]))
                        / (4.0 * self.h[i] * self.h[j])
                };
                hs[i * n + j] = v;
                hs[j * n + i] = v;
            }
        }
        hs
    }

    /// `max_nodes ‖D²u‖` in the Frobenius norm of the centered-difference Hessian.
    pub fn max_hessian_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.hessian_at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u16::<LittleEndian>(self.n() as u16)?;
        for &d in &self.dims {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in self.lo.iter().chain(&self.h) {
            w.write_f64::<LittleEndian>(v)?;
        }
        let ext = match self.exterior {
            Exterior::Constant(c) => c,
            Exterior::Function(_) => f64::NAN,
        };
        w.write_f64::<LittleEndian>(ext)?;
        for &v in &self.values {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    /// Reads the binary format. A stored NaN exterior is replaced by `fallback`,
    /// and is a format error when no fallback is given.
    pub fn read_binary<R: Read>(mut r: R, fallback: Option<Exterior>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes, expected ANLG".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let n = r.read_u16::<LittleEndian>()? as usize;
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(r.read_u64::<LittleEndian>()? as usize);
        }
        let mut lo = vec![0.0; n];
        let mut h = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut lo)?;
        r.read_f64_into::<LittleEndian>(&mut h)?;
        let ext = r.read_f64::<LittleEndian>()?;
        let exterior = if ext.is_nan() {
            fallback.ok_or_else(|| Error::Format("exterior is a function; supply a fallback rule".into()))?
        } else {
            Exterior::Constant(ext)
        };
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let total = total.ok_or_else(|| Error::Format("grid size overflows".into()))?;
        let mut values = vec![0.0; total];
        r.read_f64_into::<LittleEndian>(&mut values)?;
        Self::new(dims, lo, h, values, exterior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridFunction {
        GridFunction::from_fn(&[-1.0, -2.0], &[1.0, 2.0], &[5, 9], |x| x[0] + 2.0 * x[1], Exterior::Constant(-3.0))
            .unwrap()
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let g = sample();
        assert!((g.value_at(&[0.3, -0.7]) - (0.3 - 1.4)).abs() < 1e-14);
        assert_eq!(g.value_at(&[1.5, 0.0]), -3.0);
        let mut s = 0.0;
        g.interp_visit(&[0.11, 0.77], |_, w| {
            assert!(w > 0.0);
            s += w
        });
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_round_trip() {
        let g = sample();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"ANLG");
        assert_eq!(buf.len(), 4 + 2 + 2 + 16 + 32 + 8 + 45 * 8);
        let back = GridFunction::read_binary(&buf[..], None).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.spacing(), g.spacing());
        assert_eq!(back.value_at(&[9.0, 9.0]), -3.0);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(GridFunction::read_binary(&bad[..], None), Err(Error::Format(_))));
    }

    #[test]
    fn function_exterior_needs_fallback() {
        let mut g = sample();
        g.set_exterior(Exterior::Function(Arc::new(|x: &[f64]| x[0])));
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert!(GridFunction::read_binary(&buf[..], None).is_err());
        assert!(GridFunction::read_binary(&buf[..], Some(Exterior::Constant(0.0))).is_ok());
    }

    #[test]
    fn hessian_of_quadratic() {
        let g = GridFunction::from_fn(&[-1.0, -1.0], &[1.0, 1.0], &[11, 11], |x| x[0] * x[0] - 3.0 * x[0] * x[1], Exterior::Constant(0.0))
            .unwrap();
        let h = g.hessian_at(60);
        for (a, b) in h.iter().zip([2.0, -3.0, -3.0, 0.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
