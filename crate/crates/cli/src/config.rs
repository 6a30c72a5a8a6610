use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anisofrac::abp::{AbpOptions, EnvelopeOptions};
use anisofrac::barriers::SilvestreGrid;
use anisofrac::geometry::Region;
use anisofrac::grid::{Exterior, ExteriorFn, GridFunction};
use anisofrac::harness::{dipole, random_exterior, DeGiorgiParams, GrowthParams, HolderParams, Metric};
use anisofrac::kernels::{KernelConfig, KernelSpec, ModeName};
use anisofrac::operator::{Affine, Constant, Eta, GridInterp, PolyBump, TestFunction};
use anisofrac::quadrature::QuadratureScheme;
use anisofrac::sampling::{split_seed, DEFAULT_SEED};
use anisofrac::solver::{GridSpec, SolveOptions};
use anisofrac::{Anisotropy, Error, Result};
use serde::{Deserialize, Serialize};

/// Seed streams; every random choice of a run derives from `split_seed(seed, stream)`.
pub mod stream {
    pub const POINTS: u64 = 1;
    pub const DATA: u64 = 2;
    pub const HOLDER: u64 = 3;
    pub const GEOMETRY: u64 = 4;
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub anisotropy: Anisotropy,
    /// Defaults to the reference kernel of `anisotropy`; `b` and `s` must agree with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub eval: Option<EvalConfig>,
    #[serde(default)]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub silvestre: Option<SilvestreConfig>,
    #[serde(default)]
    pub abp: Option<AbpConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub level: u32,
    /// Explicit scheme; otherwise the default (or grid-adapted) scheme at `level`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<QuadratureScheme>,
}

/// A function given in closed form or read from a grid file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionConfig {
    PolyBump { center: Vec<f64>, radius: f64, amplitude: f64, power: u32 },
    Eta,
    Constant { value: f64 },
    Affine { offset: f64, grad: Vec<f64> },
    /// `height` at the origin node, `floor` elsewhere; grid sampling only.
    Spike { height: f64, floor: f64 },
    /// `height − Σ coef_i x_i²`; grid sampling only.
    Paraboloid { height: f64, coef: Vec<f64> },
    /// Binary grid file; `exterior` replaces a stored function exterior.
    Grid {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exterior: Option<f64>,
    },
}

impl FunctionConfig {
    fn check_dim(&self, n: usize) -> Result<()> {
        let bad = match self {
            FunctionConfig::PolyBump { center, .. } => center.len() != n,
            FunctionConfig::Affine { grad, .. } => grad.len() != n,
            FunctionConfig::Paraboloid { coef, .. } => coef.len() != n,
            _ => false,
        };
        if bad {
            return Err(Error::Range(format!("function dimension differs from n = {n}")));
        }
        Ok(())
    }

    fn read_grid(path: &Path, exterior: Option<f64>) -> Result<GridFunction> {
        let f = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        GridFunction::read_binary(BufReader::new(f), exterior.map(Exterior::Constant))
    }

    pub fn test_function(&self, n: usize) -> Result<Arc<dyn TestFunction>> {
        self.check_dim(n)?;
        Ok(match self {
            FunctionConfig::PolyBump { center, radius, amplitude, power } => Arc::new(PolyBump {
                center: center.clone(),
                radius: *radius,
                amplitude: *amplitude,
                power: *power,
            }),
            FunctionConfig::Eta => Arc::new(Eta { n }),
            FunctionConfig::Constant { value } => Arc::new(Constant { n, value: *value }),
            FunctionConfig::Affine { offset, grad } => Arc::new(Affine { offset: *offset, grad: grad.clone(), clamp: None }),
            FunctionConfig::Grid { path, exterior } => {
                let g = Self::read_grid(path, *exterior)?;
                if g.n() != n {
                    return Err(Error::Range(format!("grid file has dimension {}, expected {n}", g.n())));
                }
                Arc::new(GridInterp::new(g, exterior.unwrap_or(0.0).abs()))
            }
            FunctionConfig::Spike { .. } | FunctionConfig::Paraboloid { .. } => {
                return Err(Error::Precondition("spike and paraboloid are only sampled on grids".into()))
            }
        })
    }

    /// Node values on `grid` (or the file's own grid), exterior constant `floor` or 0.
    pub fn sample(&self, n: usize, grid: Option<&GridSpec>) -> Result<GridFunction> {
        self.check_dim(n)?;
        if let FunctionConfig::Grid { path, exterior } = self {
            let g = Self::read_grid(path, *exterior)?;
            if g.n() != n {
                return Err(Error::Range(format!("grid file has dimension {}, expected {n}", g.n())));
            }
            return Ok(g);
        }
        let grid = grid.ok_or_else(|| Error::Range("sampling a function needs a `grid` section".into()))?;
        let (exterior, f): (f64, Box<dyn Fn(&[f64]) -> f64>) = match self {
            FunctionConfig::Spike { height, floor } => {
                let h = grid.spacing();
                let (height, floor) = (*height, *floor);
                (floor, Box::new(move |x| if x.iter().zip(&h).all(|(v, h)| v.abs() < h / 2.0) { height } else { floor }))
            }
            FunctionConfig::Paraboloid { height, coef } => {
                let (height, coef) = (*height, coef.clone());
                (0.0, Box::new(move |x| height - coef.iter().zip(x).map(|(c, v)| c * v * v).sum::<f64>()))
            }
            other => {
                let tf = other.test_function(n)?;
                (0.0, Box::new(move |x| tf.value(x)))
            }
        };
        GridFunction::from_fn(&grid.lo, &grid.hi, &grid.nodes, f, Exterior::Constant(exterior))
    }
}

/// Dirichlet data `g` on the complement of the box.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Constant { value: f64 },
    /// Smooth bounded random data drawn from the run seed.
    Random {
        #[serde(default)]
        nonnegative: bool,
    },
    /// `sign(x_1)`.
    Dipole,
    PolyBump { center: Vec<f64>, radius: f64, amplitude: f64, power: u32 },
}

impl DataConfig {
    pub fn exterior(&self, n: usize, seed: u64) -> Result<ExteriorFn> {
        Ok(match self {
            DataConfig::Constant { value } => {
                let v = *value;
                Arc::new(move |_: &[f64]| v)
            }
            DataConfig::Random { nonnegative } => random_exterior(n, split_seed(seed, stream::DATA), *nonnegative),
            DataConfig::Dipole => dipole(),
            DataConfig::PolyBump { center, radius, amplitude, power } => {
                if center.len() != n {
                    return Err(Error::Range(format!("data dimension differs from n = {n}")));
                }
                let f = PolyBump { center: center.clone(), radius: *radius, amplitude: *amplitude, power: *power };
                Arc::new(move |x: &[f64]| f.value(x))
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointsConfig {
    List { points: Vec<Vec<f64>> },
    /// CSV file with one point per row and no header.
    Csv { path: PathBuf },
    /// Quasi-random points of the Euclidean ball.
    Ball { count: usize, radius: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub function: FunctionConfig,
    pub points: PointsConfig,
}

fn default_points() -> usize {
    50
}
fn default_levels() -> Vec<u32> {
    vec![1, 2]
}
fn default_s_factors() -> Vec<f64> {
    vec![0.5, 0.9, 0.99]
}
fn default_psi_cells() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    /// Points of `B_{3/4}` for the `η` sweep (the origin included).
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    /// `s = factor · 4/b_max` for the sweep.
    #[serde(default = "default_s_factors")]
    pub s_factors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub find_p: Option<FindPConfig>,
    #[serde(default = "default_psi_cells")]
    pub psi_cells: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { points: 50, levels: default_levels(), s_factors: default_s_factors(), find_p: None, psi_cells: 64 }
    }
}

fn default_big_r() -> f64 {
    2.0
}
fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindPConfig {
    #[serde(default = "default_big_r")]
    pub big_r: f64,
    #[serde(default = "one")]
    pub level: u32,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilvestreConfig {
    /// Defaults to `|B_1|/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SilvestreGrid>,
    /// Re-check the certificate on the doubled grid.
    #[serde(default = "yes")]
    pub doubled: bool,
}

impl Default for SilvestreConfig {
    fn default() -> Self {
        Self { delta: None, grid: None, doubled: true }
    }
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbpConfig {
    pub input: FunctionConfig,
    /// Constant right-hand side `f` in `ℳ⁺u ≥ −f`.
    #[serde(default = "unit")]
    pub f: f64,
    #[serde(default)]
    pub options: AbpOptions,
    #[serde(default)]
    pub envelope: EnvelopeOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub g: DataConfig,
    #[serde(default)]
    pub options: SolveOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointwiseConfig {
    /// Thresholds as fractions of `max_{B_1} u`.
    pub fractions: Vec<f64>,
    pub samples: usize,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        Self { fractions: (0..8).map(|j| 0.3 + 0.09 * j as f64).collect(), samples: 101 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleConfig {
    pub radii: Vec<f64>,
    pub nodes: usize,
}

impl Default for LiouvilleConfig {
    fn default() -> Self {
        Self { radii: vec![1.0, 2.0, 4.0, 8.0], nodes: 17 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C1GammaConfig {
    /// Lengths `|h|` of the shifts, taken along `(1, …, 1)/√n`.
    pub shifts: Vec<f64>,
    pub tau0: f64,
    pub levels: Vec<u32>,
}

impl Default for C1GammaConfig {
    fn default() -> Self {
        Self { shifts: vec![0.05, 0.1, 0.2], tau0: 1.0, levels: vec![1, 2] }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Solution file; when absent the `solve` section is run first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// `max |L_h u|` of the input solution; taken from the solver otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degiorgi: Option<DeGiorgiParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liouville: Option<LiouvilleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<HolderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<Metric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1gamma: Option<C1GammaConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub name: String,
    pub a: Region,
    pub b: Region,
}

fn default_samples() -> usize {
    100_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub inclusions: Vec<InclusionSpec>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "yes")]
    pub frak_c: bool,
    /// Regions whose closed-form volume is compared with a quasi-Monte Carlo estimate.
    #[serde(default)]
    pub volumes: Vec<Region>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { inclusions: Vec::new(), samples: default_samples(), frak_c: true, volumes: Vec::new() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn n(&self) -> usize {
        self.anisotropy.n()
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        match &self.kernel {
            None => Ok(KernelSpec::reference(self.anisotropy.clone())),
            Some(k) => {
                if k.b != self.anisotropy.b() || k.s != self.anisotropy.s() {
                    return Err(Error::Range("kernel b and s must match the anisotropy".into()));
                }
                KernelSpec::from_config(k)
            }
        }
    }

    pub fn is_reference(&self) -> bool {
        self.kernel.as_ref().map_or(true, |k| k.mode == ModeName::Reference)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = self.grid.clone().ok_or_else(|| Error::Range("this command needs a `grid` section".into()))?;
        g.validate()?;
        if g.n() != self.n() {
            return Err(Error::Range(format!("grid has dimension {}, anisotropy {}", g.n(), self.n())));
        }
        Ok(g)
    }

    pub fn solve_section(&self) -> Result<SolveConfig> {
        self.solve.clone().ok_or_else(|| Error::Range("this command needs a `solve` section".into()))
    }

    pub fn holder_params(&self) -> HolderParams {
        let v = self.verify.clone().unwrap_or_default();
        v.holder.unwrap_or(HolderParams { seed: split_seed(self.seed, stream::HOLDER), ..Default::default() })
    }
}
