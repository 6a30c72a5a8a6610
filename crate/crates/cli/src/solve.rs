use anisofrac::grid::{ExteriorFn, GridFunction};
use anisofrac::kernels::KernelSpec;
use anisofrac::quadrature::QuadratureScheme;
use anisofrac::solver::{assemble, scheme_for_grid, solve, DiscreteOperator, GridSpec, SolveOptions, SolveReport};
use anisofrac::{Error, Result};
use serde_json::json;

use crate::config::{DataConfig, RunConfig};
use crate::{Job, Outcome};

/// Everything a Dirichlet solve needs, validated.
pub struct Problem {
    pub grid: GridSpec,
    pub g: ExteriorFn,
    pub data: DataConfig,
    pub kernel: KernelSpec,
    pub scheme: QuadratureScheme,
    pub options: SolveOptions,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let s = cfg.solve_section()?;
        let grid = cfg.grid()?;
        if !(s.options.tol > 0.0) || s.options.max_iter == 0 || !(s.options.damping > 0.0 && s.options.damping <= 1.0) {
            return Err(Error::Range("solver options need tol > 0, max_iter > 0, damping in (0, 1]".into()));
        }
        let scheme = cfg
            .quadrature
            .scheme
            .clone()
            .unwrap_or_else(|| scheme_for_grid(&cfg.anisotropy, &grid, cfg.quadrature.level));
        Ok(Self {
            g: s.g.exterior(cfg.n(), cfg.seed)?,
            data: s.g,
            grid,
            kernel: cfg.kernel()?,
            scheme,
            options: s.options,
        })
    }

    pub fn run(&self) -> Result<(DiscreteOperator, SolveReport)> {
        let op = assemble(&self.grid, self.g.clone(), &self.kernel, &self.scheme)?;
        let rep = solve(&op, &self.options);
        Ok((op, rep))
    }
}

/// Values along each axis through the middle node.
fn slices(u: &GridFunction) -> Vec<Vec<Vec<f64>>> {
    let n = u.n();
    let mid: Vec<usize> = u.dims().iter().map(|d| d / 2).collect();
    (0..n)
        .map(|k| {
            (0..u.dims()[k])
                .map(|i| {
                    let mut idx = mid.clone();
                    idx[k] = i;
                    let flat = u.flat_index(&idx);
                    let mut r = u.node(flat);
                    r.push(u.values()[flat]);
                    r
                })
                .collect()
        })
        .collect()
}

pub fn prepare(cfg: &RunConfig) -> Result<Job> {
    let p = Problem::from_config(cfg)?;
    Ok(Box::new(move |out| {
        let (op, rep) = p.run()?;
        out.grid("solution.anlg", &rep.solution)?;
        let n = rep.solution.n();
        let mut files = vec!["solution.anlg".to_string()];
        for (k, rows) in slices(&rep.solution).iter().enumerate() {
            let name = format!("slice_{k}.csv");
            out.csv(&name, &crate::output::header(n, &["u"]), rows)?;
            files.push(name);
        }
        let mut result = json!({
            "unknowns": op.len(),
            "nonzeros": op.nonzeros(),
            "scheme": p.scheme,
            "iterations": rep.iterations,
            "residual": rep.residual,
            "converged": rep.converged,
            "damping": rep.damping,
            "min": rep.min,
            "max": rep.max,
            "known_range": [op.known_range.0, op.known_range.1],
        });
        if let DataConfig::Constant { value } = p.data {
            let err = rep.solution.values().iter().fold(0.0f64, |m, v| m.max((v - value).abs()));
            result["max_abs_error_constant"] = err.into();
        }
        if !rep.converged {
            return Err(Error::NonTerminating(format!(
                "no convergence in {} iterations (residual {:e})",
                rep.iterations, rep.residual
            )));
        }
        Ok(Outcome { files, result })
    }))
}
