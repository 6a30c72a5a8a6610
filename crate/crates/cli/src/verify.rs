use std::fs::File;
use std::io::BufReader;

use anisofrac::grid::{Exterior, GridFunction};
use anisofrac::harness::{
    de_giorgi_iteration, gradient_holder_fit, growth_lemma_check, harnack_from_solution, holder_fit, liouville_probe,
    point_estimate_decay, DeGiorgiParams, DecayReport, Metric,
};
use anisofrac::kernels::translation_modulus;
use anisofrac::{Error, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::OutDir;
use crate::solve::Problem;
use crate::{Job, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Degiorgi,
    Growth,
    Harnack,
    Pointwise,
    Liouville,
    Holder,
    C1gamma,
}

enum Source {
    File(GridFunction, f64),
    Solve(Problem),
}

impl Source {
    fn load(&self) -> Result<(GridFunction, f64)> {
        match self {
            Source::File(g, r) => Ok((g.clone(), *r)),
            Source::Solve(p) => {
                let (_, rep) = p.run()?;
                if !rep.converged {
                    return Err(Error::NonTerminating(format!("solver stopped at residual {:e}", rep.residual)));
                }
                Ok((rep.solution, rep.residual))
            }
        }
    }
}

fn decay_csv(out: &OutDir, r: &DecayReport) -> Result<()> {
    let rows: Vec<Vec<f64>> = r.scales.iter().zip(&r.values).map(|(s, v)| vec![*s, *v]).collect();
    out.csv("decay.csv", &["scale".to_string(), "value".to_string()], &rows)
}

pub fn prepare(cfg: &RunConfig, check: Check) -> Result<Job> {
    let v = cfg.verify.clone().unwrap_or_default();
    let a = cfg.anisotropy.clone();
    let n = a.n();
    let needs_solution = check != Check::Liouville;
    let source = if !needs_solution {
        None
    } else if let Some(path) = &v.input {
        let fallback = match &cfg.solve {
            Some(s) => Some(Exterior::Function(s.g.exterior(n, cfg.seed)?)),
            None => None,
        };
        let f = File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let g = GridFunction::read_binary(BufReader::new(f), fallback)?;
        if g.n() != n {
            return Err(Error::Range(format!("input has dimension {}, anisotropy {n}", g.n())));
        }
        Some(Source::File(g, v.residual.unwrap_or(0.0)))
    } else {
        Some(Source::Solve(Problem::from_config(cfg)?))
    };
    if check == Check::Growth && v.growth.is_none() {
        return Err(Error::Range("verify growth needs `verify.growth` parameters".into()));
    }
    let liouville = if check == Check::Liouville {
        let s = cfg.solve_section()?;
        Some((s.g.exterior(n, cfg.seed)?, cfg.kernel()?))
    } else {
        None
    };
    let c1 = v.c1gamma.clone().unwrap_or_default();
    if check == Check::C1gamma {
        if !cfg.is_reference() {
            return Err(Error::Precondition("the C^{1,γ} check uses the reference kernel".into()));
        }
        if c1.levels.is_empty() || c1.shifts.iter().any(|h| !(*h > 0.0 && *h < c1.tau0 / 2.0)) {
            return Err(Error::Range("c1gamma needs levels and shifts in (0, τ0/2)".into()));
        }
    }
    let kernel = cfg.kernel()?;
    let holder = cfg.holder_params();
    let level = cfg.quadrature.level;
    Ok(Box::new(move |out| {
        let loaded = source.as_ref().map(Source::load).transpose()?;
        // the Liouville probe solves its own problems
        let (u, residual) = match &loaded {
            Some((u, r)) => (Some(u), *r),
            None => (None, 0.0),
        };
        let u = || u.expect("loaded for every check but liouville");
        let mut files = Vec::new();
        let result: Value = match check {
            Check::Degiorgi => {
                let p = v.degiorgi.clone().unwrap_or_else(|| DeGiorgiParams::at_origin(n));
                let r = de_giorgi_iteration(&a, u(), &p)?;
                decay_csv(out, &r)?;
                files.push("decay.csv".into());
                serde_json::to_value(&r)?
            }
            Check::Growth => {
                let p = v.growth.clone().expect("checked");
                serde_json::to_value(growth_lemma_check(u(), residual, &p)?)?
            }
            Check::Harnack => serde_json::to_value(harnack_from_solution(u(), residual)?)?,
            Check::Pointwise => {
                let p = v.pointwise.clone().unwrap_or_default();
                let u = u();
                let top = (0..u.len())
                    .filter(|&i| u.node(i).iter().map(|x| x * x).sum::<f64>() < 1.0)
                    .map(|i| u.values()[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                if !(top > 0.0) {
                    return Err(Error::Precondition("u has no positive values in B_1".into()));
                }
                let ts: Vec<f64> = p.fractions.iter().map(|f| f * top).collect();
                let r = point_estimate_decay(u, &ts, p.samples)?;
                decay_csv(out, &r)?;
                files.push("decay.csv".into());
                json!({ "thresholds": ts, "report": r })
            }
            Check::Liouville => {
                let p = v.liouville.clone().unwrap_or_default();
                let (g, k) = liouville.clone().expect("prepared");
                let r = liouville_probe(&k, &p.radii, g, p.nodes, level)?;
                decay_csv(out, &r)?;
                files.push("decay.csv".into());
                serde_json::to_value(&r)?
            }
            Check::Holder => {
                let metrics = v.metrics.clone().unwrap_or(vec![Metric::Aniso, Metric::Euclidean]);
                let reports: Vec<_> = metrics.iter().map(|m| holder_fit(&a, u(), *m, &holder)).collect::<Result<_>>()?;
                serde_json::to_value(&reports)?
            }
            Check::C1gamma => {
                let dir = 1.0 / (n as f64).sqrt();
                let mut rows = Vec::new();
                for &hn in &c1.shifts {
                    let h = vec![hn * dir; n];
                    let mut row = vec![hn];
                    for &l in &c1.levels {
                        row.push(translation_modulus(&kernel, &h, c1.tau0, l)?);
                    }
                    rows.push(row);
                }
                let mut head = vec!["shift".to_string()];
                head.extend(c1.levels.iter().map(|l| format!("level_{l}")));
                out.csv("modulus.csv", &head, &rows)?;
                files.push("modulus.csv".into());
                let change = rows
                    .iter()
                    .map(|r| {
                        let k = r.len();
                        if k >= 3 {
                            (r[k - 1] - r[k - 2]).abs() / r[k - 1]
                        } else {
                            0.0
                        }
                    })
                    .fold(0.0, f64::max);
                let grad = gradient_holder_fit(&a, u(), &holder)?;
                json!({ "modulus": rows, "max_relative_change": change, "gradient_holder": grad })
            }
        };
        Ok(Outcome { files, result: json!({ "check": check, "report": result }) })
    }))
}
