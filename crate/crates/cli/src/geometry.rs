use anisofrac::geometry::{frak_c, inclusion_check, Region};
use anisofrac::sampling::{split_seed, Halton};
use anisofrac::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{stream, RunConfig};
use crate::{Job, Outcome};

/// Quasi-Monte Carlo volume over the bounding box of `r`.
fn sampled_volume(a: &anisofrac::Anisotropy, r: &Region, samples: usize, seed: u64) -> f64 {
    let n = a.n();
    let hw = r.half_widths(a);
    let c = r.center().to_vec();
    let mut h = Halton::new(n, seed);
    let mut u = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut hits = 0usize;
    for _ in 0..samples {
        h.fill(&mut u);
        for k in 0..n {
            p[k] = c[k] + (2.0 * u[k] - 1.0) * hw[k];
        }
        if r.contains(a, &p) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64 * hw.iter().map(|w| 2.0 * w).product::<f64>()
}

pub fn prepare(cfg: &RunConfig) -> Result<Job> {
    let g = cfg.geometry.clone().unwrap_or_default();
    let a = cfg.anisotropy.clone();
    let n = a.n();
    if g.samples == 0 {
        return Err(Error::Range("samples must be positive".into()));
    }
    for spec in &g.inclusions {
        if spec.a.center().len() != n || spec.b.center().len() != n {
            return Err(Error::Range(format!("inclusion `{}` has the wrong dimension", spec.name)));
        }
    }
    if g.volumes.iter().any(|r| r.center().len() != n) {
        return Err(Error::Range("volume region has the wrong dimension".into()));
    }
    let seed = cfg.seed;
    Ok(Box::new(move |_| {
        let certs: Vec<Value> = g
            .inclusions
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let c = inclusion_check(&a, &s.a, &s.b, g.samples, split_seed(seed, stream::GEOMETRY + i as u64));
                json!({ "name": s.name, "certificate": c })
            })
            .collect();
        let volumes: Vec<Value> = g
            .volumes
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let exact = r.volume(&a);
                let est = sampled_volume(&a, r, g.samples, split_seed(seed, stream::GEOMETRY + 1000 + i as u64));
                json!({ "region": r, "closed_form": exact, "sampled": est, "relative_difference": (est - exact).abs() / exact })
            })
            .collect();
        let mut result = json!({ "inclusions": certs, "volumes": volumes });
        if g.frak_c {
            result["frak_c"] = serde_json::to_value(frak_c(&a))?;
        }
        Ok(Outcome { files: vec![], result })
    }))
}
