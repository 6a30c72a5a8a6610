use std::path::Path;

use anisofrac::operator::OperatorPlan;
use anisofrac::quadrature::QuadratureScheme;
use anisofrac::sampling::{ball_points, split_seed};
use anisofrac::{Error, Result};
use serde_json::json;

use crate::config::{stream, PointsConfig, RunConfig};
use crate::output::header;
use crate::{Job, Outcome};

fn read_points(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let p: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{} row {}: {e}", path.display(), i + 1)))?;
        pts.push(p);
    }
    check_points(&pts, n)?;
    Ok(pts)
}

fn check_points(pts: &[Vec<f64>], n: usize) -> Result<()> {
    if pts.is_empty() {
        return Err(Error::Range("no evaluation points".into()));
    }
    if let Some(p) = pts.iter().find(|p| p.len() != n || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Range(format!("point {p:?} is not a finite vector of length {n}")));
    }
    Ok(())
}

pub fn prepare(cfg: &RunConfig) -> Result<Job> {
    let e = cfg.eval.clone().ok_or_else(|| Error::Range("`eval` section missing".into()))?;
    let n = cfg.n();
    let k = cfg.kernel()?;
    let f = e.function.test_function(n)?;
    let pts = match &e.points {
        PointsConfig::List { points } => {
            check_points(points, n)?;
            points.clone()
        }
        PointsConfig::Csv { path } => read_points(path, n)?,
        PointsConfig::Ball { count, radius } => {
            if *count == 0 || !(*radius > 0.0) {
                return Err(Error::Range("ball points need count > 0 and radius > 0".into()));
            }
            ball_points(n, *radius, *count, split_seed(cfg.seed, stream::POINTS))
        }
    };
    let scheme = cfg.quadrature.scheme.clone().unwrap_or_else(|| QuadratureScheme::default_for(&cfg.anisotropy, cfg.quadrature.level));
    let plan = OperatorPlan::new(k, scheme)?;
    Ok(Box::new(move |out| {
        let triples = plan.evaluate_many(f.as_ref(), &pts)?;
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .zip(&triples)
            .map(|(x, t)| {
                let mut r = x.clone();
                r.extend([t.l.value, t.l.error, t.plus.value, t.plus.error, t.minus.value, t.minus.error]);
                r
            })
            .collect();
        out.csv("eval.csv", &header(n, &["l", "l_error", "plus", "plus_error", "minus", "minus_error"]), &rows)?;
        let max = |g: &dyn Fn(&anisofrac::operator::Triple) -> f64| triples.iter().map(g).fold(0.0, f64::max);
        Ok(Outcome {
            files: vec!["eval.csv".into()],
            result: json!({
                "points": pts.len(),
                "quadrature_nodes": plan.node_count(),
                "max_abs_l": max(&|t| t.l.value.abs()),
                "max_l_error": max(&|t| t.l.error),
                "max_pucci_error": max(&|t| t.plus.error.max(t.minus.error)),
            }),
        })
    }))
}
