use anisofrac::barriers::{b34_points, calibrate_psi, eta_sup, find_kappa_tau, find_p, silvestre_check, SilvestreGrid};
use anisofrac::harness::ball_measure;
use anisofrac::sampling::split_seed;
use anisofrac::{Error, Result};
use serde_json::{json, Value};

use crate::config::{stream, RunConfig};
use crate::{Job, Outcome};

pub fn prepare_barrier(cfg: &RunConfig) -> Result<Job> {
    let b = cfg.barrier.clone().unwrap_or_default();
    let a = cfg.anisotropy.clone();
    if b.points == 0 || b.levels.is_empty() {
        return Err(Error::Range("barrier needs points > 0 and at least one level".into()));
    }
    if b.s_factors.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Error::Range("s_factors must lie in (0, 1)".into()));
    }
    let sweep: Vec<_> = b.s_factors.iter().map(|f| a.with_s(f * 4.0 / a.b_max())).collect::<Result<_>>()?;
    let k = match &b.find_p {
        Some(fp) if !(fp.big_r > 1.0) => return Err(Error::Range("find_p.big_r must exceed 1".into())),
        Some(_) => Some(cfg.kernel()?),
        None => None,
    };
    let xs = b34_points(a.n(), b.points, split_seed(cfg.seed, stream::POINTS));
    Ok(Box::new(move |out| {
        let mut rows = Vec::new();
        let mut levels = Vec::new();
        for &level in &b.levels {
            let e = eta_sup(&a, &xs, level)?;
            rows.push(vec![a.s(), level as f64, e.sup_abs, e.sup_upper, e.max_error]);
            levels.push(e);
        }
        let change = match levels.as_slice() {
            [.., p, q] => Some((q.sup_abs - p.sup_abs).abs() / q.sup_abs),
            _ => None,
        };
        let finest = *b.levels.iter().max().expect("nonempty");
        let mut sweep_out = Vec::new();
        for s_a in &sweep {
            let e = eta_sup(s_a, &xs, finest)?;
            rows.push(vec![s_a.s(), finest as f64, e.sup_abs, e.sup_upper, e.max_error]);
            sweep_out.push(json!({ "s": s_a.s(), "sup_abs": e.sup_abs, "sup_upper": e.sup_upper }));
        }
        out.csv("barrier.csv", &["s", "level", "sup_abs", "sup_upper", "max_error"].map(String::from), &rows)?;
        let mut result = json!({
            "eta": levels,
            "relative_change": change,
            "s_sweep": sweep_out,
        });
        if let (Some(k), Some(fp)) = (&k, &b.find_p) {
            let cert = find_p(k, fp.big_r, fp.level)?;
            let psi = match calibrate_psi(&a, cert.p, b.psi_cells) {
                Ok(c) => serde_json::to_value(c)?,
                Err(e) => json!({ "error": e.to_string() }),
            };
            result["power_barrier"] = serde_json::to_value(&cert)?;
            result["psi"] = psi;
        }
        Ok(Outcome { files: vec!["barrier.csv".into()], result })
    }))
}

pub fn prepare_silvestre(cfg: &RunConfig) -> Result<Job> {
    let c = cfg.silvestre.clone().unwrap_or_default();
    let a = cfg.anisotropy.clone();
    let delta = c.delta.unwrap_or(ball_measure(a.n()) / 2.0);
    if !(delta > 0.0) {
        return Err(Error::Range("delta must be positive".into()));
    }
    let grid = c.grid.unwrap_or_else(|| SilvestreGrid::for_dim(a.n()));
    if grid.bathtub_cells == 0 || grid.x_points == 0 {
        return Err(Error::Range("silvestre grid sizes must be positive".into()));
    }
    Ok(Box::new(move |_| {
        let cert = find_kappa_tau(&a, delta, &grid)?;
        let mut result = json!({ "delta": delta, "grid": grid, "certificate": cert });
        if c.doubled {
            let d = silvestre_check(&a, delta, cert.check.kappa, cert.check.tau, &grid.doubled())?;
            let change = (d.margin - cert.check.margin).abs() / cert.check.margin.abs();
            result["doubled"] = serde_json::to_value(&d)?;
            result["margin_change"] = Value::from(change);
        }
        Ok(Outcome { files: vec![], result })
    }))
}
