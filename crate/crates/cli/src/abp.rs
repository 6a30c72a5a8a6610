use anisofrac::abp::{abp_family_with_envelope, concave_envelope_with};
use anisofrac::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::header;
use crate::{Job, Outcome};

pub fn prepare(cfg: &RunConfig) -> Result<Job> {
    let c = cfg.abp.clone().ok_or_else(|| Error::Range("`abp` section missing".into()))?;
    let n = cfg.n();
    if n > 2 {
        return Err(Error::Range("the rectangle family is implemented for n ≤ 2".into()));
    }
    if !(c.f >= 0.0) {
        return Err(Error::Range("f must be nonnegative".into()));
    }
    let k = cfg.kernel()?;
    let grid = match cfg.grid {
        Some(_) => Some(cfg.grid()?),
        None => None,
    };
    let u = c.input.sample(n, grid.as_ref())?;
    Ok(Box::new(move |out| {
        let env = concave_envelope_with(&u, &c.envelope)?;
        let f = c.f;
        let fam = abp_family_with_envelope(&u, &env, &|_| f, &k, &c.options)?;
        out.json("family.json", &fam)?;
        out.grid("envelope.anlg", &env.gamma)?;
        let rows: Vec<Vec<f64>> = (0..u.len())
            .map(|i| {
                let mut r = u.node(i);
                r.extend([u.values()[i], env.gamma.values()[i], if env.contact[i] { 1.0 } else { 0.0 }]);
                r
            })
            .collect();
        out.csv("envelope.csv", &header(n, &["u", "gamma", "contact"]), &rows)?;
        Ok(Outcome {
            files: vec!["family.json".into(), "envelope.anlg".into(), "envelope.csv".into()],
            result: json!({
                "sup_u": env.sup_u,
                "contact_tol": env.contact_tol,
                "contact_nodes_in_b1": env.contact_in_b1().len(),
                "rectangles": fam.rects.len(),
                "depth": fam.depth,
                "frak_c": fam.frak_c,
                "properties": fam.properties,
                "all_properties": fam.properties.all(),
                "volume": fam.volume,
                "subsolution_margin": fam.subsolution_margin,
            }),
        })
    }))
}
