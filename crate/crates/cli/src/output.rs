use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anisofrac::grid::GridFunction;
use anisofrac::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const SUMMARY_FORMAT: &str = "anisofrac.summary";
pub const CONFIG_FORMAT: &str = "anisofrac.config";
pub const FORMAT_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
}

fn io(e: impl std::fmt::Display, path: &Path) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| io(e, &root))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p).map_err(|e| io(e, &p))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w).map_err(|e| io(e, &p))?;
        Ok(())
    }

    /// Writes the resolved configuration under a format tag.
    pub fn config<T: Serialize>(&self, config: &T) -> Result<()> {
        self.json("config.json", &json!({ "format": CONFIG_FORMAT, "version": FORMAT_VERSION, "config": config }))
    }

    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| io(e, &p))?;
        w.write_record(header).map_err(|e| io(e, &p))?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(|e| io(e, &p))?;
        }
        w.flush().map_err(|e| io(e, &p))?;
        Ok(())
    }

    pub fn grid(&self, name: &str, g: &GridFunction) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p).map_err(|e| io(e, &p))?);
        g.write_binary(&mut w)?;
        w.flush().map_err(|e| io(e, &p))?;
        Ok(())
    }

    /// `summary.json`, also returned for printing.
    pub fn summary(&self, command: &str, seed: u64, files: &[&str], result: Value) -> Result<Value> {
        let v = json!({
            "format": SUMMARY_FORMAT,
            "version": FORMAT_VERSION,
            "command": command,
            "seed": seed,
            "files": files,
            "result": result,
        });
        self.json("summary.json", &v)?;
        Ok(v)
    }
}

/// Column names `x0, …, x{n−1}` followed by `rest`.
pub fn header(n: usize, rest: &[&str]) -> Vec<String> {
    (0..n).map(|k| format!("x{k}")).chain(rest.iter().map(|s| s.to_string())).collect()
}
