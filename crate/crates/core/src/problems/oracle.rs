//! Reference fields tabulated on a tensor grid, with a CSV + JSON cache.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ORACLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub format_version: u32,
    pub problem: String,
    pub nu: f64,
    /// `[space points, time points]`
    pub grid_shape: [usize; 2],
    pub x_range: [f64; 2],
    pub t_range: [f64; 2],
    pub solver: String,
    /// Hex sha256 of the CSV file.
    pub checksum: String,
}

/// Scalar field `u(x, t)` on a uniform grid; rows are time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleGrid {
    pub meta: OracleMeta,
    pub values: Array2<f64>,
}

impl OracleGrid {
    pub fn dx(&self) -> f64 {
        (self.meta.x_range[1] - self.meta.x_range[0]) / (self.meta.grid_shape[0] - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.meta.t_range[1] - self.meta.t_range[0]) / (self.meta.grid_shape[1] - 1) as f64
    }

    pub fn x_at(&self, j: usize) -> f64 {
        self.meta.x_range[0] + j as f64 * self.dx()
    }

    pub fn t_at(&self, n: usize) -> f64 {
        self.meta.t_range[0] + n as f64 * self.dt()
    }

    /// Cubic Lagrange interpolation in x, linear in t. Points outside the
    /// grid are an error.
    pub fn interpolate(&self, x: f64, t: f64) -> Result<f64> {
        let [x0, x1] = self.meta.x_range;
        let [t0, t1] = self.meta.t_range;
        if !(x0..=x1).contains(&x) || !(t0..=t1).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "({x}, {t}) outside the oracle grid [{x0}, {x1}] x [{t0}, {t1}]"
            )));
        }
        let [nx, nt] = self.meta.grid_shape;
        let ft = (t - t0) / self.dt();
        let n = (ft.floor() as usize).min(nt - 2);
        let wt = ft - n as f64;
        let a = self.interp_x(n, x);
        if wt == 0.0 {
            return Ok(a);
        }
        let b = self.interp_x(n + 1, x);
        debug_assert!(nx >= 4);
        Ok((1.0 - wt) * a + wt * b)
    }

    fn interp_x(&self, n: usize, x: f64) -> f64 {
        let nx = self.meta.grid_shape[0];
        let fx = (x - self.meta.x_range[0]) / self.dx();
        let j = (fx.floor() as usize).min(nx - 2);
        let row = self.values.row(n);
        if fx == j as f64 {
            return row[j];
        }
        // four nodes around the cell, shifted inward at the edges
        let start = j.saturating_sub(1).min(nx - 4);
        let s = fx - start as f64;
        let mut acc = 0.0;
        for k in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != k {
                    w *= (s - m as f64) / (k as f64 - m as f64);
                }
            }
            acc += w * row[start + k];
        }
        acc
    }

    fn csv_text(&self) -> String {
        let mut out = String::from("x,t,u\n");
        for (n, row) in self.values.rows().into_iter().enumerate() {
            let t = self.t_at(n);
            for (j, u) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", self.x_at(j), t, u).expect("write to string");
            }
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = self.csv_text();
        let mut meta = self.meta.clone();
        meta.checksum = hex::encode(Sha256::digest(csv.as_bytes()));
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
        fs::write(&json_path, serde_json::to_string_pretty(&meta)?)
            .map_err(|e| Error::io(&json_path, e))
    }

    /// Loads a cached grid, verifying the sidecar checksum.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        let meta: OracleMeta = serde_json::from_str(
            &fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?,
        )?;
        if meta.format_version != ORACLE_FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "oracle format {}",
                meta.format_version
            )));
        }
        let csv = fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let computed = hex::encode(Sha256::digest(csv.as_bytes()));
        if computed != meta.checksum {
            return Err(Error::Checksum {
                path: csv_path,
                stored: meta.checksum,
                computed,
            });
        }
        let [nx, nt] = meta.grid_shape;
        let mut values = Vec::with_capacity(nx * nt);
        for (i, line) in csv.lines().skip(1).enumerate() {
            let u = line
                .rsplit(',')
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Shape(format!("{}: bad row {}", csv_path.display(), i + 2))
                })?;
            values.push(u);
        }
        let values = Array2::from_shape_vec((nt, nx), values)
            .map_err(|e| Error::Shape(format!("{}: {e}", csv_path.display())))?;
        Ok(Self { meta, values })
    }
}
