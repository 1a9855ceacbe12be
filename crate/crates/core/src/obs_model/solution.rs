use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which estimator produced a solution row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fwd,
    Bwd,
    Fbkf,
    Gssm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fwd, Method::Bwd, Method::Fbkf, Method::Gssm];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Fwd => "fwd",
            Method::Bwd => "bwd",
            Method::Fbkf => "fbkf",
            Method::Gssm => "gssm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.trim())
            .ok_or_else(|| format!("unknown method `{s}` (expected fwd, bwd, fbkf or gssm)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixStatus {
    Fixed,
    Float,
    /// No measurement update at this epoch; the position is a prediction.
    None,
}

/// One epoch of one method's output.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub t: f64,
    pub method: Method,
    pub pos: Vector3<f64>,
    /// East/north/up error against truth, when truth was supplied.
    pub enu_err: Option<Vector3<f64>>,
    pub fix_status: FixStatus,
    pub n_dd: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    method: Method,
    x: f64,
    y: f64,
    z: f64,
    east_err: Option<f64>,
    north_err: Option<f64>,
    up_err: Option<f64>,
    fix_status: FixStatus,
    n_dd: usize,
}

impl From<&SolutionRow> for CsvRow {
    fn from(r: &SolutionRow) -> Self {
        CsvRow {
            t: r.t,
            method: r.method,
            x: r.pos.x,
            y: r.pos.y,
            z: r.pos.z,
            east_err: r.enu_err.map(|e| e.x),
            north_err: r.enu_err.map(|e| e.y),
            up_err: r.enu_err.map(|e| e.z),
            fix_status: r.fix_status,
            n_dd: r.n_dd,
        }
    }
}

impl From<CsvRow> for SolutionRow {
    fn from(r: CsvRow) -> Self {
        let enu_err = match (r.east_err, r.north_err, r.up_err) {
            (Some(e), Some(n), Some(u)) => Some(Vector3::new(e, n, u)),
            _ => None,
        };
        SolutionRow {
            t: r.t,
            method: r.method,
            pos: Vector3::new(r.x, r.y, r.z),
            enu_err,
            fix_status: r.fix_status,
            n_dd: r.n_dd,
        }
    }
}

/// Writes solution rows as CSV (`t, method, x, y, z, east_err, north_err, up_err, fix_status, n_dd`).
pub fn write_solution(path: impl AsRef<Path>, rows: &[SolutionRow]) -> Result<()> {
    let path = path.as_ref();
    let bytes = solution_to_csv(rows)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn solution_to_csv(rows: &[SolutionRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(Error::Validation("solution series is empty".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow::from(r))?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_solution(path: impl AsRef<Path>) -> Result<Vec<SolutionRow>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<CsvRow>() {
        out.push(rec?.into());
    }
    Ok(out)
}

/// Ground-truth sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TruthRow {
    pub fn new(t: f64, p: Vector3<f64>) -> Self {
        TruthRow {
            t,
            x: p.x,
            y: p.y,
            z: p.z,
        }
    }

    pub fn pos(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

pub fn write_truth(path: impl AsRef<Path>, rows: &[TruthRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRow>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
