//! Between-station single differences, between-satellite double differences and
//! the linearized double-difference measurement model.
//!
//! For a band with `m` common satellites ordered reference-first, the carrier and
//! code double differences are `D * sd`, with `D` the `(m-1) x m` differencing
//! matrix (`+1` on the reference, `-1` on the other satellite). The position
//! Jacobian of every double difference block is `-D E`, where the rows of `E`
//! are unit line-of-sight vectors from the receiver to each satellite. Carrier
//! rows additionally carry `wavelength * (B_ref - B_other)`.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obs_model::{Band, BandObs, ObservationEpoch, SatId, SatObs, SessionConfig};

/// Elevation-dependent undifferenced noise, `sigma(el) = a + b / sin(el)` meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub code_a_m: f64,
    pub code_b_m: f64,
    pub carrier_a_m: f64,
    pub carrier_b_m: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            code_a_m: 0.3,
            code_b_m: 0.3,
            carrier_a_m: 0.003,
            carrier_b_m: 0.003,
        }
    }
}

impl NoiseModel {
    pub fn code_std(&self, elevation: f64) -> f64 {
        self.code_a_m + self.code_b_m / elevation.sin()
    }

    pub fn carrier_std(&self, elevation: f64) -> f64 {
        self.carrier_a_m + self.carrier_b_m / elevation.sin()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            code_a_m: self.code_a_m * factor,
            code_b_m: self.code_b_m * factor,
            carrier_a_m: self.carrier_a_m * factor,
            carrier_b_m: self.carrier_b_m * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Carrier,
    Code,
}

/// Identifies a double-difference row independently of where it sits in `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub band: Band,
    pub kind: RowKind,
    pub reference: SatId,
    pub other: SatId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdRow {
    pub band: Band,
    pub kind: RowKind,
    pub reference: SatId,
    pub other: SatId,
    /// Single-difference indices within the band block; the reference is always 0.
    pub sd_indices: (usize, usize),
    pub wavelength: f64,
    /// Measured double difference, meters (carrier already scaled by the wavelength).
    pub observed_m: f64,
    /// Geometric double difference predicted at the linearization point, meters.
    pub computed_m: f64,
}

impl DdRow {
    pub fn residual(&self) -> f64 {
        self.observed_m - self.computed_m
    }

    pub fn key(&self) -> RowKey {
        RowKey {
            band: self.band,
            kind: self.kind,
            reference: self.reference.clone(),
            other: self.other.clone(),
        }
    }
}

/// Per-band geometry: satellites (reference first), `E`, `D` and single-difference variances.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGeometry {
    pub band: Band,
    pub wavelength: f64,
    pub sats: Vec<SatId>,
    pub elevations: Vec<f64>,
    pub los: DMatrix<f64>,
    pub diff: DMatrix<f64>,
    pub sd_var_carrier: Vec<f64>,
    pub sd_var_code: Vec<f64>,
}

impl BandGeometry {
    pub fn reference(&self) -> &SatId {
        &self.sats[0]
    }
}

/// Linearized double-difference model of one epoch.
///
/// `y` holds prefit residuals ordered carrier blocks (L1, L2, L5) then code
/// blocks in the same band order; `h_pos` is the matching stack of `-D E`
/// blocks and `r_dd` the block-diagonal `D R_sd D^T` covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DdSystem {
    pub time: f64,
    pub linearization: Vector3<f64>,
    pub bands: Vec<BandGeometry>,
    pub rows: Vec<DdRow>,
    pub y: DVector<f64>,
    pub h_pos: DMatrix<f64>,
    pub r_dd: DMatrix<f64>,
}

impl DdSystem {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn reference(&self, band: Band) -> Option<&SatId> {
        self.bands.iter().find(|b| b.band == band).map(BandGeometry::reference)
    }

    pub fn band(&self, band: Band) -> Option<&BandGeometry> {
        self.bands.iter().find(|b| b.band == band)
    }

    /// Indices of rows of the given kind.
    pub fn rows_of(&self, kind: RowKind) -> impl Iterator<Item = (usize, &DdRow)> {
        self.rows.iter().enumerate().filter(move |(_, r)| r.kind == kind)
    }

    pub fn find_row(&self, kind: RowKind, band: Band, other: &SatId) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.kind == kind && r.band == band && &r.other == other)
    }

    /// Restricts the system to the given rows, keeping their relative order.
    pub fn subset(&self, keep: &[usize]) -> DdSystem {
        let n = keep.len();
        let rows = keep.iter().map(|&i| self.rows[i].clone()).collect();
        let y = DVector::from_fn(n, |i, _| self.y[keep[i]]);
        let h_pos = DMatrix::from_fn(n, 3, |i, j| self.h_pos[(keep[i], j)]);
        let r_dd = DMatrix::from_fn(n, n, |i, j| self.r_dd[(keep[i], keep[j])]);
        DdSystem {
            time: self.time,
            linearization: self.linearization,
            bands: self.bands.clone(),
            rows,
            y,
            h_pos,
            r_dd,
        }
    }
}

/// A satellite seen on `band` with complete carrier and code at both stations.
#[derive(Debug, Clone, Copy)]
pub struct CommonSat<'a> {
    pub rover: &'a SatObs,
    pub rover_band: &'a BandObs,
    pub base_band: &'a BandObs,
}

impl CommonSat<'_> {
    pub fn id(&self) -> &SatId {
        &self.rover.id
    }
}

/// Common satellites on `band`, sorted by id.
pub fn common_sats<'a>(rover: &'a [SatObs], base: &'a [SatObs], band: Band) -> Vec<CommonSat<'a>> {
    let mut out: Vec<CommonSat<'a>> = rover
        .iter()
        .filter_map(|r| {
            let rb = r.band(band).filter(|o| o.is_complete())?;
            let b = base.iter().find(|b| b.id == r.id)?;
            let bb = b.band(band).filter(|o| o.is_complete())?;
            Some(CommonSat {
                rover: r,
                rover_band: rb,
                base_band: bb,
            })
        })
        .collect();
    out.sort_by(|a, b| a.id().cmp(b.id()));
    out
}

/// Highest-elevation common satellite on `band`; ties go to the smallest id.
pub fn select_reference(rover: &[SatObs], base: &[SatObs], band: Band) -> Result<SatId> {
    let common = common_sats(rover, base, band);
    pick_reference(&common, band).map(|i| common[i].id().clone())
}

fn pick_reference(common: &[CommonSat<'_>], band: Band) -> Result<usize> {
    if common.len() < 2 {
        return Err(Error::InsufficientGeometry {
            band,
            common: common.len(),
        });
    }
    // `common` is sorted by id, so a strict comparison keeps the first on ties.
    let mut best = 0;
    for (i, s) in common.iter().enumerate().skip(1) {
        if s.rover.elevation > common[best].rover.elevation {
            best = i;
        }
    }
    Ok(best)
}

/// `(m-1) x m` single-difference coefficient matrix, reference in column 0.
pub fn diff_matrix(m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::TooFewSatellites(m));
    }
    let mut d = DMatrix::zeros(m - 1, m);
    for i in 0..m - 1 {
        d[(i, 0)] = 1.0;
        d[(i, i + 1)] = -1.0;
    }
    Ok(d)
}

/// Unit line-of-sight rows from `rover_pos` to each satellite.
pub fn los_matrix(rover_pos: &Vector3<f64>, sats: &[Vector3<f64>]) -> Result<DMatrix<f64>> {
    let mut e = DMatrix::zeros(sats.len(), 3);
    for (i, s) in sats.iter().enumerate() {
        let d = s - rover_pos;
        let n = d.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::SingularGeometry(format!("satellite #{i}")));
        }
        e.set_row(i, &(d / n).transpose());
    }
    Ok(e)
}

/// Geometric single difference `|s - r| - |s - b|`, evaluated without the
/// cancellation of subtracting two ~2e7 m ranges.
pub fn sd_geometric_range(sat: &Vector3<f64>, rover: &Vector3<f64>, base: &Vector3<f64>) -> f64 {
    let rho_r = (sat - rover).norm();
    let rho_b = (sat - base).norm();
    let num = (base - rover).dot(&(2.0 * sat - rover - base));
    num / (rho_r + rho_b)
}

/// Builds the linearized double-difference model of `epoch` about `lin_pos`.
pub fn build_dd_system(
    epoch: &ObservationEpoch,
    lin_pos: &Vector3<f64>,
    config: &SessionConfig,
) -> Result<DdSystem> {
    let base_pos = &config.base_pos_ecef;
    let noise = &config.noise;

    let mut bands = Vec::new();
    let mut carrier_rows = Vec::new();
    let mut code_rows = Vec::new();

    for band in config.band_list() {
        let mut common = common_sats(&epoch.rover, &epoch.base, band);
        let Ok(ref_idx) = pick_reference(&common, band) else {
            continue;
        };
        let reference = common.remove(ref_idx);
        common.insert(0, reference);

        let lambda = config.wavelength(band);
        let positions: Vec<Vector3<f64>> = common.iter().map(|c| c.rover.pos_ecef).collect();
        let los = los_matrix(lin_pos, &positions).map_err(|_| {
            Error::SingularGeometry(format!("{} at t={}", common[0].id(), epoch.time))
        })?;
        let m = common.len();
        let diff = diff_matrix(m)?;

        let mut sd_cp = Vec::with_capacity(m);
        let mut sd_pr = Vec::with_capacity(m);
        let mut sd_geo = Vec::with_capacity(m);
        let mut var_cp = Vec::with_capacity(m);
        let mut var_pr = Vec::with_capacity(m);
        for c in &common {
            // is_complete() guarantees both fields
            let (cp_r, pr_r) = (c.rover_band.cp_cycles.unwrap(), c.rover_band.pr_m.unwrap());
            let (cp_b, pr_b) = (c.base_band.cp_cycles.unwrap(), c.base_band.pr_m.unwrap());
            sd_cp.push(lambda * (cp_r - cp_b));
            sd_pr.push(pr_r - pr_b);
            sd_geo.push(sd_geometric_range(&c.rover.pos_ecef, lin_pos, base_pos));
            let el = c.rover.elevation;
            var_cp.push(2.0 * noise.carrier_std(el).powi(2));
            var_pr.push(2.0 * noise.code_std(el).powi(2));
        }

        let sats: Vec<SatId> = common.iter().map(|c| c.id().clone()).collect();
        for j in 1..m {
            let computed = sd_geo[0] - sd_geo[j];
            let mk = |kind, observed| DdRow {
                band,
                kind,
                reference: sats[0].clone(),
                other: sats[j].clone(),
                sd_indices: (0, j),
                wavelength: lambda,
                observed_m: observed,
                computed_m: computed,
            };
            carrier_rows.push(mk(RowKind::Carrier, sd_cp[0] - sd_cp[j]));
            code_rows.push(mk(RowKind::Code, sd_pr[0] - sd_pr[j]));
        }

        bands.push(BandGeometry {
            band,
            wavelength: lambda,
            elevations: common.iter().map(|c| c.rover.elevation).collect(),
            sats,
            los,
            diff,
            sd_var_carrier: var_cp,
            sd_var_code: var_pr,
        });
    }

    if bands.is_empty() {
        return Err(Error::NoGeometry { time: epoch.time });
    }

    let rows: Vec<DdRow> = carrier_rows.into_iter().chain(code_rows).collect();
    let n = rows.len();
    let mut h_pos = DMatrix::zeros(n, 3);
    let mut r_dd = DMatrix::zeros(n, n);
    let mut offset = 0;
    for kind in [RowKind::Carrier, RowKind::Code] {
        for g in &bands {
            let m = g.sats.len();
            let h = -(&g.diff * &g.los);
            let var = match kind {
                RowKind::Carrier => &g.sd_var_carrier,
                RowKind::Code => &g.sd_var_code,
            };
            let r_sd = DMatrix::from_diagonal(&DVector::from_column_slice(var));
            let r = &g.diff * r_sd * g.diff.transpose();
            h_pos.view_mut((offset, 0), (m - 1, 3)).copy_from(&h);
            r_dd.view_mut((offset, offset), (m - 1, m - 1)).copy_from(&r);
            offset += m - 1;
        }
    }
    let y = DVector::from_iterator(n, rows.iter().map(DdRow::residual));

    Ok(DdSystem {
        time: epoch.time,
        linearization: *lin_pos,
        bands,
        rows,
        y,
        h_pos,
        r_dd,
    })
}

/// Code-only double-difference position by iterated weighted least squares.
///
/// Returns `None` when fewer than three code rows are available or the normal
/// matrix is singular.
pub fn code_solution(
    epoch: &ObservationEpoch,
    guess: &Vector3<f64>,
    config: &SessionConfig,
) -> Option<Vector3<f64>> {
    let mut x = *guess;
    for _ in 0..10 {
        let dd = build_dd_system(epoch, &x, config).ok()?;
        let code: Vec<usize> = dd.rows_of(RowKind::Code).map(|(i, _)| i).collect();
        if code.len() < 3 {
            return None;
        }
        let sub = dd.subset(&code);
        let w = sub.r_dd.clone().cholesky()?.inverse();
        let n = sub.h_pos.transpose() * &w * &sub.h_pos;
        let rhs = sub.h_pos.transpose() * &w * &sub.y;
        let dx = n.cholesky()?.solve(&rhs);
        x += Vector3::new(dx[0], dx[1], dx[2]);
        if dx.norm() < 1e-6 {
            break;
        }
    }
    Some(x)
}
