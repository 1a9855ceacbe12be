//! Brute-force references for the batch solver. Each one assembles its own
//! dense matrices from the session and the factor priors, in the
//! unwhitened form `x = (A^T P^-1 A)^-1 A^T P^-1 b`.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::ambiguity::ArcSet;
use crate::dd_engine::{build_dd_system, DdSystem};
use crate::error::{Error, Result};
use crate::gssm::{GssmProblem, Linearization};
use crate::obs_model::Session;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub positions: Vec<Vector3<f64>>,
    pub arcs: Vec<f64>,
}

/// Measurement rows kept at epoch `k`: `(H, lambda-by-arc, y, R)` in delta form.
struct EpochRows {
    h: DMatrix<f64>,
    /// `(row, arc id, wavelength)` of every carrier row.
    carrier: Vec<(usize, usize, f64)>,
    y: DVector<f64>,
    r: DMatrix<f64>,
}

fn epoch_rows(
    session: &Session,
    arcs: &ArcSet,
    problem: &GssmProblem,
    lin: &Linearization,
    k: usize,
) -> Result<Option<EpochRows>> {
    let dd: DdSystem = match build_dd_system(&session.epochs[k], &lin.positions[k], &session.config) {
        Ok(dd) => dd,
        Err(Error::NoGeometry { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let row_arcs = arcs.row_arcs(k, &dd)?;
    let keep: Vec<usize> = (0..dd.len())
        .filter(|&i| !problem.is_excluded(k, &dd.rows[i].key()))
        .collect();
    if keep.is_empty() {
        return Ok(None);
    }
    let m = keep.len();
    let h = DMatrix::from_fn(m, 3, |r, c| dd.h_pos[(keep[r], c)]);
    let r = DMatrix::from_fn(m, m, |a, b| dd.r_dd[(keep[a], keep[b])]);
    let mut y = DVector::from_fn(m, |r, _| dd.y[keep[r]]);
    let mut carrier = Vec::new();
    for (row, &i) in keep.iter().enumerate() {
        if let Some(a) = row_arcs[i] {
            let lambda = dd.rows[i].wavelength;
            carrier.push((row, a, lambda));
            y[row] -= lambda * lin.arcs[a];
        }
    }
    Ok(Some(EpochRows { h, carrier, y, r }))
}

/// Dense assembly of the full batch problem solved through a pseudo-inverse.
pub fn dense_batch_oracle(
    session: &Session,
    arcs: &ArcSet,
    problem: &GssmProblem,
    lin: &Linearization,
) -> Result<OracleSolution> {
    let n = session.len();
    if n == 0 {
        return Err(Error::Validation("no epochs".into()));
    }
    let na = arcs.len();
    let ncols = 3 * n + na;

    // (rows of A, covariance block, rhs) triples
    let mut blocks: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = Vec::new();
    for (a, prior) in problem.arc_priors.iter().enumerate() {
        let mut row = DMatrix::zeros(1, ncols);
        row[(0, 3 * n + a)] = 1.0;
        blocks.push((
            row,
            DMatrix::from_element(1, 1, prior.var),
            DVector::from_element(1, prior.mean - lin.arcs[a]),
        ));
    }
    for (k, prior) in problem.position_priors.iter().enumerate() {
        let mut rows = DMatrix::zeros(3, ncols);
        for i in 0..3 {
            rows[(i, 3 * k + i)] = 1.0;
        }
        let cov = DMatrix::from_fn(3, 3, |i, j| prior.cov[(i, j)]);
        let d = prior.mean - lin.positions[k];
        blocks.push((rows, cov, DVector::from_column_slice(d.as_slice())));
    }
    for k in 0..n {
        let Some(er) = epoch_rows(session, arcs, problem, lin, k)? else {
            continue;
        };
        let m = er.y.len();
        let mut rows = DMatrix::zeros(m, ncols);
        rows.view_mut((0, 3 * k), (m, 3)).copy_from(&er.h);
        for &(row, a, lambda) in &er.carrier {
            rows[(row, 3 * n + a)] = lambda;
        }
        blocks.push((rows, er.r, er.y));
    }
    if let Some(psd) = problem.random_walk_psd {
        for k in 0..n - 1 {
            let dt = session.epochs[k + 1].time - session.epochs[k].time;
            let mut rows = DMatrix::zeros(3, ncols);
            for i in 0..3 {
                rows[(i, 3 * k + i)] = -1.0;
                rows[(i, 3 * (k + 1) + i)] = 1.0;
            }
            let d = lin.positions[k] - lin.positions[k + 1];
            blocks.push((
                rows,
                DMatrix::identity(3, 3) * (psd * dt.abs()),
                DVector::from_column_slice(d.as_slice()),
            ));
        }
    }

    let nrows: usize = blocks.iter().map(|b| b.2.len()).sum();
    let mut a = DMatrix::zeros(nrows, ncols);
    let mut p = DMatrix::zeros(nrows, nrows);
    let mut b = DVector::zeros(nrows);
    let mut off = 0;
    for (rows, cov, rhs) in &blocks {
        let m = rhs.len();
        a.view_mut((off, 0), (m, ncols)).copy_from(rows);
        p.view_mut((off, off), (m, m)).copy_from(cov);
        b.rows_mut(off, m).copy_from(rhs);
        off += m;
    }

    let w = p
        .try_inverse()
        .ok_or_else(|| Error::Singular("weight matrix".into()))?;
    let at_w = a.transpose() * &w;
    let normal = &at_w * &a;
    let rhs = &at_w * &b;
    let pinv = normal
        .pseudo_inverse(0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let x = pinv * rhs;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("dense normal matrix".into()));
    }
    Ok(OracleSolution {
        positions: (0..n)
            .map(|k| lin.positions[k] + Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]))
            .collect(),
        arcs: (0..na).map(|j| lin.arcs[j] + x[3 * n + j]).collect(),
    })
}

/// The same factors written as a time series: the state at epoch `k` is
/// `[p_k, every arc]`. Positions do not propagate (`F = diag(0, I)`, process
/// noise equal to the next position prior) and ambiguities are constant with
/// zero process noise. A Kalman filter followed by a Rauch-Tung-Striebel
/// backward pass gives the smoothed positions.
pub fn rts_smoother_oracle(
    session: &Session,
    arcs: &ArcSet,
    problem: &GssmProblem,
    lin: &Linearization,
) -> Result<OracleSolution> {
    let n = session.len();
    if n == 0 {
        return Err(Error::Validation("no epochs".into()));
    }
    if problem.random_walk_psd.is_some() {
        return Err(Error::Validation("the smoother oracle has no motion factor".into()));
    }
    let na = arcs.len();
    let dim = 3 + na;

    let prior_state = |k: usize, x: &DVector<f64>, p: &DMatrix<f64>| {
        let pp = &problem.position_priors[k];
        let mut x = x.clone();
        let mut p = p.clone();
        let d = pp.mean - lin.positions[k];
        x.rows_mut(0, 3).copy_from(&d);
        p.view_mut((0, 0), (3, dim)).fill(0.0);
        p.view_mut((0, 0), (dim, 3)).fill(0.0);
        for i in 0..3 {
            for j in 0..3 {
                p[(i, j)] = pp.cov[(i, j)];
            }
        }
        (x, p)
    };

    let mut x0 = DVector::zeros(dim);
    let mut p0 = DMatrix::zeros(dim, dim);
    for (a, prior) in problem.arc_priors.iter().enumerate() {
        x0[3 + a] = prior.mean - lin.arcs[a];
        p0[(3 + a, 3 + a)] = prior.var;
    }

    let mut pred: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(n);
    let mut filt: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(n);
    let (mut x, mut p) = (x0, p0);
    for k in 0..n {
        (x, p) = prior_state(k, &x, &p);
        pred.push((x.clone(), p.clone()));
        if let Some(er) = epoch_rows(session, arcs, problem, lin, k)? {
            let m = er.y.len();
            let mut h = DMatrix::zeros(m, dim);
            h.view_mut((0, 0), (m, 3)).copy_from(&er.h);
            for &(row, a, lambda) in &er.carrier {
                h[(row, 3 + a)] = lambda;
            }
            let s = &h * &p * h.transpose() + &er.r;
            let s_inv = s
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("innovation covariance at epoch {k}")))?;
            let gain = &p * h.transpose() * s_inv;
            x = &x + &gain * (&er.y - &h * &x);
            let i_kh = DMatrix::identity(dim, dim) - &gain * &h;
            p = &i_kh * &p * i_kh.transpose() + &gain * &er.r * gain.transpose();
        }
        filt.push((x.clone(), p.clone()));
    }

    let mut f = DMatrix::identity(dim, dim);
    f.view_mut((0, 0), (3, 3)).fill(0.0);
    let mut smoothed = vec![DVector::zeros(dim); n];
    smoothed[n - 1] = filt[n - 1].0.clone();
    for k in (0..n - 1).rev() {
        let (xf, pf) = &filt[k];
        let (xp, pp) = &pred[k + 1];
        let pp_inv = pp
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("predicted covariance at epoch {}", k + 1)))?;
        let c = pf * f.transpose() * pp_inv;
        smoothed[k] = xf + c * (&smoothed[k + 1] - xp);
    }

    Ok(OracleSolution {
        positions: (0..n)
            .map(|k| lin.positions[k] + Vector3::new(smoothed[k][0], smoothed[k][1], smoothed[k][2]))
            .collect(),
        arcs: (0..na).map(|a| lin.arcs[a] + smoothed[0][3 + a]).collect(),
    })
}

/// Epoch-by-epoch weighted least squares with every ambiguity held at its
/// prior mean: what the batch solution reduces to when all arcs are pinned.
pub fn pinned_epoch_oracle(
    session: &Session,
    arcs: &ArcSet,
    problem: &GssmProblem,
    lin: &Linearization,
) -> Result<Vec<Vector3<f64>>> {
    (0..session.len())
        .map(|k| {
            let prior = &problem.position_priors[k];
            let w0 = prior
                .cov
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("position prior at epoch {k}")))?;
            let mut normal = DMatrix::from_fn(3, 3, |i, j| w0[(i, j)]);
            let d = w0 * (prior.mean - lin.positions[k]);
            let mut rhs = DVector::from_column_slice(d.as_slice());
            if let Some(er) = epoch_rows(session, arcs, problem, lin, k)? {
                let mut y = er.y.clone();
                for &(row, a, lambda) in &er.carrier {
                    // pinned value relative to the linearization point
                    y[row] -= lambda * (problem.arc_priors[a].mean - lin.arcs[a]);
                }
                let w = er
                    .r
                    .try_inverse()
                    .ok_or_else(|| Error::Singular(format!("measurement covariance at epoch {k}")))?;
                normal += er.h.transpose() * &w * &er.h;
                rhs += er.h.transpose() * &w * y;
            }
            let dx = normal
                .try_inverse()
                .ok_or_else(|| Error::Singular(format!("normal matrix at epoch {k}")))?
                * rhs;
            Ok(lin.positions[k] + Vector3::new(dx[0], dx[1], dx[2]))
        })
        .collect()
}
