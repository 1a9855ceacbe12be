//! Forward, backward and covariance-weighted forward-backward Kalman filtering
//! of the double-difference model, with every state discretized as a time
//! series at the epoch rate.
//!
//! State layout: position (3), velocity (3), then one double-difference
//! ambiguity (cycles) per live arc. Slots are added when an arc starts and
//! removed when it ends, so the dimension follows the visible satellites.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{ArcSet, FixPolicy};
use crate::dd_engine::{build_dd_system, code_solution, DdSystem, RowKey, RowKind};
use crate::error::{Error, Result};
use crate::obs_model::{FixStatus, Session};

const KIN: usize = 6;

/// Two-sided 99.9% gate on one standardized innovation (chi-square, 1 dof).
pub const CHI2_1DOF_999: f64 = 10.828;

/// Continuous-time process noise spectral densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    /// White noise on position, m^2/s.
    pub pos_psd: f64,
    /// Velocity random walk, (m/s)^2/s.
    pub vel_psd: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            pos_psd: 0.0,
            vel_psd: 1.0,
        }
    }
}

/// Initial uncertainties of a filter pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterInit {
    pub pos_std_m: f64,
    pub vel_std_mps: f64,
    /// Standard deviation of a freshly started ambiguity, cycles.
    pub bias_std_cycles: f64,
}

impl Default for FilterInit {
    fn default() -> Self {
        Self {
            pos_std_m: 30.0,
            vel_std_mps: 10.0,
            bias_std_cycles: 1.0e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// Per-row gate on standardized code innovations; `None` disables gating.
    pub code_gate: Option<f64>,
    pub fix: FixPolicy,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            code_gate: Some(CHI2_1DOF_999),
            fix: FixPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    /// `slots[i]` is the arc id stored at state index `6 + i`.
    pub slots: Vec<usize>,
}

impl FilterState {
    pub fn new(t: f64, pos: Vector3<f64>, vel: Vector3<f64>, pos_var: f64, vel_var: f64) -> Self {
        let mut x = DVector::zeros(KIN);
        x.fixed_rows_mut::<3>(0).copy_from(&pos);
        x.fixed_rows_mut::<3>(3).copy_from(&vel);
        let mut p = DMatrix::zeros(KIN, KIN);
        for i in 0..3 {
            p[(i, i)] = pos_var;
            p[(i + 3, i + 3)] = vel_var;
        }
        Self {
            t,
            x,
            p,
            slots: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn pos(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn vel(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    pub fn pos_cov(&self) -> Matrix3<f64> {
        self.p.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn slot_of(&self, arc: usize) -> Option<usize> {
        self.slots.iter().position(|&a| a == arc).map(|i| KIN + i)
    }

    /// Float value and variance of a live arc.
    pub fn arc_estimate(&self, arc: usize) -> Option<(f64, f64)> {
        self.slot_of(arc).map(|s| (self.x[s], self.p[(s, s)]))
    }

    pub fn add_arc(&mut self, arc: usize, mean: f64, var: f64) {
        let n = self.dim();
        self.x = self.x.clone().insert_row(n, mean);
        let mut p = self.p.clone().insert_row(n, 0.0).insert_column(n, 0.0);
        p[(n, n)] = var;
        self.p = p;
        self.slots.push(arc);
    }

    /// Marginalizes an arc out of the state, returning its last estimate.
    pub fn remove_arc(&mut self, arc: usize) -> Option<(f64, f64)> {
        let s = self.slot_of(arc)?;
        let est = (self.x[s], self.p[(s, s)]);
        self.x = self.x.clone().remove_row(s);
        self.p = self.p.clone().remove_row(s).remove_column(s);
        self.slots.remove(s - KIN);
        Some(est)
    }

    /// Symmetric to 1e-9 relative and no eigenvalue below `-1e-9 * trace`.
    pub fn covariance_is_psd(&self) -> bool {
        is_numerically_psd(&self.p)
    }
}

pub fn is_numerically_psd(p: &DMatrix<f64>) -> bool {
    let scale = p.amax().max(f64::MIN_POSITIVE);
    if (p - p.transpose()).amax() > 1e-9 * scale {
        return false;
    }
    let trace = p.trace();
    let sym = (p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.iter().all(|&l| l >= -1e-9 * trace)
}

/// Discrete process noise of the constant-velocity model over a signed step `dt`.
pub fn kinematic_process_noise(dt: f64, q: &ProcessNoise) -> DMatrix<f64> {
    let a = dt.abs();
    let mut m = DMatrix::zeros(KIN, KIN);
    for i in 0..3 {
        m[(i, i)] = q.vel_psd * a.powi(3) / 3.0 + q.pos_psd * a;
        m[(i, i + 3)] = q.vel_psd * dt * a / 2.0;
        m[(i + 3, i)] = m[(i, i + 3)];
        m[(i + 3, i + 3)] = q.vel_psd * a;
    }
    m
}

/// Propagates the state by `dt` seconds (negative for the backward pass).
///
/// `Pos <- Pos + Vel * dt`; velocity and ambiguities are unchanged; ambiguities
/// receive no process noise.
pub fn predict(state: &FilterState, dt: f64, q: &ProcessNoise) -> FilterState {
    let n = state.dim();
    let mut f = DMatrix::identity(n, n);
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    let mut p = &f * &state.p * f.transpose();
    let qk = kinematic_process_noise(dt, q);
    p.view_mut((0, 0), (KIN, KIN)).add_assign(&qk);
    symmetrize(&mut p);
    FilterState {
        t: state.t + dt,
        x: &f * &state.x,
        p,
        slots: state.slots.clone(),
    }
}

trait AddAssignView {
    fn add_assign(&mut self, other: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign(&mut self, other: &DMatrix<f64>) {
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: FilterState,
    /// Normalized innovation squared over the accepted rows.
    pub nis: f64,
    /// Number of accepted rows.
    pub dof: usize,
    /// Indices (into `dd.rows`) removed by the gate.
    pub rejected: Vec<usize>,
    /// Innovation covariance was not positive definite; state left unchanged.
    pub skipped: bool,
}

/// One linear measurement update with the prefit residuals of `dd`.
///
/// `row_arcs[i]` names the arc of carrier row `i`; carrier rows whose arc has no
/// live slot are ignored. The innovation is `y - H (x - x_lin)` with `x_lin` the
/// system's linearization point and the ambiguity term included, so the
/// correction is applied directly. The covariance uses the Joseph form.
pub fn update(
    state: &FilterState,
    dd: &DdSystem,
    row_arcs: &[Option<usize>],
    code_gate: Option<f64>,
) -> UpdateOutcome {
    let n = state.dim();
    let dpos = state.pos() - dd.linearization;

    let mut rows: Vec<usize> = Vec::with_capacity(dd.len());
    let mut slot_of_row: Vec<Option<usize>> = Vec::with_capacity(dd.len());
    for (i, r) in dd.rows.iter().enumerate() {
        match r.kind {
            RowKind::Code => {
                rows.push(i);
                slot_of_row.push(None);
            }
            RowKind::Carrier => {
                if let Some(slot) = row_arcs[i].and_then(|a| state.slot_of(a)) {
                    rows.push(i);
                    slot_of_row.push(Some(slot));
                }
            }
        }
    }

    let build = |rows: &[usize], slots: &[Option<usize>]| {
        let m = rows.len();
        let mut h = DMatrix::zeros(m, n);
        let mut v = DVector::zeros(m);
        for (k, (&i, slot)) in rows.iter().zip(slots).enumerate() {
            let hp = dd.h_pos.row(i);
            for j in 0..3 {
                h[(k, j)] = hp[j];
            }
            let mut pred = hp.transpose().dot(&dpos);
            if let Some(s) = *slot {
                h[(k, s)] = dd.rows[i].wavelength;
                pred += dd.rows[i].wavelength * state.x[s];
            }
            v[k] = dd.y[i] - pred;
        }
        let r = DMatrix::from_fn(m, m, |a, b| dd.r_dd[(rows[a], rows[b])]);
        (h, v, r)
    };

    let (mut h, mut v, mut r) = build(&rows, &slot_of_row);
    let mut rejected = Vec::new();
    if let Some(gate) = code_gate {
        let s = &h * &state.p * h.transpose() + &r;
        let keep: Vec<usize> = (0..rows.len())
            .filter(|&k| {
                let is_code = dd.rows[rows[k]].kind == RowKind::Code;
                let ok = !is_code || v[k] * v[k] / s[(k, k)] <= gate;
                if !ok {
                    rejected.push(rows[k]);
                }
                ok
            })
            .collect();
        if keep.len() != rows.len() {
            rows = keep.iter().map(|&k| rows[k]).collect();
            slot_of_row = keep.iter().map(|&k| slot_of_row[k]).collect();
            (h, v, r) = build(&rows, &slot_of_row);
        }
    }

    let unchanged = |skipped| UpdateOutcome {
        state: state.clone(),
        nis: 0.0,
        dof: 0,
        rejected: rejected.clone(),
        skipped,
    };
    if rows.is_empty() {
        return unchanged(false);
    }

    let pht = &state.p * h.transpose();
    let s = &h * &pht + &r;
    let Some(chol) = s.clone().cholesky() else {
        return unchanged(true);
    };
    let s_inv_v = chol.solve(&v);
    let nis = v.dot(&s_inv_v);
    // K = P H^T S^-1
    let k = chol.solve(&pht.transpose()).transpose();
    let x = &state.x + &k * &v;
    let i_kh = DMatrix::identity(n, n) - &k * &h;
    let mut p = &i_kh * &state.p * i_kh.transpose() + &k * &r * k.transpose();
    symmetrize(&mut p);

    UpdateOutcome {
        state: FilterState {
            t: state.t,
            x,
            p,
            slots: state.slots.clone(),
        },
        nis,
        dof: rows.len(),
        rejected,
        skipped: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Output of one filter pass at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEstimate {
    pub index: usize,
    pub t: f64,
    /// Posterior float state.
    pub state: FilterState,
    /// Reported position: the fixed solution when ambiguities were fixed, else the float one.
    pub pos: Vector3<f64>,
    pub pos_cov: Matrix3<f64>,
    pub status: FixStatus,
    pub n_dd: usize,
    pub nis: f64,
    pub dof: usize,
    /// Code rows removed by the innovation gate.
    pub rejected: Vec<RowKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    pub direction: Direction,
    /// One entry per epoch in ascending time order, whatever the processing direction.
    pub epochs: Vec<EpochEstimate>,
    /// Last float estimate and variance of each arc seen by the pass.
    pub arc_estimates: BTreeMap<usize, (f64, f64)>,
}

impl FilterTrajectory {
    pub fn solutions(&self) -> Vec<EpochSolution> {
        self.epochs
            .iter()
            .map(|e| EpochSolution {
                t: e.t,
                pos: e.pos,
                cov: e.pos_cov,
                status: e.status,
                n_dd: e.n_dd,
            })
            .collect()
    }

    /// `(sum of NIS, sum of accepted rows)` over the pass.
    pub fn nis_totals(&self) -> (f64, usize) {
        self.epochs
            .iter()
            .fold((0.0, 0), |(s, d), e| (s + e.nis, d + e.dof))
    }
}

/// Position estimate of one method at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSolution {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub status: FixStatus,
    pub n_dd: usize,
}

pub fn run_forward(session: &Session, arcs: &ArcSet, opts: &FilterOptions) -> Result<FilterTrajectory> {
    run_pass(session, arcs, opts, Direction::Forward)
}

pub fn run_backward(session: &Session, arcs: &ArcSet, opts: &FilterOptions) -> Result<FilterTrajectory> {
    run_pass(session, arcs, opts, Direction::Backward)
}

fn run_pass(
    session: &Session,
    arcs: &ArcSet,
    opts: &FilterOptions,
    direction: Direction,
) -> Result<FilterTrajectory> {
    let cfg = &session.config;
    let n = session.epochs.len();
    if n == 0 {
        return Err(Error::Validation("no epochs".into()));
    }
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..n).collect(),
        Direction::Backward => (0..n).rev().collect(),
    };

    let first = &session.epochs[order[0]];
    let init_pos = code_solution(first, &cfg.rover_initial_guess, cfg).unwrap_or(cfg.rover_initial_guess);
    let init_vel = match direction {
        Direction::Forward => cfg.rover_initial_velocity,
        Direction::Backward => Vector3::zeros(),
    };
    let init = &cfg.filter_init;
    let mut state = FilterState::new(
        first.time,
        init_pos,
        init_vel,
        init.pos_std_m.powi(2),
        init.vel_std_mps.powi(2),
    );
    let bias_var = init.bias_std_cycles.powi(2);

    let mut out = Vec::with_capacity(n);
    let mut arc_estimates = BTreeMap::new();

    for (step, &k) in order.iter().enumerate() {
        let epoch = &session.epochs[k];
        if step > 0 {
            state = predict(&state, epoch.time - state.t, &cfg.process);
        }
        let dead: Vec<usize> = state
            .slots
            .iter()
            .copied()
            .filter(|&a| !arcs.get(a).contains(k))
            .collect();
        for a in dead {
            if let Some(est) = state.remove_arc(a) {
                arc_estimates.insert(a, est);
            }
        }

        let mut est = EpochEstimate {
            index: k,
            t: epoch.time,
            state: state.clone(),
            pos: state.pos(),
            pos_cov: state.pos_cov(),
            status: FixStatus::None,
            n_dd: 0,
            nis: 0.0,
            dof: 0,
            rejected: Vec::new(),
        };

        let Ok(dd) = build_dd_system(epoch, &state.pos(), cfg) else {
            log::warn!("epoch {k} (t={}): no usable geometry, prediction only", epoch.time);
            out.push(est);
            continue;
        };
        let row_arcs = arcs.row_arcs(k, &dd)?;

        for (i, row) in dd.rows_of(RowKind::Carrier) {
            let a = row_arcs[i].expect("carrier rows map to arcs");
            if state.slot_of(a).is_some() {
                continue;
            }
            let code = dd
                .find_row(RowKind::Code, row.band, &row.other)
                .map(|j| dd.rows[j].observed_m)
                .unwrap_or(row.computed_m);
            state.add_arc(a, (row.observed_m - code) / row.wavelength, bias_var);
        }

        let res = update(&state, &dd, &row_arcs, opts.code_gate);
        if res.skipped {
            log::warn!("epoch {k}: innovation covariance not positive definite, update skipped");
            est.state = state.clone();
            out.push(est);
            continue;
        }
        state = res.state;
        est.rejected = res.rejected.iter().map(|&i| dd.rows[i].key()).collect();
        est.nis = res.nis;
        est.dof = res.dof;
        est.n_dd = res.dof;
        est.state = state.clone();
        est.pos = state.pos();
        est.pos_cov = state.pos_cov();
        est.status = FixStatus::Float;

        if !epoch.float_only {
            let mut live: Vec<usize> = row_arcs.iter().flatten().copied().collect();
            live.sort_unstable();
            live.dedup();
            if let Some((pos, cov)) = fixed_solution(&state, &live, &opts.fix) {
                est.pos = pos;
                est.pos_cov = cov;
                est.status = FixStatus::Fixed;
            }
        }
        out.push(est);
    }

    for &a in &state.slots {
        if let Some(e) = state.arc_estimate(a) {
            arc_estimates.insert(a, e);
        }
    }
    if direction == Direction::Backward {
        out.reverse();
    }
    Ok(FilterTrajectory {
        direction,
        epochs: out,
        arc_estimates,
    })
}

/// Position conditioned on integer ambiguities for every arc in `live`, when
/// all of them pass the fix policy.
pub fn fixed_solution(
    state: &FilterState,
    live: &[usize],
    policy: &FixPolicy,
) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    if live.is_empty() {
        return None;
    }
    let mut idx = Vec::with_capacity(live.len());
    let mut resid = DVector::zeros(live.len());
    for (i, &a) in live.iter().enumerate() {
        let s = state.slot_of(a)?;
        let n = policy.fix(state.x[s], state.p[(s, s)])?;
        idx.push(s);
        resid[i] = state.x[s] - n as f64;
    }
    let m = idx.len();
    let pbb = DMatrix::from_fn(m, m, |i, j| state.p[(idx[i], idx[j])]);
    let ppb = DMatrix::from_fn(3, m, |i, j| state.p[(i, idx[j])]);
    let chol = pbb.cholesky()?;
    let gain = chol.solve(&ppb.transpose()).transpose();
    let dpos = &gain * resid;
    let pos = state.pos() - Vector3::new(dpos[0], dpos[1], dpos[2]);
    let dcov = &gain * ppb.transpose();
    let mut cov = state.pos_cov() - Matrix3::from_fn(|i, j| dcov[(i, j)]);
    cov = (cov + cov.transpose()) * 0.5;
    Some((pos, cov))
}

/// Covariance-weighted combination of forward and backward position marginals.
///
/// Falls back to the forward value (flagged in the second tuple field) when an
/// information matrix cannot be formed.
pub fn combine_weighted(
    fwd: &[EpochSolution],
    bwd: &[EpochSolution],
) -> Result<Vec<(EpochSolution, bool)>> {
    if fwd.len() != bwd.len() {
        return Err(Error::Validation(format!(
            "forward has {} epochs, backward {}",
            fwd.len(),
            bwd.len()
        )));
    }
    fwd.iter()
        .zip(bwd)
        .map(|(f, b)| {
            if (f.t - b.t).abs() > 1e-9 {
                return Err(Error::Validation(format!("epoch grids differ at t={} / {}", f.t, b.t)));
            }
            let status = match (f.status, b.status) {
                (FixStatus::Fixed, FixStatus::Fixed) => FixStatus::Fixed,
                (FixStatus::None, FixStatus::None) => FixStatus::None,
                _ => FixStatus::Float,
            };
            let n_dd = f.n_dd.max(b.n_dd);
            Ok(match fuse(f, b) {
                Some((pos, cov)) => (
                    EpochSolution {
                        t: f.t,
                        pos,
                        cov,
                        status,
                        n_dd,
                    },
                    false,
                ),
                None => (*f, true),
            })
        })
        .collect()
}

fn fuse(f: &EpochSolution, b: &EpochSolution) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let wf = f.cov.cholesky()?.inverse();
    let wb = b.cov.cholesky()?.inverse();
    let cov = (wf + wb).cholesky()?.inverse();
    // x = (Wf + Wb)^-1 (Wf xf + Wb xb), written about the midpoint to avoid
    // multiplying large ECEF coordinates by large weights.
    let mid = (f.pos + b.pos) * 0.5;
    let pos = mid + cov * (wf * (f.pos - mid) + wb * (b.pos - mid));
    Some((pos, (cov + cov.transpose()) * 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state_with_vel(vel: Vector3<f64>) -> FilterState {
        FilterState::new(0.0, Vector3::zeros(), vel, 4.0, 1.0)
    }

    #[test]
    fn predict_identity_dynamics() {
        let mut s = state_with_vel(Vector3::zeros());
        s.add_arc(3, 12.5, 9.0);
        let q = ProcessNoise {
            pos_psd: 0.0,
            vel_psd: 0.0,
        };
        let out = predict(&s, 1.0, &q);
        assert_eq!(out.x, s.x);
        // F P F^T with zero velocity variance coupling only: P_pos grows by P_vel * T^2
        let mut s0 = s.clone();
        s0.p.view_mut((3, 3), (3, 3)).fill(0.0);
        let out0 = predict(&s0, 1.0, &q);
        assert_eq!(out0.p, s0.p);
    }

    #[test]
    fn predict_moves_position() {
        let s = state_with_vel(Vector3::new(1.0, 0.0, 0.0));
        let out = predict(&s, 2.0, &ProcessNoise::default());
        assert_eq!(out.pos(), Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(out.vel(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(out.t, 2.0);
    }

    #[test]
    fn velocity_variance_grows_by_q() {
        let q = ProcessNoise {
            pos_psd: 0.0,
            vel_psd: 0.37,
        };
        let s = state_with_vel(Vector3::zeros());
        let out = predict(&s, 1.0, &q);
        for i in 3..6 {
            assert!((out.p[(i, i)] - s.p[(i, i)] - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn half_steps_compose() {
        let mut s = state_with_vel(Vector3::new(0.3, -1.7, 2.9));
        s.x[0] = 1234.5;
        let q = ProcessNoise::default();
        let two = predict(&predict(&s, 0.5, &q), 0.5, &q);
        let one = predict(&s, 1.0, &q);
        assert!((two.x.clone() - one.x.clone()).amax() < 1e-12);
        // the covariance composes exactly too for this model
        assert!((two.p - one.p).amax() < 1e-12);
    }

    #[test]
    fn backward_noise_is_time_reversed() {
        let q = ProcessNoise::default();
        let f = kinematic_process_noise(2.0, &q);
        let b = kinematic_process_noise(-2.0, &q);
        assert_eq!(f[(0, 0)], b[(0, 0)]);
        assert_eq!(f[(0, 3)], -b[(0, 3)]);
        assert!(is_numerically_psd(&f));
    }

    #[test]
    fn arc_slots_add_and_remove() {
        let mut s = state_with_vel(Vector3::zeros());
        s.add_arc(7, 1.0, 2.0);
        s.add_arc(9, 3.0, 4.0);
        assert_eq!(s.dim(), 8);
        assert_eq!(s.arc_estimate(9), Some((3.0, 4.0)));
        assert_eq!(s.remove_arc(7), Some((1.0, 2.0)));
        assert_eq!(s.dim(), 7);
        assert_eq!(s.slot_of(9), Some(6));
        assert!(s.remove_arc(7).is_none());
    }

    fn sol(pos: f64, var: f64) -> EpochSolution {
        EpochSolution {
            t: 0.0,
            pos: Vector3::repeat(pos),
            cov: Matrix3::identity() * var,
            status: FixStatus::Float,
            n_dd: 4,
        }
    }

    #[test]
    fn combine_equal_weights_is_mean() {
        let out = combine_weighted(&[sol(1.0, 2.0)], &[sol(3.0, 2.0)]).unwrap();
        assert!((out[0].0.pos - Vector3::repeat(2.0)).amax() < 1e-12);
        assert!(!out[0].1);
    }

    #[test]
    fn combine_hand_values() {
        // (1/1 + 1/2)^-1 (0 + 3/2) = 1
        let out = combine_weighted(&[sol(0.0, 1.0)], &[sol(3.0, 2.0)]).unwrap();
        assert!((out[0].0.pos - Vector3::repeat(1.0)).amax() < 1e-12);
        assert!((out[0].0.cov - Matrix3::identity() * (2.0 / 3.0)).amax() < 1e-12);
    }

    #[test]
    fn combine_uninformative_backward_returns_forward() {
        let out = combine_weighted(&[sol(5.0, 1.0)], &[sol(-40.0, 1e30)]).unwrap();
        assert!((out[0].0.pos - Vector3::repeat(5.0)).amax() < 1e-12);
    }

    #[test]
    fn combine_falls_back_on_bad_covariance() {
        let mut b = sol(3.0, 1.0);
        b.cov = Matrix3::zeros() - Matrix3::identity();
        let out = combine_weighted(&[sol(1.0, 1.0)], &[b]).unwrap();
        assert!(out[0].1);
        assert_eq!(out[0].0.pos, Vector3::repeat(1.0));
    }
}
