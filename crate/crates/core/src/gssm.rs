//! Graphical state space model: the whole session as one sparse weighted
//! least-squares problem.
//!
//! Variables are one position per epoch (3 columns each) and one constant
//! double-difference ambiguity per arc (cycles). Velocity is not a variable.
//! Rows come in three blocks:
//!
//! 1. one prior per arc, from the forward filter's last float estimate (or the
//!    fixed integer with a tiny variance);
//! 2. one 3x3 position prior per epoch, from the forward posterior;
//! 3. one double-difference measurement block per epoch, `[-D E | lambda]`.
//!
//! Everything is written in delta form about a linearization point, initially
//! the forward trajectory, and every block is whitened by the inverse Cholesky
//! factor of its covariance before it reaches the sparse solver.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{ArcSet, FixPolicy};
use crate::dd_engine::{build_dd_system, RowKey, RowKind};
use crate::error::{Error, Result};
use crate::kf_baseline::{EpochSolution, FilterTrajectory};
use crate::obs_model::{FixStatus, Session};
use crate::sparse::{solve_normal, SolveOptions, SparseLsq};

/// Prior variance given to an arc fixed to an integer, cycles^2.
pub const FIXED_ARC_VARIANCE: f64 = 1e-8;

/// Solver settings that may appear in the session file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GssmSettings {
    pub max_iters: usize,
    /// Stop once the largest position correction is below this, meters.
    pub tol_m: f64,
    /// Spectral density of an optional position random walk between
    /// consecutive epochs, m^2/s. Off when `None`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_walk_psd: Option<f64>,
}

impl Default for GssmSettings {
    fn default() -> Self {
        Self {
            max_iters: 5,
            tol_m: 1e-4,
            random_walk_psd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GssmConfig {
    pub settings: GssmSettings,
    /// Fix arcs from the forward float estimates with this policy; `None` keeps all arcs float.
    pub fix: Option<FixPolicy>,
    /// Assembly order of the epochs (`order[i]` is an epoch index). Natural when `None`.
    pub epoch_order: Option<Vec<usize>>,
    /// Compute position marginal variances after the last solve.
    pub marginals: bool,
}

impl Default for GssmConfig {
    fn default() -> Self {
        Self {
            settings: GssmSettings::default(),
            fix: Some(FixPolicy::default()),
            epoch_order: None,
            marginals: true,
        }
    }
}

impl GssmConfig {
    pub fn from_session(session: &Session) -> Self {
        Self {
            settings: session.config.gssm,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionPrior {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcPrior {
    pub mean: f64,
    pub var: f64,
    pub fixed: Option<i64>,
}

/// Everything the factors need besides the observations themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct GssmProblem {
    pub position_priors: Vec<PositionPrior>,
    /// Indexed by arc id.
    pub arc_priors: Vec<ArcPrior>,
    /// Code rows the forward filter gated out, per epoch; they stay out here too.
    pub excluded: Vec<Vec<RowKey>>,
    pub random_walk_psd: Option<f64>,
}

impl GssmProblem {
    pub fn is_excluded(&self, epoch: usize, key: &RowKey) -> bool {
        key.kind == RowKind::Code && self.excluded[epoch].contains(key)
    }
}

/// Derives the priors of every factor from a forward pass over `session`.
pub fn build_problem(
    session: &Session,
    fwd: &FilterTrajectory,
    arcs: &ArcSet,
    cfg: &GssmConfig,
) -> Result<GssmProblem> {
    let n = session.len();
    if n == 0 {
        return Err(Error::Validation("no epochs".into()));
    }
    if fwd.epochs.len() != n {
        return Err(Error::Assembly(format!(
            "forward trajectory covers {} of {n} epochs",
            fwd.epochs.len()
        )));
    }
    for (k, (e, obs)) in fwd.epochs.iter().zip(&session.epochs).enumerate() {
        if e.t != obs.time {
            return Err(Error::Assembly(format!(
                "forward epoch {k} at t={} but session epoch at t={}",
                e.t, obs.time
            )));
        }
    }

    let position_priors = fwd
        .epochs
        .iter()
        .map(|e| PositionPrior {
            mean: e.pos,
            cov: e.pos_cov,
        })
        .collect();

    let weak = session.config.filter_init.bias_std_cycles.powi(2);
    let arc_priors = arcs
        .iter()
        .map(|a| {
            let (mean, var) = fwd.arc_estimates.get(&a.id).copied().unwrap_or_else(|| {
                log::warn!("arc {} has no forward estimate, using a weak prior", a.id);
                (0.0, weak)
            });
            let float_only = session.epochs[a.start..=a.end].iter().any(|e| e.float_only);
            let fixed = if float_only {
                None
            } else {
                cfg.fix.and_then(|p| p.fix(mean, var))
            };
            match fixed {
                Some(n) => ArcPrior {
                    mean: n as f64,
                    var: FIXED_ARC_VARIANCE,
                    fixed,
                },
                None => ArcPrior { mean, var, fixed },
            }
        })
        .collect();

    Ok(GssmProblem {
        position_priors,
        arc_priors,
        excluded: fwd.epochs.iter().map(|e| e.rejected.clone()).collect(),
        random_walk_psd: cfg.settings.random_walk_psd,
    })
}

/// Point about which the factors are linearized.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub positions: Vec<Vector3<f64>>,
    /// Arc values, cycles, indexed by arc id.
    pub arcs: Vec<f64>,
}

impl Linearization {
    pub fn from_priors(problem: &GssmProblem) -> Self {
        Self {
            positions: problem.position_priors.iter().map(|p| p.mean).collect(),
            arcs: problem.arc_priors.iter().map(|a| a.mean).collect(),
        }
    }

    fn stepped(&self, step: &Step, alpha: f64) -> Self {
        Self {
            positions: self
                .positions
                .iter()
                .zip(&step.positions)
                .map(|(p, d)| p + d * alpha)
                .collect(),
            arcs: self
                .arcs
                .iter()
                .zip(&step.arcs)
                .map(|(b, d)| b + d * alpha)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    ArcPrior,
    PositionPrior,
    Measurement,
    Motion,
}

/// A contiguous range of rows of the assembled system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlock {
    pub kind: BlockKind,
    /// Epoch index for position and measurement blocks, arc id for arc priors,
    /// the earlier epoch for motion blocks.
    pub index: usize,
    pub rows: std::ops::Range<usize>,
}

/// Column layout of the unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `rank[k]` is the assembly position of epoch `k`.
    rank: Vec<usize>,
    n_arcs: usize,
}

impl Layout {
    fn new(order: &[usize], n_arcs: usize) -> Self {
        let mut rank = vec![0; order.len()];
        for (i, &k) in order.iter().enumerate() {
            rank[k] = i;
        }
        Self { rank, n_arcs }
    }

    pub fn n_epochs(&self) -> usize {
        self.rank.len()
    }

    pub fn n_arcs(&self) -> usize {
        self.n_arcs
    }

    pub fn ncols(&self) -> usize {
        3 * self.n_epochs() + self.n_arcs
    }

    /// First of the three position columns of epoch `k`.
    pub fn pos_col(&self, k: usize) -> usize {
        3 * self.rank[k]
    }

    pub fn arc_col(&self, arc: usize) -> usize {
        3 * self.n_epochs() + arc
    }
}

/// Per-epoch facts gathered during assembly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochInfo {
    /// Arcs with a carrier row at the epoch.
    pub arcs: Vec<usize>,
    pub n_dd: usize,
}

/// The assembled, whitened system at one linearization point.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub lsq: SparseLsq,
    pub blocks: Vec<RowBlock>,
    pub epochs: Vec<EpochInfo>,
}

impl Assembly {
    /// Weighted squared residual at zero delta, i.e. at the linearization point.
    pub fn cost(&self) -> f64 {
        self.lsq.rhs().iter().map(|b| b * b).sum()
    }
}

#[derive(Debug, Clone)]
pub struct GssmSystem<'a> {
    pub session: &'a Session,
    pub arcs: &'a ArcSet,
    pub problem: GssmProblem,
    pub order: Vec<usize>,
    pub layout: Layout,
    pub linearization: Linearization,
    pub assembly: Assembly,
    pub marginals: bool,
}

/// Assembles the system about the forward trajectory.
pub fn build_gssm<'a>(
    session: &'a Session,
    fwd: &FilterTrajectory,
    arcs: &'a ArcSet,
    cfg: &GssmConfig,
) -> Result<GssmSystem<'a>> {
    let problem = build_problem(session, fwd, arcs, cfg)?;
    let lin = Linearization::from_priors(&problem);
    GssmSystem::new(session, arcs, problem, lin, cfg.epoch_order.clone(), cfg.marginals)
}

impl<'a> GssmSystem<'a> {
    pub fn new(
        session: &'a Session,
        arcs: &'a ArcSet,
        problem: GssmProblem,
        linearization: Linearization,
        order: Option<Vec<usize>>,
        marginals: bool,
    ) -> Result<Self> {
        let n = session.len();
        if problem.position_priors.len() != n || problem.excluded.len() != n {
            return Err(Error::Assembly("priors do not cover every epoch".into()));
        }
        if problem.arc_priors.len() != arcs.len() {
            return Err(Error::Assembly("priors do not cover every arc".into()));
        }
        if linearization.positions.len() != n || linearization.arcs.len() != arcs.len() {
            return Err(Error::Assembly("linearization point has the wrong size".into()));
        }
        let order = order.unwrap_or_else(|| (0..n).collect());
        let mut seen = vec![false; n];
        for &k in &order {
            if k >= n || std::mem::replace(&mut seen[k], true) {
                return Err(Error::Assembly("epoch order is not a permutation".into()));
            }
        }
        if order.len() != n {
            return Err(Error::Assembly("epoch order is not a permutation".into()));
        }
        let layout = Layout::new(&order, arcs.len());
        let assembly = assemble(session, arcs, &problem, &layout, &order, &linearization)?;
        Ok(Self {
            session,
            arcs,
            problem,
            order,
            layout,
            linearization,
            assembly,
            marginals,
        })
    }

    /// Solves the linearized system once, without moving the linearization point.
    pub fn solve_step(&self) -> Result<Step> {
        let opts = SolveOptions {
            marginal_columns: self.marginals.then(|| {
                (0..self.layout.n_epochs())
                    .flat_map(|k| {
                        let c = self.layout.pos_col(k);
                        [c, c + 1, c + 2]
                    })
                    .collect()
            }),
            natural_order: false,
        };
        let sol = solve_normal(&self.assembly.lsq, &opts)?;
        let positions = (0..self.layout.n_epochs())
            .map(|k| {
                let c = self.layout.pos_col(k);
                Vector3::new(sol.x[c], sol.x[c + 1], sol.x[c + 2])
            })
            .collect();
        let arcs = (0..self.layout.n_arcs())
            .map(|a| sol.x[self.layout.arc_col(a)])
            .collect();
        let position_variances = sol.marginal_variances.map(|v| {
            v.chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect()
        });
        let residual = self.assembly.lsq.mul_vec(sol.x.as_slice());
        let linear_cost = residual
            .iter()
            .zip(self.assembly.lsq.rhs())
            .map(|(ax, b)| (ax - b).powi(2))
            .sum();
        Ok(Step {
            positions,
            arcs,
            position_variances,
            linear_cost,
            cost_at_zero: self.assembly.cost(),
        })
    }

    /// Reassembles about a new linearization point.
    pub fn relinearize(&self, lin: Linearization) -> Result<Self> {
        let assembly = assemble(self.session, self.arcs, &self.problem, &self.layout, &self.order, &lin)?;
        Ok(Self {
            linearization: lin,
            assembly,
            ..self.clone()
        })
    }

    /// Dumps the whitened `A` and `b` (Matrix Market plus one value per line).
    pub fn write_matrix_market(&self, matrix: impl AsRef<Path>, rhs: impl AsRef<Path>) -> Result<()> {
        self.assembly.lsq.write_matrix_market(matrix, rhs)
    }
}

/// Correction computed by one linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub positions: Vec<Vector3<f64>>,
    pub arcs: Vec<f64>,
    /// Diagonal of the position marginal covariance, when requested.
    pub position_variances: Option<Vec<Vector3<f64>>>,
    /// `|A x - b|^2` at the solution of the linear problem.
    pub linear_cost: f64,
    /// `|b|^2`, the cost at zero delta.
    pub cost_at_zero: f64,
}

impl Step {
    pub fn max_position_delta(&self) -> f64 {
        self.positions.iter().map(|d| d.amax()).fold(0.0, f64::max)
    }
}

fn whitening_factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cov.clone().cholesky().map(|c| c.unpack())
}

/// Lower Cholesky factor of a 3x3 covariance, lifting tiny or negative
/// eigenvalues (left over from fixed-solution conditioning) to a floor.
fn position_factor(cov: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let sym = (cov + cov.transpose()) * 0.5;
    if let Some(c) = sym.cholesky() {
        return Ok(c.unpack());
    }
    let eig = sym.symmetric_eigen();
    let floor = 1e-12 * eig.eigenvalues.abs().max().max(1e-12);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let fixed = eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose();
    fixed
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Assembly("position prior covariance is not positive definite".into()))
}

fn assemble(
    session: &Session,
    arcs: &ArcSet,
    problem: &GssmProblem,
    layout: &Layout,
    order: &[usize],
    lin: &Linearization,
) -> Result<Assembly> {
    let n = session.len();
    let mut lsq = SparseLsq::new(layout.ncols());
    let mut blocks = Vec::with_capacity(arcs.len() + 2 * n);
    let mut epochs = vec![EpochInfo::default(); n];

    for (a, prior) in problem.arc_priors.iter().enumerate() {
        if !(prior.var > 0.0) || !prior.var.is_finite() {
            return Err(Error::Assembly(format!("arc {a} prior variance {} is not positive", prior.var)));
        }
        let w = 1.0 / prior.var.sqrt();
        let start = lsq.nrows();
        lsq.push_row(&[(layout.arc_col(a), w)], w * (prior.mean - lin.arcs[a]));
        blocks.push(RowBlock {
            kind: BlockKind::ArcPrior,
            index: a,
            rows: start..lsq.nrows(),
        });
    }

    for &k in order {
        let prior = &problem.position_priors[k];
        let l = position_factor(&prior.cov)?;
        let linv = l
            .try_inverse()
            .ok_or_else(|| Error::Assembly(format!("epoch {k}: singular position prior")))?;
        let r = linv * (prior.mean - lin.positions[k]);
        let c = layout.pos_col(k);
        let start = lsq.nrows();
        for i in 0..3 {
            let entries: Vec<(usize, f64)> = (0..=i).map(|j| (c + j, linv[(i, j)])).collect();
            lsq.push_row(&entries, r[i]);
        }
        blocks.push(RowBlock {
            kind: BlockKind::PositionPrior,
            index: k,
            rows: start..lsq.nrows(),
        });
    }

    for &k in order {
        let epoch = &session.epochs[k];
        let dd = match build_dd_system(epoch, &lin.positions[k], &session.config) {
            Ok(dd) => dd,
            Err(Error::NoGeometry { .. }) => continue,
            Err(e) => return Err(e),
        };
        let row_arcs = arcs.row_arcs(k, &dd)?;
        let keep: Vec<usize> = (0..dd.len())
            .filter(|&i| !problem.is_excluded(k, &dd.rows[i].key()))
            .collect();
        if keep.is_empty() {
            continue;
        }

        let mut local_arcs: Vec<usize> = keep.iter().filter_map(|&i| row_arcs[i]).collect();
        local_arcs.sort_unstable();
        local_arcs.dedup();
        let local_col: BTreeMap<usize, usize> =
            local_arcs.iter().enumerate().map(|(j, &a)| (a, 3 + j)).collect();

        let m = keep.len();
        let mut jac = DMatrix::zeros(m, 3 + local_arcs.len());
        let mut y = DVector::zeros(m);
        for (r, &i) in keep.iter().enumerate() {
            jac.view_mut((r, 0), (1, 3)).copy_from(&dd.h_pos.row(i));
            y[r] = dd.y[i];
            if let Some(a) = row_arcs[i] {
                let lambda = dd.rows[i].wavelength;
                jac[(r, local_col[&a])] = lambda;
                y[r] -= lambda * lin.arcs[a];
            }
        }
        let cov = DMatrix::from_fn(m, m, |a, b| dd.r_dd[(keep[a], keep[b])]);
        let l = whitening_factor(&cov)
            .ok_or_else(|| Error::Assembly(format!("epoch {k}: measurement covariance not positive definite")))?;
        let wj = l
            .solve_lower_triangular(&jac)
            .ok_or_else(|| Error::Assembly(format!("epoch {k}: singular measurement covariance")))?;
        let wy = l.solve_lower_triangular(&y).expect("same factor as above");

        let c = layout.pos_col(k);
        let global: Vec<usize> = (0..3)
            .map(|j| c + j)
            .chain(local_arcs.iter().map(|&a| layout.arc_col(a)))
            .collect();
        let start = lsq.nrows();
        let mut entries = Vec::with_capacity(global.len());
        for r in 0..m {
            entries.clear();
            entries.extend(global.iter().enumerate().map(|(j, &g)| (g, wj[(r, j)])));
            lsq.push_row(&entries, wy[r]);
        }
        blocks.push(RowBlock {
            kind: BlockKind::Measurement,
            index: k,
            rows: start..lsq.nrows(),
        });
        epochs[k] = EpochInfo {
            arcs: local_arcs,
            n_dd: m,
        };
    }

    if let Some(psd) = problem.random_walk_psd {
        for k in 0..n.saturating_sub(1) {
            let dt = session.epochs[k + 1].time - session.epochs[k].time;
            let w = 1.0 / (psd * dt.abs()).sqrt();
            if !w.is_finite() {
                return Err(Error::Assembly(format!("random walk weight at epoch {k} is not finite")));
            }
            let (c0, c1) = (layout.pos_col(k), layout.pos_col(k + 1));
            let d = lin.positions[k] - lin.positions[k + 1];
            let start = lsq.nrows();
            for i in 0..3 {
                lsq.push_row(&[(c0 + i, -w), (c1 + i, w)], w * d[i]);
            }
            blocks.push(RowBlock {
                kind: BlockKind::Motion,
                index: k,
                rows: start..lsq.nrows(),
            });
        }
    }

    Ok(Assembly { lsq, blocks, epochs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GssmSolution {
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    /// Diagonal of the position covariance from the last linear solve.
    pub position_variances: Option<Vec<Vector3<f64>>>,
    /// One value per arc, cycles, indexed by arc id.
    pub arc_values: Vec<f64>,
    pub arc_fixed: Vec<Option<i64>>,
    pub status: Vec<FixStatus>,
    pub n_dd: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted squared residual at the forward trajectory.
    pub cost_initial: f64,
    /// Weighted squared residual at the returned solution.
    pub cost_final: f64,
}

impl GssmSolution {
    pub fn solutions(&self) -> Vec<EpochSolution> {
        (0..self.positions.len())
            .map(|k| EpochSolution {
                t: self.times[k],
                pos: self.positions[k],
                cov: self
                    .position_variances
                    .as_ref()
                    .map(|v| Matrix3::from_diagonal(&v[k]))
                    .unwrap_or_else(Matrix3::zeros),
                status: self.status[k],
                n_dd: self.n_dd[k],
            })
            .collect()
    }

    /// Ambiguity of every arc at every epoch it spans, as a per-epoch series.
    pub fn bias_series(&self, arcs: &ArcSet) -> Vec<BTreeMap<usize, f64>> {
        let mut out = vec![BTreeMap::new(); self.positions.len()];
        for a in arcs.iter() {
            for series in &mut out[a.start..=a.end] {
                series.insert(a.id, self.arc_values[a.id]);
            }
        }
        out
    }
}

/// Gauss-Newton on the system: solve, move the linearization point, reassemble.
///
/// A step that would raise the weighted cost is halved until it does not, so
/// the final cost never exceeds the cost at the forward trajectory. Stops when
/// the largest position correction drops below `tol_m` or after `max_iters`
/// solves; in the latter case the last iterate is returned with
/// `converged == false`.
pub fn solve_gssm(sys: &GssmSystem<'_>, max_iters: usize, tol_m: f64) -> Result<GssmSolution> {
    let cost_initial = sys.assembly.cost();
    let mut current = sys.clone();
    let mut cost = cost_initial;
    let mut iterations = 0;
    let mut converged = false;
    let mut variances = None;

    while iterations < max_iters {
        let step = current.solve_step()?;
        iterations += 1;
        variances = step.position_variances.clone();
        let max_delta = step.max_position_delta();

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let cand = current.relinearize(current.linearization.stepped(&step, alpha))?;
            let c = cand.assembly.cost();
            if c <= cost {
                accepted = Some((cand, c));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, c)) = accepted else {
            // no decrease along the step: the current point is a minimum to
            // working precision, or the model is too nonlinear here
            converged = max_delta < tol_m;
            break;
        };
        current = next;
        cost = c;
        if alpha * max_delta < tol_m {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("GSSM stopped after {iterations} iteration(s) without meeting tol {tol_m} m");
    }

    let status = current
        .assembly
        .epochs
        .iter()
        .map(|e| {
            if e.n_dd == 0 {
                FixStatus::None
            } else if !e.arcs.is_empty()
                && e.arcs.iter().all(|&a| sys.problem.arc_priors[a].fixed.is_some())
            {
                FixStatus::Fixed
            } else {
                FixStatus::Float
            }
        })
        .collect();

    Ok(GssmSolution {
        times: sys.session.times(),
        positions: current.linearization.positions.clone(),
        position_variances: variances,
        arc_values: current.linearization.arcs.clone(),
        arc_fixed: sys.problem.arc_priors.iter().map(|a| a.fixed).collect(),
        status,
        n_dd: current.assembly.epochs.iter().map(|e| e.n_dd).collect(),
        iterations,
        converged,
        cost_initial,
        cost_final: cost,
    })
}
