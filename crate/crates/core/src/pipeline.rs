//! Stage orchestration: arcs, forward and backward filters, their combination,
//! the batch solution, and the files written for each.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Deserialize;

use crate::ambiguity::{track_arcs, ArcSet};
use crate::dd_engine::build_dd_system;
use crate::error::{Error, Result};
use crate::gssm::{build_gssm, solve_gssm, GssmConfig, GssmSolution};
use crate::kf_baseline::{combine_weighted, run_backward, run_forward, EpochSolution, FilterOptions, FilterTrajectory};
use crate::metrics::{method_metrics, write_metrics, MetricsReport, TruthSeries};
use crate::obs_model::{parse_session, read_truth, write_solution, Method, Session, SolutionRow};

/// Optional settings file; every key mirrors a command-line flag.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub out: Option<PathBuf>,
    pub gssm_iters: Option<usize>,
    pub gssm_tol: Option<f64>,
    pub fix_ratio: Option<f64>,
    pub dump_system: Option<bool>,
}

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub truth: Option<PathBuf>,
    pub methods: BTreeSet<Method>,
    pub out: PathBuf,
    pub gssm_iters: Option<usize>,
    pub gssm_tol: Option<f64>,
    pub fix_ratio: Option<f64>,
    pub dump_system: bool,
}

impl RunConfig {
    /// Merges command-line values over the file values.
    pub fn resolve(file: FileConfig, flags: FileConfig) -> Result<Self> {
        let input = flags
            .input
            .or(file.input)
            .ok_or_else(|| Error::Config("no input session given".into()))?;
        let out = flags
            .out
            .or(file.out)
            .ok_or_else(|| Error::Config("no output directory given".into()))?;
        let methods: BTreeSet<Method> = flags
            .methods
            .or(file.methods)
            .unwrap_or_else(|| vec![Method::Fwd, Method::Fbkf, Method::Gssm])
            .into_iter()
            .collect();
        if methods.is_empty() {
            return Err(Error::Config("at least one method must be selected".into()));
        }
        let cfg = Self {
            input,
            truth: flags.truth.or(file.truth),
            methods,
            out,
            gssm_iters: flags.gssm_iters.or(file.gssm_iters),
            gssm_tol: flags.gssm_tol.or(file.gssm_tol),
            fix_ratio: flags.fix_ratio.or(file.fix_ratio),
            dump_system: flags.dump_system.or(file.dump_system).unwrap_or(false),
        };
        if cfg.gssm_iters == Some(0) {
            return Err(Error::Config("--gssm-iters must be at least 1".into()));
        }
        if cfg.gssm_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("--gssm-tol must be positive".into()));
        }
        if cfg.fix_ratio.is_some_and(|r| !(r >= 1.0)) {
            return Err(Error::Config("--fix-ratio must be at least 1".into()));
        }
        Ok(cfg)
    }
}

/// Adds the stages each selected method depends on.
pub fn resolve_methods(selected: &BTreeSet<Method>) -> BTreeSet<Method> {
    let mut out = selected.clone();
    if out.contains(&Method::Gssm) {
        out.insert(Method::Fwd);
    }
    if out.contains(&Method::Fbkf) {
        out.insert(Method::Fwd);
        out.insert(Method::Bwd);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub filter: FilterOptions,
    pub gssm: GssmConfig,
}

impl EstimateOptions {
    pub fn for_session(session: &Session) -> Self {
        Self {
            filter: FilterOptions::default(),
            gssm: GssmConfig::from_session(session),
        }
    }

    pub fn with_fix_ratio(mut self, ratio: f64) -> Self {
        self.filter.fix.ratio_threshold = ratio;
        if let Some(p) = self.gssm.fix.as_mut() {
            p.ratio_threshold = ratio;
        }
        self
    }
}

/// Everything computed for one session.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub arcs: ArcSet,
    pub fwd: Option<FilterTrajectory>,
    pub bwd: Option<FilterTrajectory>,
    /// Combined solution and whether each epoch fell back to the forward value.
    pub fbkf: Option<Vec<(EpochSolution, bool)>>,
    pub gssm: Option<GssmSolution>,
}

impl Estimates {
    pub fn series(&self, method: Method) -> Option<Vec<EpochSolution>> {
        match method {
            Method::Fwd => self.fwd.as_ref().map(FilterTrajectory::solutions),
            Method::Bwd => self.bwd.as_ref().map(FilterTrajectory::solutions),
            Method::Fbkf => self.fbkf.as_ref().map(|v| v.iter().map(|(s, _)| *s).collect()),
            Method::Gssm => self.gssm.as_ref().map(GssmSolution::solutions),
        }
    }
}

/// Segments the session into ambiguity arcs.
pub fn session_arcs(session: &Session) -> ArcSet {
    let guess = session.config.rover_initial_guess;
    let systems: Vec<_> = session
        .epochs
        .iter()
        .map(|e| build_dd_system(e, &guess, &session.config).ok())
        .collect();
    track_arcs(&session.epochs, &systems)
}

/// Runs the selected methods and the stages they depend on.
pub fn estimate(session: &Session, methods: &BTreeSet<Method>, opts: &EstimateOptions) -> Result<Estimates> {
    let methods = resolve_methods(methods);
    let mut arcs = session_arcs(session);
    let mut est = Estimates {
        arcs: arcs.clone(),
        fwd: None,
        bwd: None,
        fbkf: None,
        gssm: None,
    };
    if methods.contains(&Method::Fwd) {
        est.fwd = Some(run_forward(session, &arcs, &opts.filter)?);
    }
    if methods.contains(&Method::Bwd) {
        est.bwd = Some(run_backward(session, &arcs, &opts.filter)?);
    }
    if methods.contains(&Method::Fbkf) {
        let (f, b) = (est.fwd.as_ref().unwrap(), est.bwd.as_ref().unwrap());
        let combined = combine_weighted(&f.solutions(), &b.solutions())?;
        let fallbacks = combined.iter().filter(|(_, fb)| *fb).count();
        if fallbacks > 0 {
            log::warn!("{fallbacks} epoch(s) used the forward solution: combination failed");
        }
        est.fbkf = Some(combined);
    }
    if methods.contains(&Method::Gssm) {
        let fwd = est.fwd.as_ref().unwrap();
        let sys = build_gssm(session, fwd, &arcs, &opts.gssm)?;
        let s = opts.gssm.settings;
        let sol = solve_gssm(&sys, s.max_iters, s.tol_m)?;
        for (a, arc) in arcs.arcs.iter_mut().enumerate() {
            arc.fixed = sol.arc_fixed[a];
        }
        est.gssm = Some(sol);
    }
    if let Some(fwd) = &est.fwd {
        for arc in &mut arcs.arcs {
            if let Some(&(float, var)) = fwd.arc_estimates.get(&arc.id) {
                arc.float = float;
                arc.variance = var;
            }
        }
    }
    est.arcs = arcs;
    Ok(est)
}

/// Solution rows of one method, with ENU errors when a truth series is given.
pub fn solution_rows(
    method: Method,
    series: &[EpochSolution],
    truth: Option<&TruthSeries>,
    interval: f64,
) -> Vec<SolutionRow> {
    series
        .iter()
        .map(|s| SolutionRow {
            t: s.t,
            method,
            pos: s.pos,
            enu_err: truth.and_then(|tr| {
                tr.nearest(s.t, 0.5 * interval)
                    .map(|r| tr.frame().delta_to_enu(&(s.pos - r.pos())))
            }),
            fix_status: s.status,
            n_dd: s.n_dd,
        })
        .collect()
}

pub fn solution_path(out: &Path, method: Method) -> PathBuf {
    out.join(format!("solution_{method}.csv"))
}

/// Metrics of every series against the truth.
pub fn metrics_report(
    est: &Estimates,
    truth: &TruthSeries,
    interval: f64,
) -> Result<MetricsReport> {
    let mut report = BTreeMap::new();
    for m in Method::ALL {
        if let Some(series) = est.series(m) {
            let pts: Vec<(f64, Vector3<f64>)> = series.iter().map(|s| (s.t, s.pos)).collect();
            report.insert(m.tag().to_string(), method_metrics(truth, &pts, interval)?);
        }
    }
    Ok(report)
}

/// Reads the inputs, runs every stage and writes the outputs.
pub fn run(cfg: &RunConfig) -> Result<Estimates> {
    if !cfg.input.is_file() {
        return Err(Error::io(
            &cfg.input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input session not found"),
        ));
    }
    if let Some(t) = cfg.truth.as_ref().filter(|t| !t.is_file()) {
        return Err(Error::io(
            t,
            std::io::Error::new(std::io::ErrorKind::NotFound, "truth file not found"),
        ));
    }
    let session = parse_session(&cfg.input)?;
    let truth = cfg
        .truth
        .as_ref()
        .map(|p| read_truth(p).and_then(TruthSeries::new))
        .transpose()?;

    let mut opts = EstimateOptions::for_session(&session);
    if let Some(r) = cfg.fix_ratio {
        opts = opts.with_fix_ratio(r);
    }
    if let Some(n) = cfg.gssm_iters {
        opts.gssm.settings.max_iters = n;
    }
    if let Some(t) = cfg.gssm_tol {
        opts.gssm.settings.tol_m = t;
    }

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let est = estimate(&session, &cfg.methods, &opts)?;
    let interval = session.config.sampling_interval_s;

    for m in Method::ALL {
        if let Some(series) = est.series(m) {
            let rows = solution_rows(m, &series, truth.as_ref(), interval);
            write_solution(solution_path(&cfg.out, m), &rows)?;
        }
    }
    est.arcs.write_csv(cfg.out.join("arcs.csv"))?;
    if cfg.dump_system {
        if let Some(fwd) = &est.fwd {
            let arcs = session_arcs(&session);
            let sys = build_gssm(&session, fwd, &arcs, &opts.gssm)?;
            sys.write_matrix_market(cfg.out.join("gssm_a.mtx"), cfg.out.join("gssm_b.txt"))?;
        }
    }
    if let Some(truth) = &truth {
        let report = metrics_report(&est, truth, interval)?;
        write_metrics(cfg.out.join("metrics.json"), &report)?;
    }
    Ok(est)
}
