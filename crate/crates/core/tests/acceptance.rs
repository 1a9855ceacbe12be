//! End-to-end acceptance run. Every criterion prints one PASS/FAIL line with
//! its measured numbers; the test fails if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::Vector3;
use rtkgssm::gssm::{build_gssm, solve_gssm, GssmConfig};
use rtkgssm::kf_baseline::{run_backward, run_forward, FilterOptions};
use rtkgssm::metrics::{method_metrics, stretch_roughness, TruthSeries};
use rtkgssm::obs_model::Method;
use rtkgssm::pipeline::{estimate, session_arcs, EstimateOptions};
use rtkgssm::sim::{dense_batch_oracle, rts_smoother_oracle, Scenario};

use common::{forward, gen, max_abs_diff, max_rel_diff, methods, system};

struct Verdict {
    passed: bool,
    detail: String,
}

fn report(results: &mut Vec<(usize, bool)>, id: usize, name: &str, v: Verdict) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id} ({name}): {}", v.detail);
    results.push((id, v.passed));
}

/// Every `(cost_initial, cost_final)` pair seen in the run.
type Costs = Vec<(f64, f64)>;

fn oracle_equivalence(costs: &mut Costs) -> Verdict {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut max_arcs = 0;
    let mut max_epochs = 0;
    for seed in 0..50u64 {
        let n = 1 + (seed as usize * 7) % 20;
        let g = gen(&Scenario::small(10_000 + seed, n));
        let (arcs, fwd) = forward(&g.session);
        let sys = system(&g.session, &arcs, &fwd, &GssmConfig::from_session(&g.session));
        let sol = solve_gssm(&sys, 1, 1e-4).expect("solve");
        let dense = dense_batch_oracle(&g.session, &arcs, &sys.problem, &sys.linearization).expect("oracle");
        worst = worst.max(max_rel_diff(&sol.positions, &dense.positions));
        max_arcs = max_arcs.max(arcs.len());
        max_epochs = max_epochs.max(n);
        costs.push((sol.cost_initial, sol.cost_final));
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict {
        passed: worst <= 1e-8 && secs < 10.0 && max_arcs <= 10 && max_epochs <= 20,
        detail: format!(
            "50 sessions, n <= {max_epochs}, arcs <= {max_arcs}, max relative diff {worst:.2e} (<= 1e-8), {secs:.2} s (< 10 s)"
        ),
    }
}

fn smoother_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    let mut worst_delta = 0.0f64;
    for seed in 0..20u64 {
        let n = 2 + (seed as usize * 3) % 19;
        let g = gen(&Scenario::small(20_000 + seed, n));
        let (arcs, fwd) = forward(&g.session);
        let sys = system(&g.session, &arcs, &fwd, &GssmConfig::from_session(&g.session));
        // one linear solve with the line-of-sight rows held at the linearization point
        let step = sys.solve_step().expect("step");
        let got: Vec<Vector3<f64>> = sys
            .linearization
            .positions
            .iter()
            .zip(&step.positions)
            .map(|(p, d)| p + d)
            .collect();
        let rts = rts_smoother_oracle(&g.session, &arcs, &sys.problem, &sys.linearization).expect("smoother");
        worst = worst.max(max_abs_diff(&got, &rts.positions));
        // corrections compared before they are added to ~6e6 m coordinates
        let rts_delta: Vec<Vector3<f64>> = rts
            .positions
            .iter()
            .zip(&sys.linearization.positions)
            .map(|(r, p)| r - p)
            .collect();
        worst_delta = worst_delta.max(max_abs_diff(&step.positions, &rts_delta));
    }
    Verdict {
        passed: worst <= 1e-6,
        detail: format!(
            "20 sessions, max position diff {worst:.2e} m (<= 1e-6 m), max correction diff {worst_delta:.2e} m"
        ),
    }
}

fn filter_health() -> Verdict {
    let g = gen(&Scenario::matched_dynamics(1, 1000));
    let arcs = session_arcs(&g.session);
    let opts = FilterOptions::default();
    let fwd = run_forward(&g.session, &arcs, &opts).expect("forward");
    let bwd = run_backward(&g.session, &arcs, &opts).expect("backward");
    let psd = fwd
        .epochs
        .iter()
        .chain(&bwd.epochs)
        .all(|e| e.state.covariance_is_psd());
    let (nis, dof) = fwd.nis_totals();
    let ratio = nis / dof as f64;
    Verdict {
        passed: psd && (0.7..=1.3).contains(&ratio),
        detail: format!(
            "1000 epochs, all covariances PSD: {psd}, mean NIS per DD dimension {ratio:.3} over {dof} rows (in [0.7, 1.3])"
        ),
    }
}

struct CanyonRun {
    v_gssm: f64,
    v_fbkf: f64,
    rough_gssm: f64,
    rough_fbkf: f64,
}

fn canyon_runs(costs: &mut Costs) -> (Vec<CanyonRun>, f64) {
    let t0 = Instant::now();
    let runs = (0..20u64)
        .map(|i| {
            let g = gen(&Scenario::urban_canyon(1000 + i));
            let opts = EstimateOptions::for_session(&g.session);
            let est = estimate(&g.session, &methods(&[Method::Fbkf, Method::Gssm]), &opts).expect("estimate");
            let gs = est.gssm.as_ref().unwrap();
            costs.push((gs.cost_initial, gs.cost_final));

            let interval = g.session.config.sampling_interval_s;
            let truth = TruthSeries::new(g.truth.clone()).unwrap();
            let points = |m: Method| -> Vec<(f64, Vector3<f64>)> {
                est.series(m).unwrap().iter().map(|s| (s.t, s.pos)).collect()
            };
            let up = |m: Method| -> Vec<f64> {
                truth
                    .enu_errors(&points(m), 0.5 * interval)
                    .iter()
                    .map(|(_, e)| e.z)
                    .collect()
            };
            let flagged: Vec<bool> = g.session.epochs.iter().map(|e| e.float_only).collect();
            CanyonRun {
                v_gssm: method_metrics(&truth, &points(Method::Gssm), interval).unwrap().v_rmse_m,
                v_fbkf: method_metrics(&truth, &points(Method::Fbkf), interval).unwrap().v_rmse_m,
                rough_gssm: stretch_roughness(&up(Method::Gssm), &flagged).expect("float-only stretch"),
                rough_fbkf: stretch_roughness(&up(Method::Fbkf), &flagged).expect("float-only stretch"),
            }
        })
        .collect();
    (runs, t0.elapsed().as_secs_f64())
}

fn vertical_trend(runs: &[CanyonRun], secs: f64) -> Verdict {
    let wins = runs.iter().filter(|r| r.v_gssm <= r.v_fbkf).count();
    let n = runs.len() as f64;
    let mean_g = runs.iter().map(|r| r.v_gssm).sum::<f64>() / n;
    let mean_f = runs.iter().map(|r| r.v_fbkf).sum::<f64>() / n;
    for (i, r) in runs.iter().enumerate() {
        println!(
            "    canyon seed {}: vertical RMSE gssm {:.4} m, fbkf {:.4} m",
            1000 + i,
            r.v_gssm,
            r.v_fbkf
        );
    }
    Verdict {
        passed: wins >= 16 && mean_g < mean_f && secs < 60.0,
        detail: format!(
            "GSSM vertical RMSE <= FBKF in {wins}/20 runs (need 16), mean {mean_g:.4} m vs {mean_f:.4} m (need strictly lower), {secs:.1} s (< 60 s)"
        ),
    }
}

fn smoothness_trend(runs: &[CanyonRun]) -> Verdict {
    let wins = runs.iter().filter(|r| r.rough_gssm <= r.rough_fbkf).count();
    let n = runs.len() as f64;
    let mean_g = runs.iter().map(|r| r.rough_gssm).sum::<f64>() / n;
    let mean_f = runs.iter().map(|r| r.rough_fbkf).sum::<f64>() / n;
    Verdict {
        passed: wins >= 16,
        detail: format!(
            "float-only up-error first-difference RMS GSSM <= FBKF in {wins}/20 runs (need 16), mean {mean_g:.4} m vs {mean_f:.4} m"
        ),
    }
}

fn cost_optimality(costs: &Costs) -> Verdict {
    let bad = costs.iter().filter(|(c0, c1)| !(c1 <= c0)).count();
    let worst = costs
        .iter()
        .map(|(c0, c1)| (c1 - c0) / c0.max(1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Verdict {
        passed: bad == 0 && !costs.is_empty(),
        detail: format!(
            "{} solves, final cost above initial in {bad}, largest relative change {worst:.2e}",
            costs.len()
        ),
    }
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn scale(costs: &mut Costs) -> Verdict {
    let g = gen(&Scenario::large(7));
    let arcs = session_arcs(&g.session);
    let opts = EstimateOptions::for_session(&g.session);
    let fwd = run_forward(&g.session, &arcs, &opts.filter).expect("forward");
    let t0 = Instant::now();
    let sys = build_gssm(&g.session, &fwd, &arcs, &opts.gssm).expect("assemble");
    let s = opts.gssm.settings;
    let sol = solve_gssm(&sys, s.max_iters, s.tol_m).expect("solve");
    let secs = t0.elapsed().as_secs_f64();
    costs.push((sol.cost_initial, sol.cost_final));
    let peak = peak_rss_kib();
    let mib = peak.map(|k| k as f64 / 1024.0);
    Verdict {
        passed: secs < 5.0 && peak.is_some_and(|k| k < 1024 * 1024) && g.session.len() == 2000,
        detail: format!(
            "{} epochs, {} arcs, assemble + solve {secs:.2} s (< 5 s) in {} iteration(s), peak resident {} (< 1 GiB)",
            g.session.len(),
            arcs.len(),
            sol.iterations,
            mib.map_or("unavailable".to_string(), |m| format!("{m:.0} MiB")),
        ),
    }
}

fn run_cli(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_rtkgssm");
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let sim = Command::new(bin)
        .args(["sim", "--seed", "77", "--epochs", "200", "--out", &p("session.json"), "--truth", &p("truth.csv")])
        .output()
        .expect("sim runs");
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let run = Command::new(bin)
        .args([
            "run",
            "--input",
            &p("session.json"),
            "--truth",
            &p("truth.csv"),
            "--methods",
            "fwd,bwd,fbkf,gssm",
            "--out",
            &p("out"),
            "--dump-system",
        ])
        .output()
        .expect("run runs");
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let mut files = Vec::new();
    for name in ["session.json", "truth.csv"] {
        files.push((name.to_string(), std::fs::read(dir.join(name)).unwrap()));
    }
    let mut outs: Vec<_> = std::fs::read_dir(dir.join("out")).unwrap().map(|e| e.unwrap().path()).collect();
    outs.sort();
    for path in outs {
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        files.push((name, std::fs::read(&path).unwrap()));
    }
    files
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_cli(a.path());
    let second = run_cli(b.path());
    let same_names = first.iter().map(|f| &f.0).eq(second.iter().map(|f| &f.0));
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Verdict {
        passed: same_names && differing.is_empty(),
        detail: format!(
            "two sim + run invocations, {} files compared, differing: {:?}",
            first.len(),
            differing
        ),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut costs = Costs::new();

    report(&mut results, 1, "batch solution vs dense oracle", oracle_equivalence(&mut costs));
    report(&mut results, 2, "batch solution vs smoother oracle", smoother_equivalence());
    report(&mut results, 3, "filter health", filter_health());
    let (runs, secs) = canyon_runs(&mut costs);
    report(&mut results, 4, "vertical accuracy in canyons", vertical_trend(&runs, secs));
    report(&mut results, 5, "float-only smoothness", smoothness_trend(&runs));
    // the large session's cost also counts toward criterion 6
    let scale_verdict = scale(&mut costs);
    report(&mut results, 6, "cost optimality", cost_optimality(&costs));
    report(&mut results, 7, "scale", scale_verdict);
    report(&mut results, 8, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
