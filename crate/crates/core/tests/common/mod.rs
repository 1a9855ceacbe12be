#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rtkgssm::ambiguity::ArcSet;
use rtkgssm::gssm::{build_gssm, GssmConfig, GssmSystem};
use rtkgssm::kf_baseline::{run_forward, FilterOptions, FilterTrajectory};
use rtkgssm::obs_model::{Method, Session};
use rtkgssm::pipeline::session_arcs;
use rtkgssm::sim::{generate, Generated, Scenario};

pub fn gen(s: &Scenario) -> Generated {
    generate(s).expect("scenario generates")
}

pub fn forward(session: &Session) -> (ArcSet, FilterTrajectory) {
    let arcs = session_arcs(session);
    let fwd = run_forward(session, &arcs, &FilterOptions::default()).expect("forward pass");
    (arcs, fwd)
}

pub fn system<'a>(session: &'a Session, arcs: &'a ArcSet, fwd: &FilterTrajectory, cfg: &GssmConfig) -> GssmSystem<'a> {
    build_gssm(session, fwd, arcs, cfg).expect("gssm assembles")
}

pub fn methods(list: &[Method]) -> BTreeSet<Method> {
    list.iter().copied().collect()
}

pub fn max_abs_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Largest coordinate difference relative to the coordinate magnitude.
pub fn max_rel_diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..3).map(move |i| (x[i] - y[i]).abs() / y[i].abs().max(1.0)))
        .fold(0.0, f64::max)
}
