mod common;

use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;
use rtkgssm::dd_engine::{build_dd_system, code_solution, RowKind};
use rtkgssm::obs_model::{Band, SatId};
use rtkgssm::sim::Scenario;

use common::gen;

#[test]
fn rows_ordered_carrier_then_code_by_band() {
    let g = gen(&Scenario::open_sky(4, 1));
    let e = &g.session.epochs[0];
    let dd = build_dd_system(e, &g.truth[0].pos(), &g.session.config).unwrap();
    let tags: Vec<(RowKind, Band)> = dd.rows.iter().map(|r| (r.kind, r.band)).collect();
    let mut expect = Vec::new();
    for kind in [RowKind::Carrier, RowKind::Code] {
        for band in [Band::L1, Band::L2] {
            expect.extend(std::iter::repeat_n((kind, band), 7));
        }
    }
    assert_eq!(tags, expect);
    assert_eq!(dd.y.len(), 28);
}

#[test]
fn reference_is_highest_rover_elevation() {
    let g = gen(&Scenario::open_sky(5, 3));
    for e in &g.session.epochs {
        let dd = build_dd_system(e, &g.session.config.rover_initial_guess, &g.session.config).unwrap();
        let top = e
            .rover
            .iter()
            .max_by(|a, b| a.elevation.total_cmp(&b.elevation))
            .unwrap();
        for b in &dd.bands {
            assert_eq!(b.reference(), &top.id);
        }
        assert!(dd.rows.iter().all(|r| r.reference == top.id));
    }
}

#[test]
fn covariance_is_reference_plus_other() {
    let g = gen(&Scenario::small(6, 1));
    let cfg = &g.session.config;
    let e = &g.session.epochs[0];
    let dd = build_dd_system(e, &cfg.rover_initial_guess, cfg).unwrap();
    let var = |kind: RowKind, id: &SatId| {
        let el = e.rover_sat(id).unwrap().elevation;
        let s = match kind {
            RowKind::Carrier => cfg.noise.carrier_a_m + cfg.noise.carrier_b_m / el.sin(),
            RowKind::Code => cfg.noise.code_a_m + cfg.noise.code_b_m / el.sin(),
        };
        2.0 * s * s
    };
    for (i, ri) in dd.rows.iter().enumerate() {
        for (j, rj) in dd.rows.iter().enumerate() {
            let same_block = ri.kind == rj.kind && ri.band == rj.band;
            let expect = if !same_block {
                0.0
            } else if i == j {
                var(ri.kind, &ri.reference) + var(ri.kind, &ri.other)
            } else {
                var(ri.kind, &ri.reference)
            };
            assert!((dd.r_dd[(i, j)] - expect).abs() <= 1e-15 + 1e-12 * expect, "({i},{j})");
        }
    }
    assert!(dd.r_dd.clone().cholesky().is_some());
}

#[test]
fn zero_noise_residuals_at_truth() {
    let g = gen(&Scenario {
        bands: vec![Band::L1, Band::L2],
        ..Scenario::noiseless(8, 20)
    });
    let mut worst_carrier = 0.0f64;
    let mut worst_code = 0.0f64;
    for (k, e) in g.session.epochs.iter().enumerate() {
        let dd = build_dd_system(e, &g.truth[k].pos(), &g.session.config).unwrap();
        for (i, r) in dd.rows.iter().enumerate() {
            match r.kind {
                RowKind::Carrier => {
                    let n = g.dd_integer(k, r.band, &r.reference, &r.other).unwrap() as f64;
                    worst_carrier = worst_carrier.max((dd.y[i] - r.wavelength * n).abs());
                }
                RowKind::Code => worst_code = worst_code.max(dd.y[i].abs()),
            }
        }
    }
    // Carrier values stay near zero cycles, so their differences are exact to
    // well below a nanometer. Code values are ~2.2e7 m with a 3.7e-9 m spacing;
    // four of them enter each double difference.
    assert!(worst_carrier <= 1e-9, "carrier {worst_carrier:e}");
    assert!(worst_code <= 1e-8, "code {worst_code:e}");
}

#[test]
fn code_solution_recovers_truth_without_noise() {
    let g = gen(&Scenario::noiseless(9, 3));
    for (k, e) in g.session.epochs.iter().enumerate() {
        let p = code_solution(e, &g.session.config.rover_initial_guess, &g.session.config).unwrap();
        assert!((p - g.truth[k].pos()).norm() < 1e-6);
    }
}

fn los_rows(rover: &Vector3<f64>, sats: &[Vector3<f64>]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(sats.len(), 3);
    for (i, s) in sats.iter().enumerate() {
        let d = s - rover;
        let r = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        for c in 0..3 {
            e[(i, c)] = d[c] / r;
        }
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobian_is_minus_d_e(seed in 0u64..500, k in 0usize..5, dx in -50.0f64..50.0, dy in -50.0f64..50.0, dz in -50.0f64..50.0) {
        let g = gen(&Scenario::open_sky(seed, 5));
        let e = &g.session.epochs[k];
        let lin = g.truth[k].pos() + Vector3::new(dx, dy, dz);
        let dd = build_dd_system(e, &lin, &g.session.config).unwrap();
        for (i, r) in dd.rows.iter().enumerate() {
            let sr = e.rover_sat(&r.reference).unwrap().pos_ecef;
            let so = e.rover_sat(&r.other).unwrap().pos_ecef;
            let rows = los_rows(&lin, &[sr, so]);
            for c in 0..3 {
                let expect = -(rows[(0, c)] - rows[(1, c)]);
                prop_assert!((dd.h_pos[(i, c)] - expect).abs() < 1e-12);
            }
        }
        for b in &dd.bands {
            for row in b.los.row_iter() {
                prop_assert!((row.norm() - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(dd.r_dd.clone().cholesky().is_some());
    }

    #[test]
    fn residual_change_is_linear(seed in 0u64..500, ux in -1.0f64..1.0, uy in -1.0f64..1.0, uz in -1.0f64..1.0) {
        let u = Vector3::new(ux, uy, uz);
        prop_assume!(u.norm() > 1e-3);
        let delta = u.normalize() * 0.1;
        let g = gen(&Scenario::open_sky(seed, 1));
        let e = &g.session.epochs[0];
        let x = g.session.config.rover_initial_guess;
        let a = build_dd_system(e, &x, &g.session.config).unwrap();
        let b = build_dd_system(e, &(x + delta), &g.session.config).unwrap();
        let dy = &b.y - &a.y;
        let pred = -(&a.h_pos * nalgebra::DVector::from_column_slice(delta.as_slice()));
        for i in 0..dy.len() {
            prop_assert!((dy[i] - pred[i]).abs() <= 1e-6 * delta.norm(), "row {i}: {} vs {}", dy[i], pred[i]);
        }
    }
}
