mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rtkgssm::ambiguity::{fix_value, rounding_ratio, try_fix, AmbiguityArc, FixPolicy, DEFAULT_RATIO};
use rtkgssm::dd_engine::{build_dd_system, NoiseModel, RowKind};
use rtkgssm::obs_model::{Band, SatId, Session};
use rtkgssm::pipeline::session_arcs;
use rtkgssm::sim::{Scenario, Slip};

use common::{forward, gen};

fn spans(session: &Session) -> Vec<(String, String, usize, usize)> {
    session_arcs(session)
        .iter()
        .map(|a| (a.reference.to_string(), a.other.to_string(), a.start, a.end))
        .collect()
}

#[test]
fn no_slip_gives_one_arc_per_pair() {
    let g = gen(&Scenario::noiseless(1, 10));
    let s = spans(&g.session);
    assert_eq!(s.len(), 5);
    for (i, (r, o, start, end)) in s.iter().enumerate() {
        assert_eq!(r, "G01");
        assert_eq!(o, &format!("G{:02}", i + 2));
        assert_eq!((*start, *end), (0, 9));
    }
}

#[test]
fn rover_slip_splits_only_that_pair() {
    let g = gen(&Scenario {
        slips: vec![Slip {
            epoch: 5,
            sat: 2,
            band: None,
        }],
        ..Scenario::noiseless(1, 10)
    });
    let s = spans(&g.session);
    assert_eq!(s.len(), 6);
    let g03: Vec<_> = s.iter().filter(|a| a.1 == "G03").collect();
    assert_eq!(g03.len(), 2);
    assert_eq!((g03[0].2, g03[0].3), (0, 4));
    assert_eq!((g03[1].2, g03[1].3), (5, 9));
    assert!(s.iter().filter(|a| a.1 != "G03").all(|a| (a.2, a.3) == (0, 9)));
}

#[test]
fn base_flag_also_splits() {
    let mut g = gen(&Scenario::noiseless(1, 10));
    let e = &mut g.session.epochs[5];
    let sat = e.base.iter_mut().find(|s| s.id == SatId::new("G03")).unwrap();
    sat.bands.get_mut(&Band::L1).unwrap().lli = true;
    let s = spans(&g.session);
    assert_eq!(s.len(), 6);
}

#[test]
fn reference_slip_splits_every_pair() {
    let g = gen(&Scenario {
        slips: vec![Slip {
            epoch: 4,
            sat: 0,
            band: None,
        }],
        ..Scenario::noiseless(1, 10)
    });
    let s = spans(&g.session);
    assert_eq!(s.len(), 10);
}

#[test]
fn reference_change_closes_all_arcs() {
    let mut g = gen(&Scenario::noiseless(1, 10));
    for e in &mut g.session.epochs[7..] {
        e.rover.iter_mut().find(|s| s.id == SatId::new("G03")).unwrap().elevation = 1.55;
    }
    let s = spans(&g.session);
    assert_eq!(s.len(), 10);
    let (before, after): (Vec<_>, Vec<_>) = s.iter().partition(|a| a.2 == 0);
    assert!(before.iter().all(|a| a.0 == "G01" && a.3 == 6));
    assert!(after.iter().all(|a| a.0 == "G03" && (a.2, a.3) == (7, 9)));
    assert!(after.iter().any(|a| a.1 == "G01"));
}

#[test]
fn gap_starts_new_arc() {
    let mut g = gen(&Scenario::noiseless(1, 10));
    for e in &mut g.session.epochs[3..5] {
        e.rover.retain(|s| s.id != SatId::new("G04"));
    }
    let s = spans(&g.session);
    let g04: Vec<_> = s.iter().filter(|a| a.1 == "G04").map(|a| (a.2, a.3)).collect();
    assert_eq!(g04, vec![(0, 2), (5, 9)]);
}

#[test]
fn fixing_examples() {
    let arc = |float: f64, variance: f64| AmbiguityArc {
        id: 0,
        band: Band::L1,
        reference: "G01".into(),
        other: "G02".into(),
        start: 0,
        end: 9,
        float,
        variance,
        fixed: None,
    };
    assert_eq!(try_fix(&arc(5.02, 0.05f64.powi(2)), DEFAULT_RATIO).fixed, Some(5));
    assert_eq!(rounding_ratio(5.5).2, 1.0);
    assert_eq!(try_fix(&arc(5.5, 0.01), DEFAULT_RATIO).fixed, None);
    assert_eq!(try_fix(&arc(5.02, 0.0025), f64::INFINITY).fixed, None);
    assert_eq!(fix_value(-11.97, 0.0004, DEFAULT_RATIO), Some(-12));
}

#[test]
fn noiseless_floats_converge_to_integers() {
    let g = gen(&Scenario::noiseless(11, 10));
    let (arcs, fwd) = forward(&g.session);
    let truth = g.arc_integers(&arcs);
    for a in arcs.iter() {
        let (float, _) = fwd.arc_estimates[&a.id];
        assert!((float - truth[a.id] as f64).abs() < 0.1, "arc {}: {float} vs {}", a.id, truth[a.id]);
    }
}

#[test]
fn filter_fixes_are_correct_and_close() {
    let g = gen(&Scenario {
        noise: NoiseModel::default().scaled(0.2),
        ..Scenario::open_sky(12, 120)
    });
    let (arcs, fwd) = forward(&g.session);
    let truth = g.arc_integers(&arcs);
    let policy = FixPolicy::default();
    let mut fixed = 0;
    for a in arcs.iter() {
        let (float, var) = fwd.arc_estimates[&a.id];
        if let Some(n) = policy.fix(float, var) {
            fixed += 1;
            assert!((float - n as f64).abs() <= 4.0 * var.sqrt());
            assert_eq!(n, truth[a.id], "arc {}", a.id);
        }
    }
    assert_eq!(fixed, arcs.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn arcs_partition_carrier_rows(seed in 0u64..1000, slips in prop::collection::vec((0usize..30, 0usize..8), 0..12)) {
        let g = gen(&Scenario {
            slips: slips.iter().map(|&(epoch, sat)| Slip { epoch, sat, band: Some(Band::L2) }).collect(),
            ..Scenario::open_sky(seed, 30)
        });
        let session = &g.session;
        let arcs = session_arcs(session);
        let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, e) in session.epochs.iter().enumerate() {
            let dd = build_dd_system(e, &session.config.rover_initial_guess, &session.config).unwrap();
            let row_arcs = arcs.row_arcs(k, &dd).unwrap();
            for ((_, r), a) in dd.rows_of(RowKind::Carrier).zip(row_arcs.iter()) {
                let a = a.unwrap();
                let arc = arcs.get(a);
                prop_assert_eq!((arc.band, &arc.reference, &arc.other), (r.band, &r.reference, &r.other));
                *hits.entry(a).or_default() += 1;
            }
        }
        for a in arcs.iter() {
            prop_assert_eq!(hits.get(&a.id).copied(), Some(a.len()));
        }
        // arcs of one pair never overlap and any boundary carries a slip
        let mut by_pair: BTreeMap<_, Vec<&AmbiguityArc>> = BTreeMap::new();
        for a in arcs.iter() {
            by_pair.entry((a.band, a.other.clone())).or_default().push(a);
        }
        for list in by_pair.values() {
            for w in list.windows(2) {
                prop_assert!(w[0].end < w[1].start);
                let slipped = g.session.epochs[w[1].start].rover.iter().any(|s| s.bands[&w[1].band].lli);
                prop_assert!(slipped);
            }
        }
        prop_assert_eq!(session_arcs(session), arcs);
    }
}
