use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtkgssm::sparse::{amd_ordering, solve_dense_qr, solve_normal, SolveOptions, SparseLsq, SymPattern};

/// Random sparse system whose first `ncols` rows form a scaled identity, so
/// the normal matrix is positive definite.
fn random_system(seed: u64, nrows: usize, ncols: usize, per_row: usize) -> SparseLsq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = SparseLsq::new(ncols);
    for j in 0..ncols {
        a.push_row(&[(j, rng.random_range(0.5..2.0))], rng.random_range(-1.0..1.0));
    }
    for _ in ncols..nrows {
        let entries: Vec<(usize, f64)> = (0..per_row)
            .map(|_| (rng.random_range(0..ncols), rng.random_range(-3.0..3.0)))
            .collect();
        a.push_row(&entries, rng.random_range(-10.0..10.0));
    }
    a
}

fn rel_err(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x - y).norm() / y.norm().max(1e-300)
}

#[test]
fn identity_gives_rhs() {
    let mut a = SparseLsq::new(5);
    let b = [3.0, -1.0, 0.25, 7.5, -2.0];
    for (i, v) in b.iter().enumerate() {
        a.push_row(&[(i, 1.0)], *v);
    }
    let s = solve_normal(&a, &SolveOptions::default()).unwrap();
    assert_eq!(s.x.as_slice(), &b);
}

#[test]
fn hand_three_by_two() {
    let mut a = SparseLsq::new(2);
    a.push_row(&[(0, 1.0)], 1.0);
    a.push_row(&[(1, 1.0)], 1.0);
    a.push_row(&[(0, 1.0), (1, 1.0)], 2.0);
    let s = solve_normal(&a, &SolveOptions::default()).unwrap();
    assert!((s.x[0] - 1.0).abs() < 1e-15);
    assert!((s.x[1] - 1.0).abs() < 1e-15);
}

#[test]
fn random_200_by_80_matches_dense_qr() {
    for seed in 0..10 {
        let a = random_system(seed, 200, 80, 4);
        let s = solve_normal(&a, &SolveOptions::default()).unwrap();
        let dense = solve_dense_qr(&a).unwrap();
        assert!(rel_err(&s.x, &dense) <= 1e-9, "seed {seed}: {:e}", rel_err(&s.x, &dense));
    }
}

#[test]
fn marginals_match_dense_inverse() {
    let a = random_system(5, 120, 30, 3);
    let cols: Vec<usize> = (0..30).step_by(3).collect();
    let s = solve_normal(
        &a,
        &SolveOptions {
            marginal_columns: Some(cols.clone()),
            natural_order: false,
        },
    )
    .unwrap();
    let (m, _) = a.to_dense();
    let inv = (m.transpose() * &m).try_inverse().unwrap();
    for (c, v) in cols.iter().zip(s.marginal_variances.unwrap()) {
        assert!((v - inv[(*c, *c)]).abs() <= 1e-10 * inv[(*c, *c)]);
    }
}

#[test]
fn diagonal_pattern_identity_order() {
    let p = SymPattern::from_edges(6, std::iter::empty());
    let perm = amd_ordering(&p);
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..6).collect::<Vec<_>>());
    assert_eq!(p.fill_count(&(0..6).collect::<Vec<_>>()), 0);
}

#[test]
fn arrow_hub_is_eliminated_at_the_end() {
    let n = 12;
    let p = SymPattern::from_edges(n, (1..n).map(|j| (0, j)));
    let natural: Vec<usize> = (0..n).collect();
    let perm = amd_ordering(&p);
    // once a single leaf remains it ties with the hub, so either may go last
    assert!(perm[n - 2..].contains(&0));
    assert!(p.fill_count(&perm) < p.fill_count(&natural));
    assert_eq!(p.fill_count(&perm), 0);
}

#[test]
fn batch_pattern_fill_is_reduced() {
    // epoch blocks of three columns, each coupled to a sliding window of arc columns
    let epochs = 60;
    let arcs = 10;
    let n = 3 * epochs + arcs;
    let mut edges = Vec::new();
    for k in 0..epochs {
        let cols: Vec<usize> = (0..3)
            .map(|i| 3 * k + i)
            .chain((0..4).map(|j| 3 * epochs + (k / 10 + j) % arcs))
            .collect();
        for (i, &a) in cols.iter().enumerate() {
            for &b in &cols[i + 1..] {
                edges.push((a, b));
            }
        }
    }
    let p = SymPattern::from_edges(n, edges);
    // the worst natural order puts the arc columns first
    let arcs_first: Vec<usize> = (3 * epochs..n).chain(0..3 * epochs).collect();
    let perm = amd_ordering(&p);
    assert!(p.fill_count(&perm) < p.fill_count(&arcs_first));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residual_is_orthogonal(seed in 0u64..100_000, nrows in 40usize..120, ncols in 5usize..40) {
        let a = random_system(seed, nrows.max(ncols), ncols, 3);
        let s = solve_normal(&a, &SolveOptions::default()).unwrap();
        let ax = a.mul_vec(s.x.as_slice());
        let r: Vec<f64> = ax.iter().zip(a.rhs()).map(|(p, b)| p - b).collect();
        let g = DVector::from_vec(a.tr_mul_vec(&r));
        let atb = DVector::from_vec(a.tr_mul_vec(a.rhs()));
        prop_assert!(g.norm() <= 1e-8 * atb.norm());
    }

    #[test]
    fn ordering_does_not_change_solution(seed in 0u64..100_000) {
        let a = random_system(seed, 150, 60, 4);
        let ordered = solve_normal(&a, &SolveOptions::default()).unwrap();
        let natural = solve_normal(&a, &SolveOptions { natural_order: true, ..Default::default() }).unwrap();
        prop_assert!(rel_err(&ordered.x, &natural.x) <= 1e-10);
    }

    #[test]
    fn row_scaling_is_invisible_after_whitening(seed in 0u64..100_000, scale in 0.01f64..100.0) {
        // a row with weight w is written as sqrt(w) * row; scaling row and rhs by
        // c while dividing the weight by c^2 gives the same whitened row
        let a = random_system(seed, 90, 30, 3);
        let mut scaled = SparseLsq::new(a.ncols());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in 0..a.nrows() {
            let (c, v) = a.row(i);
            let k = if rng.random_bool(0.5) { scale } else { 1.0 };
            let raw: Vec<(usize, f64)> = c.iter().zip(v).map(|(&c, &v)| (c, v * k)).collect();
            let w_sqrt = 1.0 / k;
            let whitened: Vec<(usize, f64)> = raw.iter().map(|&(c, v)| (c, v * w_sqrt)).collect();
            scaled.push_row(&whitened, a.rhs()[i] * k * w_sqrt);
        }
        let x0 = solve_normal(&a, &SolveOptions::default()).unwrap().x;
        let x1 = solve_normal(&scaled, &SolveOptions::default()).unwrap().x;
        prop_assert!(rel_err(&x1, &x0) <= 1e-9);
    }

    #[test]
    fn amd_is_a_permutation(n in 1usize..40, edges in prop::collection::vec((0usize..40, 0usize..40), 0..120)) {
        let p = SymPattern::from_edges(n, edges.into_iter().filter(|&(a, b)| a < n && b < n));
        let mut perm = amd_ordering(&p);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn dense_qr_agrees_on_weighted_fit() {
    // fit y = c0 + c1 t with per-point weights, compared to the closed form
    let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
    let y: Vec<f64> = t.iter().map(|t| 1.5 - 0.25 * t + (t * 3.1).sin() * 0.01).collect();
    let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64).collect();
    let mut a = SparseLsq::new(2);
    for i in 0..20 {
        let s = w[i].sqrt();
        a.push_row(&[(0, s), (1, s * t[i])], s * y[i]);
    }
    let x = solve_normal(&a, &SolveOptions::default()).unwrap().x;
    let m = DMatrix::from_fn(2, 2, |r, c| (0..20).map(|i| w[i] * t[i].powi((r + c) as i32)).sum::<f64>());
    let v = DVector::from_fn(2, |r, _| (0..20).map(|i| w[i] * t[i].powi(r as i32) * y[i]).sum::<f64>());
    let expect = m.try_inverse().unwrap() * v;
    assert!(rel_err(&x, &expect) < 1e-12);
}
