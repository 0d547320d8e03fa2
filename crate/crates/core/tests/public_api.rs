//! End-to-end checks of the public API against closed forms computed here.

use nalgebra::DMatrix;
use proptest::prelude::*;
use ridgenet_core::sparsify::{sparsify, Threshold};
use ridgenet_core::{cov_ml, prec_to_pcor, ridge_alt, DataMatrix, SymMatrix};

fn spd(p: usize, seed: Vec<f64>) -> DMatrix<f64> {
    let a = DMatrix::from_vec(p, p, seed);
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.05
}

fn sqrtm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Ridge estimate as the inverse of sqrt(lambda I + D^2/4) + D/2, D = S - lambda T.
fn oracle_ridge(s: &DMatrix<f64>, t: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let p = s.nrows();
    let d = s - t * lambda;
    let inner = DMatrix::identity(p, p) * lambda + &d * &d / 4.0;
    (sqrtm(&inner) + d / 2.0).try_inverse().unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ridge_matches_closed_form(
        (p, seed) in (2usize..7).prop_flat_map(|p| (Just(p), proptest::collection::vec(-1.0f64..1.0, p * p))),
        tdiag in 0.1f64..3.0,
        log_lambda in -3.0f64..3.0,
    ) {
        let lambda = 10f64.powf(log_lambda);
        let s = spd(p, seed);
        let t = DMatrix::identity(p, p) * tdiag;
        let got = ridge_alt(&SymMatrix::from_values(s.clone()).unwrap(), &SymMatrix::from_values(t.clone()).unwrap(), lambda).unwrap();
        let want = oracle_ridge(&s, &t, lambda);
        prop_assert!(max_abs(&(got.values() - &want)) <= 1e-8 * max_abs(&want).max(1.0));
    }

    #[test]
    fn pcor_is_scaled_negated_precision(
        (p, seed) in (2usize..7).prop_flat_map(|p| (Just(p), proptest::collection::vec(-1.0f64..1.0, p * p))),
    ) {
        let omega = spd(p, seed);
        let r = prec_to_pcor(&SymMatrix::from_values(omega.clone()).unwrap()).unwrap();
        for i in 0..p {
            for j in 0..p {
                let want = if i == j { 1.0 } else { -omega[(i, j)] / (omega[(i, i)] * omega[(j, j)]).sqrt() };
                prop_assert!((r.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn data_to_network_keeps_the_strongest_pairs() {
    // two independent pairs with strong within-pair coupling
    let rows = [
        [1.0, 0.9, 0.3, -0.2],
        [-0.5, -0.6, 1.1, 1.0],
        [0.2, 0.1, -0.9, -1.1],
        [1.3, 1.2, 0.4, 0.5],
        [-1.1, -0.9, -0.1, 0.2],
        [0.4, 0.6, 0.8, 0.7],
        [-0.3, -0.2, -1.2, -0.9],
    ];
    let values = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let x = DataMatrix::new(values, names).unwrap();
    let s = cov_ml(&x, true, false).unwrap();
    let t = SymMatrix::identity(x.feature_names().to_vec());
    let omega = ridge_alt(&s, &t, 0.1).unwrap();
    let (net, _) = sparsify(&omega, Threshold::Top { top: 2 }).unwrap();
    let r = net.report();
    assert_eq!(r.retained, 2);
    let mut pairs: Vec<(usize, usize)> = net.retained_edges.iter().map(|e| (e.i, e.j)).collect();
    pairs.sort();
    assert_eq!(pairs, vec![(0, 1), (2, 3)]);
}
