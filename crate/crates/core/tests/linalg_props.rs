use morin_core::linalg::{determinant, least_squares, numeric_rank, Mat};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn arb_mat(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
}

/// Random matrix of prescribed rank: product of random factors.
fn arb_low_rank() -> impl Strategy<Value = (Mat, usize)> {
    (2usize..6, 2usize..6)
        .prop_flat_map(|(r, c)| (Just(r), Just(c), 0..=r.min(c)))
        .prop_flat_map(|(r, c, k)| (arb_mat(r, k.max(1)), arb_mat(k.max(1), c), Just(k)))
        .prop_map(|(a, b, k)| {
            let m = if k == 0 {
                Mat::zeros(a.rows(), b.cols())
            } else {
                a.mul(&b)
            };
            (m, k)
        })
}

proptest! {
    #[test]
    fn singular_values_match_nalgebra(m in arb_mat(5, 3)) {
        let ours = numeric_rank(&m, 1e-8).singular_values;
        let mut theirs: Vec<f64> = to_na(&m).singular_values().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + theirs[0]));
        }
    }

    #[test]
    fn rank_is_invariant_under_permutation_and_scaling(
        (m, _) in arb_low_rank(),
        scale_exp in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let base = numeric_rank(&m, 1e-8);
        prop_assume!(base.gap_ratio >= 1e2);
        let mut rows: Vec<usize> = (0..m.rows()).collect();
        let mut cols: Vec<usize> = (0..m.cols()).collect();
        rows.rotate_left((seed % m.rows() as u64) as usize);
        cols.reverse();
        let moved = m.select_rows(&rows).select_cols(&cols).scale(10f64.powf(scale_exp));
        prop_assert_eq!(numeric_rank(&moved, 1e-8).rank, base.rank);
    }

    #[test]
    fn constructed_rank_is_recovered((m, k) in arb_low_rank()) {
        let r = numeric_rank(&m, 1e-8);
        // A random product can be worse conditioned than its factors; only
        // clear decisions are required to agree.
        if r.gap_ratio >= 1e2 {
            prop_assert_eq!(r.rank, k);
        }
    }

    #[test]
    fn determinant_is_multiplicative(a in arb_mat(5, 5), b in arb_mat(5, 5)) {
        let dab = determinant(&a.mul(&b)).unwrap();
        let (da, db) = (determinant(&a).unwrap(), determinant(&b).unwrap());
        prop_assert!((dab - da * db).abs() <= 1e-8 * (da * db).abs().max(1e-300) + 1e-12);
        let na = to_na(&a).determinant();
        prop_assert!((da - na).abs() <= 1e-10 * (1.0 + na.abs()));
    }

    #[test]
    fn consistent_systems_round_trip(a in arb_mat(6, 3), s in prop::collection::vec(-5.0f64..5.0, 3)) {
        let b = a.mul_vec(&s);
        let ls = least_squares(&a, &b).unwrap();
        prop_assume!(!ls.rank_deficient);
        prop_assert!(ls.residual_norm <= 1e-10);
        let cond = numeric_rank(&a, 1e-8);
        let kappa = cond.sigma_max() / cond.sigma_min_kept();
        for (x, y) in ls.solution.iter().zip(&s) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + kappa));
        }
    }
}
