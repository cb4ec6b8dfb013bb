use proptest::prelude::*;
use randchan::linalg::{rank, solve_min_norm, Matrix, RationalMatrix, DEFAULT_TOL};

/// `rows x cols` product of integer factors with inner dimension `inner`,
/// so rank is usually `min(rows, cols, inner)`.
fn low_rank() -> impl Strategy<Value = Matrix> {
    (1usize..=12, 1usize..=12, 1usize..=12).prop_flat_map(|(r, c, k)| {
        (
            prop::collection::vec(-3i32..=3, r * k),
            prop::collection::vec(-3i32..=3, k * c),
        )
            .prop_map(move |(u, v)| {
                let u = Matrix::new(r, k, u.into_iter().map(f64::from).collect()).unwrap();
                let v = Matrix::new(k, c, v.into_iter().map(f64::from).collect()).unwrap();
                u.mul(&v).unwrap()
            })
    })
}

fn small_int_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..=8, 1usize..=8, 0usize..=3).prop_flat_map(|(r, c, dups)| {
        prop::collection::vec(-9i32..=9, r * c).prop_map(move |d| {
            let mut m = Matrix::new(r, c, d.into_iter().map(f64::from).collect()).unwrap();
            // repeat a few rows to force rank deficiency
            for i in 1..=dups.min(r - 1) {
                for j in 0..c {
                    let v = m.get(0, j);
                    m.set(i, j, v);
                }
            }
            m
        })
    })
}

fn dense() -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(-1.0f64..1.0, r * c),
            prop::collection::vec(-1.0f64..1.0, r),
        )
            .prop_map(move |(d, y)| (Matrix::new(r, c, d).unwrap(), y))
    })
}

fn frob(m: &Matrix) -> f64 {
    m.frobenius_norm()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rank_of_transpose(m in low_rank()) {
        prop_assert_eq!(rank(&m, DEFAULT_TOL), rank(&m.transpose(), DEFAULT_TOL));
    }

    #[test]
    fn rank_survives_permutation(m in low_rank(), seed in any::<u64>()) {
        let mut rows: Vec<usize> = (0..m.rows()).collect();
        let mut cols: Vec<usize> = (0..m.cols()).collect();
        let mut r = randchan::rng::stream(seed, 0);
        for v in [&mut rows, &mut cols] {
            for i in (1..v.len()).rev() {
                let j = randchan::rng::uniform_index(&mut r, i + 1);
                v.swap(i, j);
            }
        }
        let p = m.permute_rows(&rows).transpose().permute_rows(&cols).transpose();
        prop_assert_eq!(rank(&p, DEFAULT_TOL), rank(&m, DEFAULT_TOL));
    }

    #[test]
    fn rank_survives_scaling(m in low_rank()) {
        let r = rank(&m, DEFAULT_TOL);
        prop_assert_eq!(rank(&m.scale(1e6), DEFAULT_TOL), r);
        prop_assert_eq!(rank(&m.scale(1e-6), DEFAULT_TOL), r);
    }

    #[test]
    fn exact_rank_matches_float_rank(m in small_int_matrix()) {
        prop_assert_eq!(RationalMatrix::from_float(&m).rank(), rank(&m, 1e-9));
    }

    #[test]
    fn least_squares_residual_is_orthogonal((m, y) in dense()) {
        let z = solve_min_norm(&m, &y, DEFAULT_TOL).unwrap();
        let mz = m.mul_vec(&z).unwrap();
        let resid: Vec<f64> = mz.iter().zip(&y).map(|(a, b)| a - b).collect();
        let g = m.transpose().mul_vec(&resid).unwrap();
        prop_assert!(norm(&g) <= 1e-8 * frob(&m) * norm(&y) + 1e-300, "|M^T r| = {}", norm(&g));
    }

    #[test]
    fn minimum_norm_among_exact_solutions(
        (m, _) in dense(),
        xs in prop::collection::vec(-1.0f64..1.0, 8),
        ws in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let c = m.cols();
        let y = m.mul_vec(&xs[..c]).unwrap();
        let z = solve_min_norm(&m, &y, DEFAULT_TOL).unwrap();
        // w minus its row-space component is a null-space direction
        let w = &ws[..c];
        let w_row = solve_min_norm(&m, &m.mul_vec(w).unwrap(), DEFAULT_TOL).unwrap();
        let cand: Vec<f64> = z.iter().zip(w.iter().zip(w_row.iter())).map(|(z, (w, p))| z + w - p).collect();
        let cand_resid = m.mul_vec(&cand).unwrap().sub(&y);
        prop_assert!(norm(&cand_resid) <= 1e-8 * (1.0 + norm(&y)));
        prop_assert!(norm(&z) <= norm(&cand) + 1e-9);
    }
}
