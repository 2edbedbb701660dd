use proptest::prelude::*;
use qmpo::linalg::{
    apply_sym, orthonormality_error, polar, small_svd, sym, sym_eig, thin_qr, CsrMatrix, Mat,
    SymmetricOperator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn tall() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..8, 0usize..30, any::<u64>()).prop_map(|(p, extra, seed)| (p + extra, p, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn qr_reconstructs_and_is_orthonormal((n, p, seed) in tall()) {
        let a = gaussian(n, p, seed);
        let qr = thin_qr(&a);
        prop_assert!((&qr.q * &qr.r - &a).norm() <= 1e-12 * (1.0 + a.norm()));
        prop_assert!(orthonormality_error(&qr.q) <= 1e-12);
        for i in 0..p {
            prop_assert!(qr.r[(i, i)] >= 0.0);
            for j in 0..i {
                prop_assert_eq!(qr.r[(i, j)], 0.0);
            }
        }
        prop_assert_eq!(qr.rank, p);
    }

    #[test]
    fn polar_factors_are_unique((n, p, seed) in tall()) {
        let y = gaussian(n, p, seed);
        let pd = polar(&y).unwrap();
        prop_assert!(orthonormality_error(&pd.q) <= 1e-10);
        prop_assert!((&pd.q * &pd.s - &y).norm() <= 1e-10 * (1.0 + y.norm()));
        prop_assert!((&pd.s - pd.s.transpose()).norm() <= 1e-12 * (1.0 + pd.s.norm()));
        prop_assert!(sym_eig(&pd.s).unwrap().min() > 0.0);
        // Q is also U Vᵀ from the SVD.
        let (u, _, v) = small_svd(&y).unwrap();
        prop_assert!((&pd.q - u * v.transpose()).norm() <= 1e-8);
    }

    #[test]
    fn eig_diagonalizes(n in 1usize..25, seed in any::<u64>()) {
        let a = sym(&gaussian(n, n, seed));
        let sp = sym_eig(&a).unwrap();
        prop_assert!(orthonormality_error(&sp.vectors) <= 1e-11);
        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(sp.values.clone()));
        let back = &sp.vectors * d * sp.vectors.transpose();
        prop_assert!((back - &a).norm() <= 1e-11 * (1.0 + a.norm()));
        for w in sp.values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!((sp.values.iter().sum::<f64>() - a.trace()).abs() <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn operator_forms_agree(n in 2usize..30, m in 1usize..10, seed in any::<u64>()) {
        let a = gaussian(m, n, seed);
        let x = gaussian(n, 3, seed ^ 1);
        let gram = SymmetricOperator::gram(a.clone());
        let dense_h = a.transpose() * &a;
        let dense = SymmetricOperator::dense(dense_h.clone()).unwrap();
        let sparse = SymmetricOperator::sparse(CsrMatrix::from_dense(&dense_h)).unwrap();
        let want = &dense_h * &x;
        for op in [&gram, &dense, &sparse] {
            let got = apply_sym(op, &x).unwrap();
            prop_assert!((got - &want).norm() <= 1e-10 * (1.0 + want.norm()));
        }
        // ⟨X, HY⟩ = ⟨HX, Y⟩
        let y = gaussian(n, 3, seed ^ 2);
        let lhs = x.dot(&gram.apply(&y));
        let rhs = gram.apply(&x).dot(&y);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(gram.norm_bound() + 1e-9 >= sym_eig(&dense_h).unwrap().max());
    }
}

#[test]
fn qr_reports_rank_deficiency() {
    let a = gaussian(10, 2, 3);
    let mut b = Mat::zeros(10, 3);
    b.columns_mut(0, 2).copy_from(&a);
    b.set_column(2, &(a.column(0) * 2.0 - a.column(1)));
    assert_eq!(thin_qr(&b).rank, 2);
}
