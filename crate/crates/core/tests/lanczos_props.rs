use proptest::prelude::*;
use qmpo::driver::{cheap_kkt, direct_kkt, solve, QmpoProblem, SolverConfig, Termination};
use qmpo::lanczos::BlockLanczos;
use qmpo::linalg::{orthonormality_error, sym, thin_qr, Mat, SymmetricOperator};
use qmpo::problems::gen_synthetic;
use qmpo::verify::subspace_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn operator(kind: u8, n: usize, rng: &mut ChaCha8Rng) -> SymmetricOperator {
    match kind % 3 {
        0 => SymmetricOperator::Dense(sym(&gaussian(n, n, rng))),
        1 => SymmetricOperator::gram(gaussian(1 + n / 3, n, rng)),
        _ => gen_synthetic(n, 1, 0.1, rng.random()).unwrap().h,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn relation_and_orthonormality(kind in 0u8..3, n in 8usize..80, l in 1usize..4, steps in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = operator(kind, n, &mut rng);
        let g = gaussian(n, l, &mut rng);
        let mut s = BlockLanczos::init(&h, &g, seed).unwrap();
        for _ in 0..steps {
            if s.is_terminated() || (s.k() + 1) * l > n {
                break;
            }
            s.extend(&h).unwrap();
        }
        let v = s.basis(s.k());
        prop_assert!(orthonormality_error(&v) <= 1e-10);
        let q = s.closed_order();
        if q > 0 {
            let t = s.tridiagonal(q).to_dense();
            prop_assert!(s.relation_residual(&h).unwrap() <= 1e-9 * (1.0 + t.norm()));
            // T_q = 𝐕_qᵀ H 𝐕_q
            let vq = s.basis(q);
            let proj = vq.tr_mul(&h.apply(&vq));
            prop_assert!((proj - &t).norm() <= 1e-9 * (1.0 + t.norm()));
        }
        // G = V₁K
        prop_assert!((&s.blocks()[0] * s.k_factor() - &g).norm() <= 1e-10 * (1.0 + g.norm()));
    }

    #[test]
    fn cheap_kkt_matches_direct(n in 20usize..80, l in 1usize..4, steps in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = SymmetricOperator::Dense(sym(&gaussian(n, n, &mut rng)));
        let g = gaussian(n, l, &mut rng);
        let mut s = BlockLanczos::init(&h, &g, seed).unwrap();
        for _ in 0..steps {
            if s.is_terminated() || (s.k() + 1) * l > n {
                break;
            }
            s.extend(&h).unwrap();
        }
        let q = s.closed_order();
        prop_assume!(q > 0);
        let p = thin_qr(&gaussian(q * l, l, &mut rng)).q;
        let lambda = sym(&gaussian(l, l, &mut rng));
        let prob = QmpoProblem::new(h.clone(), g.clone()).unwrap();
        let u = s.lift(&p).unwrap();
        let direct = direct_kkt(&prob, &u, &lambda).unwrap();
        let cheap = cheap_kkt(&s, &p, &lambda).unwrap();
        prop_assert!((cheap - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn subspace_distance_shrinks_with_k(n in 20usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = SymmetricOperator::Dense(sym(&gaussian(n, n, &mut rng)));
        let g = gaussian(n, 2, &mut rng);
        let target = thin_qr(&gaussian(n, 2, &mut rng)).q;
        let mut s = BlockLanczos::init(&h, &g, seed).unwrap();
        let mut prev = subspace_distance(&s.basis(1), &target).unwrap();
        while !s.is_terminated() && (s.k() + 1) * 2 <= n {
            s.extend(&h).unwrap();
            let d = subspace_distance(&s.basis(s.k()), &target).unwrap();
            prop_assert!(d <= prev + 1e-12);
            prev = d;
        }
    }
}

#[test]
fn objective_never_increases_over_checkpoints() {
    for seed in 0..8 {
        let p = gen_synthetic(300, 4, 0.05, 100 + seed).unwrap();
        let cfg = SolverConfig {
            solve_every: 1,
            seed,
            ..SolverConfig::default()
        };
        let r = solve(&p, &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(
                w[1].f <= w[0].f + 1e-12 * (1.0 + w[0].f.abs()),
                "seed {seed}"
            );
        }
        assert!(orthonormality_error(&r.u) <= 1e-10);
        assert_ne!(r.termination, Termination::KMax);
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let p = gen_synthetic(200, 3, 0.05, 5).unwrap();
    let cfg = SolverConfig::default();
    let a = solve(&p, &cfg).unwrap();
    let b = solve(&p, &cfg).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.history.len(), b.history.len());
}
