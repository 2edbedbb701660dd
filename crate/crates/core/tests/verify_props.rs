use proptest::prelude::*;
use qmpo::linalg::{sym, Mat};
use qmpo::problems::gen_synthetic;
use qmpo::rtr::{reduced_objective, rtr_solve, ReducedProblem, RtrConfig, StiefelPoint};
use qmpo::verify::{
    balanced_svd_oracle, bound_eps, certify, classify_spectrum, trs_secular_oracle, CertifyConfig,
    IndexClass, KroneckerSum, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn spectrum(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, len).prop_map(descending)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn classification_is_consistent(mu in spectrum(2..12), gamma in spectrum(1..5)) {
        let Ok(c) = classify_spectrum(&mu, &gamma) else {
            return Ok(());
        };
        prop_assert_eq!(c.indices.len(), gamma.len());
        let mu_n = *mu.last().unwrap();
        for ci in &c.indices {
            match ci.class {
                IndexClass::Definite { kappa } => {
                    prop_assert!(mu_n + ci.gamma > 0.0);
                    prop_assert!(kappa >= 1.0);
                }
                IndexClass::Indefinite { s, neg, pos, phi, .. } => {
                    prop_assert!(mu_n + ci.gamma < 0.0);
                    prop_assert!(s >= 1 && s < mu.len());
                    prop_assert!(neg < 0.0 && pos > 0.0);
                    prop_assert!(phi >= 1.0 - 1e-12, "phi = {}", phi);
                }
            }
        }
    }

    #[test]
    fn eps_bound_is_monotone_in_k(mu in spectrum(2..12), gamma in spectrum(1..5)) {
        let Ok(c) = classify_spectrum(&mu, &gamma) else {
            return Ok(());
        };
        let mut prev = bound_eps(&c, 1);
        for k in 2..30 {
            let b = bound_eps(&c, k);
            prop_assert!(b.stated <= prev.stated + 1e-15);
            prop_assert!(b.derived <= prev.derived + 1e-15);
            prop_assert!(b.degree_corrected <= prev.degree_corrected + 1e-15);
            if c.definite_count() == c.indices.len() {
                // One degree less of polynomial freedom gives a larger envelope.
                prop_assert!(b.degree_corrected + 1e-15 >= b.stated);
            }
            prev = b;
        }
    }

    #[test]
    fn kronecker_sum_matches_assembly(n in 1usize..6, l in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = sym(&Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)));
        let lam = sym(&Mat::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal)));
        let ks = KroneckerSum::new(&h, &lam).unwrap();
        let full = qmpo::linalg::sym_eig(&KroneckerSum::assemble(&h, &lam)).unwrap();
        prop_assert!((full.max() - ks.lambda_max()).abs() <= 1e-10);
        prop_assert!((full.min() - ks.lambda_min()).abs() <= 1e-10);
        let mut want = ks.eigenvalues();
        want.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in full.values.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn secular_oracle_satisfies_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let n = rng.random_range(2..30);
        let h = sym(&Mat::from_fn(n, n, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let g = Mat::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = trs_secular_oracle(&h, &g).unwrap();
        let res = (&h * &s.x + &s.x * s.lambda + &g).norm();
        assert!(res <= 1e-10 * (1.0 + g.norm() + h.norm()), "residual {res}");
        assert!((s.x.norm() - 1.0).abs() <= 1e-12);
        let mu_n = qmpo::linalg::sym_eig(&h).unwrap().min();
        assert!(mu_n + s.lambda >= -1e-12);
    }
}

#[test]
fn balanced_svd_oracle_matches_rtr() {
    // With P square, tr(PᵀTP) = tr(T) and only the linear term matters.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let l = rng.random_range(1..6);
        let g = Mat::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = sym(&Mat::from_fn(l, l, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let (p, f) = balanced_svd_oracle(&g, &t).unwrap();
        let prob = ReducedProblem::new(t.clone(), g.clone()).unwrap();
        let p = StiefelPoint::new(p).unwrap();
        assert!((reduced_objective(&prob, &p) - f).abs() <= 1e-10 * (1.0 + f.abs()));
        let start = StiefelPoint::random(l, l, &mut rng);
        let cfg = RtrConfig {
            restarts: 3,
            ..RtrConfig::default()
        };
        let r = rtr_solve(&prob, &start, &cfg).unwrap();
        assert!(
            (r.objective - f).abs() <= 1e-8 * (1.0 + f.abs()),
            "{} vs {f}",
            r.objective
        );
    }
}

#[test]
fn l1_certificate_has_no_failures() {
    for seed in 0..5 {
        let p = gen_synthetic(40, 1, 0.1, 300 + seed).unwrap();
        let c = certify(&p, &CertifyConfig::default()).unwrap();
        assert_eq!(c.oracle, "secular");
        for r in &c.checks {
            if r.verdict == Verdict::Skipped {
                assert!(r.reason.as_deref().is_some_and(|s| !s.is_empty()));
            }
            if r.check != "eps" {
                assert_ne!(r.verdict, Verdict::Fail, "{r:?}");
            }
        }
    }
}
