use proptest::prelude::*;
use qmpo::driver::{solve, SolveReport, SolverConfig};
use qmpo::linalg::{CsrMatrix, Mat};
use qmpo::mtx::{format_matrix_market, parse_matrix_market, MmMatrix};
use qmpo::problems::gen_synthetic;
use qmpo::report::{format_f64, history_csv, to_json, HISTORY_HEADER};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn float_format_round_trips(v in finite()) {
        let back: f64 = format_f64(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn sparse_matrix_market_round_trips(
        rows in 1usize..12,
        cols in 1usize..12,
        entries in proptest::collection::vec((0usize..12, 0usize..12, finite()), 0..40),
    ) {
        let trip: Vec<_> = entries
            .into_iter()
            .map(|(i, j, v)| (i % rows, j % cols, v))
            .collect();
        let a = CsrMatrix::from_triplets(rows, cols, &trip).unwrap();
        let m = MmMatrix::Sparse(a);
        let text = format_matrix_market(&m);
        let back = parse_matrix_market(&text).unwrap();
        prop_assert_eq!(back.to_dense(), m.to_dense());
    }

    #[test]
    fn dense_matrix_market_round_trips(rows in 1usize..8, cols in 1usize..8, vals in proptest::collection::vec(finite(), 64)) {
        let a = Mat::from_fn(rows, cols, |i, j| vals[i * 8 + j]);
        let m = MmMatrix::Dense(a);
        prop_assert_eq!(parse_matrix_market(&format_matrix_market(&m)).unwrap(), m);
    }
}

#[test]
fn report_json_round_trips() {
    let p = gen_synthetic(120, 2, 0.05, 3).unwrap();
    let r = solve(&p, &SolverConfig::default()).unwrap();
    let json = to_json(&r).unwrap();
    let back: SolveReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.u, r.u);
    assert_eq!(back.lambda, r.lambda);
    assert_eq!(back.objective.to_bits(), r.objective.to_bits());
    assert_eq!(back.termination, r.termination);
    assert_eq!(to_json(&back).unwrap(), json);

    let csv = history_csv(&r);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HISTORY_HEADER));
    assert_eq!(lines.count(), r.history.len());
}
