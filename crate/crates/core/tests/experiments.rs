use hyperbolic_bn::experiments::*;
use hyperbolic_bn::hyperfun::Dimension;
use proptest::prelude::*;

#[test]
fn bound_rows() {
    let rows = bound_table(&[4.0, 3.0]).unwrap();
    assert_eq!(rows[0].n, 3.0);
    let r3 = rows[0];
    assert_eq!((r3.paper_bound, r3.stapelkamp_bound, r3.spectrum_bottom), (0.9, 0.75, 1.0));
    assert!((r3.ratio - 1.2).abs() < 1e-15);
    assert_eq!(rows[1].ratio, 1.0);
    assert!(bound_table(&[3.0, 2.0]).is_err());
}

#[test]
fn ratio_changes_side_at_four() {
    // Oracle: the bounds straight from their defining formulas on a dense grid.
    let grid: Vec<f64> = (1..400).map(|i| 2.0 + i as f64 * 0.01).collect();
    for row in bound_table(&grid).unwrap() {
        let n = row.n;
        let paper = n * n * (n - 1.0) / (4.0 * (n + 2.0));
        let stapelkamp = n * (n - 2.0) / 4.0;
        assert!((row.ratio - paper / stapelkamp).abs() < 1e-12);
        if n < 4.0 - 1e-9 {
            assert!(row.ratio > 1.0, "n={n}");
        } else if n > 4.0 + 1e-9 {
            assert!(row.ratio < 1.0, "n={n}");
        }
    }
}

#[test]
fn non_positive_lambda_never_has_solutions() {
    let dim = Dimension::new(3.0).unwrap();
    let r = scan_lambda(dim, 1.0, -3.0, 0.0, 4, &SweepConfig::default()).unwrap();
    assert!(r.entries.iter().all(|e| matches!(e.evidence, Evidence::NotFound { .. })));
    assert!(r.grid_bracket.is_none() && r.lambda_star_bracket.is_none());
}

#[test]
fn coarse_threshold_bracket_for_the_unit_ball() {
    let dim = Dimension::new(3.0).unwrap();
    let cfg = SweepConfig { lambda_star_width: 1e-2, ..SweepConfig::default() };
    let r = scan_lambda(dim, 1.0, 0.0, 13.0, 14, &cfg).unwrap();
    let (lo, hi) = r.lambda_star_bracket.expect("threshold bracketed");
    assert!(lo >= 0.9, "{lo}");
    assert!(hi - lo <= 1e-2);
    let l1 = r.eigen_lambda1.unwrap();
    assert!(hi < l1);
    assert!((l1 - (1.0 + std::f64::consts::PI.powi(2))).abs() < 1e-8);
    assert!(r.violation_at_or_below(0.9).is_none());
    for e in r.entries.iter().filter(|e| e.exists) {
        let Evidence::Found { solutions } = &e.evidence else { panic!("exists without a solution") };
        for s in solutions.iter().filter(|s| s.verified) {
            assert!(s.boundary_residual <= SOLUTION_RESIDUAL * s.max_abs_u);
        }
    }
}

#[test]
fn hardy_batches_are_reproducible() {
    let dim = Dimension::new(3.0).unwrap();
    let a = hardy_batch(dim, 2.0, 8, 42).unwrap();
    let b = hardy_batch(dim, 2.0, 8, 42).unwrap();
    let c = hardy_batch(dim, 2.0, 8, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|x| x.hardy.pass && x.quotient_hardy.pass));
}

#[test]
fn manifest_records_the_version_and_tolerances() {
    let cfg = SweepConfig::with_tol(1e-9);
    let m = Manifest::new("scan", &cfg, serde_json::json!({ "n": 3.0 }));
    let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["tolerances"]["integrator"], 1e-9);
    assert_eq!(v["tolerances"]["lambda_star_width"], 1e-4);
}

proptest! {
    #[test]
    fn grid_lists_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..12), pad in "[ ]{0,2}") {
        let text = values.iter().map(|v| format!("{pad}{v}{pad}")).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_grid(&text).unwrap(), values);
    }

    #[test]
    fn grid_parser_never_panics(text in "\\PC{0,40}") {
        let _ = parse_grid(&text);
    }
}
