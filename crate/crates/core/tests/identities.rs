use hyperbolic_bn::hyperfun::Dimension;
use hyperbolic_bn::identities::*;
use hyperbolic_bn::odecore::{integrate_with, IntegrateOptions, ProblemParams, StopRule};
use hyperbolic_bn::shooting::{solve_bvp, BvpSolution, ShootConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solutions(n: f64, lambda: f64, tol: f64) -> Vec<BvpSolution> {
    let p = ProblemParams::new(n, lambda, 1.0).unwrap();
    let out = solve_bvp(&p, &ShootConfig::with_tol(tol)).unwrap();
    assert!(!out.solutions().is_empty(), "no solution at n={n} λ={lambda}");
    out.solutions().to_vec()
}

struct Zero;

impl TestFunction for Zero {
    fn value(&self, _x: f64) -> f64 {
        0.0
    }
    fn derivative(&self, _x: f64) -> f64 {
        0.0
    }
}

#[test]
fn pohozaev_identities_hold_on_solutions() {
    for &(n, lambda) in &[(3.0, 10.0), (3.0, 4.0), (2.5, 8.0), (3.5, 12.0)] {
        for s in solutions(n, lambda, 1e-11) {
            let x = IdentityInputs::from(&s.profile);
            let po1 = check_po1(&x, 1e-7).unwrap();
            assert!(po1.pass, "{po1:?}");
            let po = check_po(&x, IDENTITY_TOL).unwrap();
            assert!(po.pass, "{po:?}");
            let po2 = check_po2(&x, IDENTITY_TOL).unwrap();
            assert!(po2.pass, "{po2:?}");
            assert!(0.5 * x.du_end * x.du_end * x.g_end >= 0.0);
        }
    }
}

#[test]
fn chain_holds_link_by_link_on_solutions() {
    for &(n, lambda) in &[(3.0, 10.0), (3.0, 4.0), (2.5, 8.0), (3.9, 14.0)] {
        for s in solutions(n, lambda, 1e-10) {
            let x = IdentityInputs::from(&s.profile);
            let chain = check_chain(&x, INEQUALITY_TOL).unwrap();
            assert!(chain.quotient.pass, "{:?}", chain.quotient);
            assert!(chain.hardy_link.pass, "{:?}", chain.hardy_link);
            assert!(chain.quotient_hardy.pass, "{:?}", chain.quotient_hardy);
            assert!(check_hardy(&x, INEQUALITY_TOL).pass);
        }
    }
}

#[test]
fn residuals_shrink_with_the_integrator_tolerance() {
    for &(n, lambda) in &[(3.0, 10.0), (2.5, 8.0), (3.5, 12.0)] {
        for s in solutions(n, lambda, 1e-12) {
            let coarse = IdentityInputs::from(&s.reintegrate(1e-7).unwrap().profile);
            let fine = IdentityInputs::from(&s.reintegrate(1e-9).unwrap().profile);
            for (c, f) in [
                (po1_report(&coarse, 0.0), po1_report(&fine, 0.0)),
                (po_report(&coarse, 0.0), po_report(&fine, 0.0)),
            ] {
                assert!(f.rel_residual * 4.0 <= c.rel_residual, "{c:?} {f:?}");
            }
        }
    }
}

#[test]
fn truncated_trajectory_is_not_a_solution() {
    let p = ProblemParams::new(3.0, 10.0, 1.0).unwrap();
    let opts = IntegrateOptions::new(1e-11).stop(StopRule::Never);
    let t = integrate_with(&p, 1.45, 0.6, &opts).unwrap();
    let x = IdentityInputs::from(&t.profile);
    assert!(matches!(check_po1(&x, IDENTITY_TOL), Err(IdentityError::BoundaryResidual { .. })));
    assert!(!po1_report(&x, IDENTITY_TOL).pass);
    assert!(!po_report(&x, IDENTITY_TOL).pass);
}

#[test]
fn zero_test_function() {
    let p = ProblemParams::new(3.0, 1.0, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&Zero, &p).unwrap();
    assert!(check_hardy(&x, INEQUALITY_TOL).pass);
    assert!(check_po1(&x, IDENTITY_TOL).unwrap().pass);
    assert!(matches!(check_quotient(&x, INEQUALITY_TOL), Err(IdentityError::Degenerate(_))));
}

#[test]
fn ramp_integrals_match_direct_quadrature() {
    // Oracle: the same integrals with the closed-form n = 3 primitive
    // G = (sinh 2x - 2x)/4 and plain Simpson, independent of the moment machinery.
    let p = ProblemParams::new(3.0, 1.0, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&Ramp { radius: 1.0 }, &p).unwrap();
    let g = |t: f64| ((2.0 * t).sinh() - 2.0 * t) / 4.0;
    let iu2 = hyperbolic_bn::quadrature::simpson(|t: f64| (1.0 - t).powi(2) * t.sinh().powi(2), 0.0, 1.0, 1e-13, 1e-300).unwrap();
    let ih = hyperbolic_bn::quadrature::simpson(
        |t: f64| if t == 0.0 { 0.0 } else { g(t).powi(2) / t.sinh().powi(2) },
        0.0,
        1.0,
        1e-13,
        1e-300,
    )
    .unwrap();
    let il = hyperbolic_bn::quadrature::simpson(
        |t: f64| if t == 0.0 { 0.0 } else { g(t) / t.tanh() - t.sinh().powi(2) / 3.0 },
        0.0,
        1.0,
        1e-13,
        1e-300,
    )
    .unwrap();
    assert!(((x.iu2 - iu2) / iu2).abs() < 1e-10);
    assert!(((x.ih - ih) / ih).abs() < 1e-10);
    assert!(((x.il - il) / il).abs() < 1e-9);
    assert!(check_hardy(&x, INEQUALITY_TOL).pass);
}

#[test]
fn quotient_check_fails_on_a_non_solution() {
    let probe = ProblemParams::new(3.0, 0.0, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&Ramp { radius: 1.0 }, &probe).unwrap();
    let rhs = check_quotient(&x, INEQUALITY_TOL).unwrap().rhs;
    let below = ProblemParams::new(3.0, 0.5 * rhs, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&Ramp { radius: 1.0 }, &below).unwrap();
    assert!(!check_quotient(&x, INEQUALITY_TOL).unwrap().pass);
}

#[test]
fn random_bumps_satisfy_hardy_and_the_quotient_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for &n in &[2.5, 3.0, 3.9] {
        let p = ProblemParams::new(n, 1.0, 1.0).unwrap();
        let bound = Dimension::new(n).unwrap().bounds().paper_bound;
        for _ in 0..100 {
            let bump = PolyBump::random(1.0, &mut rng);
            let x = IdentityInputs::from_test_function(&bump, &p).unwrap();
            let hardy = check_hardy(&x, INEQUALITY_TOL);
            assert!(hardy.pass, "{bump:?} {hardy:?}");
            let q = check_quotient_hardy(&x, INEQUALITY_TOL).unwrap();
            assert!(q.pass && q.lhs >= bound - 1e-9, "{bump:?} {q:?}");
        }
    }
}

#[test]
fn quotient_bound_is_two_in_dimension_four() {
    let p = ProblemParams::new(4.0, 1.0, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&Ramp { radius: 1.0 }, &p).unwrap();
    let q = check_quotient_hardy(&x, INEQUALITY_TOL).unwrap();
    assert_eq!(q.rhs, 2.0);
    assert!(q.pass);
}

#[test]
fn narrow_bump_approaches_the_bound() {
    let p = ProblemParams::new(3.0, 1.0, 1.0).unwrap();
    let x = IdentityInputs::from_test_function(&NarrowBump { eps: 1e-3 }, &p).unwrap();
    let q = check_quotient_hardy(&x, INEQUALITY_TOL).unwrap();
    assert!(q.pass);
    assert!((q.lhs - 0.9).abs() / 0.9 < 1e-2, "{}", q.lhs);
}

#[test]
fn lemma_scan_passes_across_the_range() {
    for &n in &[2.001, 3.0, 3.999] {
        let r = lemma_scan(Dimension::new(n).unwrap(), 10.0, 10_000).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.auxiliary_nonnegative && r.derivatives_pass);
    }
}

#[test]
fn lemma_scan_is_stable_under_refinement() {
    let dim = Dimension::new(3.0).unwrap();
    let coarse = lemma_scan(dim, 20.0, 10_000).unwrap();
    let fine = lemma_scan(dim, 20.0, 100_000).unwrap();
    assert_eq!(coarse.pass, fine.pass);
}

#[test]
fn inflated_constant_fails_near_the_origin() {
    let dim = Dimension::new(3.0).unwrap();
    let r = lemma_scan_with_constant(dim, 10.0, 10_000, 1.05 * dim.lemma_constant()).unwrap();
    assert!(!r.pass);
    assert!(r.worst_x < 0.1, "{}", r.worst_x);
}

#[test]
fn lemma_grid_validation() {
    assert!(lemma_grid(10.0, 1).is_err());
    assert!(lemma_grid(0.0, 100).is_err());
    assert!(lemma_grid(f64::INFINITY, 100).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quotient_hardy_ratio_is_scale_invariant(
        q in prop::array::uniform4(-1.0f64..1.0),
        s in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
        n in 2.2f64..3.9,
    ) {
        prop_assume!(q.iter().any(|c| c.abs() > 1e-2));
        let p = ProblemParams::new(n, 1.0, 1.0).unwrap();
        let base = PolyBump { radius: 1.0, q };
        let scaled = PolyBump { radius: 1.0, q: q.map(|c| s * c) };
        let a = check_quotient_hardy(&IdentityInputs::from_test_function(&base, &p).unwrap(), INEQUALITY_TOL).unwrap();
        let b = check_quotient_hardy(&IdentityInputs::from_test_function(&scaled, &p).unwrap(), INEQUALITY_TOL).unwrap();
        prop_assert!(((a.lhs - b.lhs) / a.lhs).abs() < 1e-9);
        prop_assert!(a.pass && b.pass);
    }
}
