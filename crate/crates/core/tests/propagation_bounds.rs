mod common;

use common::*;
use lrlab_core::hamiltonian_model::{build_paper_example, reference_final_hamiltonian};
use lrlab_core::locality::certify;
use lrlab_core::numerics::{operator_norm, unitary_exponential};
use lrlab_core::propagation::{
    block_projector, bound_audit, check_spread_bound, commutator_norm, evolve, evolve_from,
    heisenberg, lr_bound_rhs, propagator_spread, BoundAuditor, AUDIT_TOL,
};
use lrlab_core::{Block, CMatrix, LabError, Permutation, TimeDependentHamiltonian, TimeGrid};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn constant_and_zero_hamiltonians() {
    let hm = reference_final_hamiltonian();
    let h = TimeDependentHamiltonian::constant(hm.clone()).unwrap();
    let grid = TimeGrid::uniform(2.0, 21).unwrap();
    let u = evolve(&h, &grid, 1e-10).unwrap();
    for (t, uk) in grid.points().iter().zip(&u.unitaries) {
        let exact = taylor_expm(&(&hm * Complex64::new(0.0, -t)));
        assert!(max_abs(&(uk - exact)) < 1e-10);
    }
    let zero = TimeDependentHamiltonian::constant(CMatrix::zeros(4, 4)).unwrap();
    let u = evolve(&zero, &grid, 1e-10).unwrap();
    assert!(u
        .unitaries
        .iter()
        .all(|uk| max_abs(&(uk - CMatrix::identity(4, 4))) == 0.0));
}

#[test]
fn reference_example_matches_rk4() {
    let t_final = 20.0;
    let h = build_paper_example(t_final).unwrap();
    let grid = TimeGrid::uniform(t_final, 201).unwrap();
    let tol = 1e-9;
    let u = evolve(&h, &grid, tol).unwrap();
    let reference = rk4_propagator(|t| h.evaluate(t).unwrap(), 11, grid.points(), 100);
    let worst = u
        .unitaries
        .iter()
        .zip(&reference)
        .map(|(a, b)| svd_norm(&(a - b)))
        .fold(0.0, f64::max);
    assert!(worst < 10.0 * tol, "{worst:e}");
    assert!(u.unitarity_defect < 1e-10);
}

#[test]
fn composition_of_propagators() {
    let h = build_paper_example(10.0).unwrap();
    let tol = 1e-10;
    let full = evolve(&h, &TimeGrid::uniform(10.0, 11).unwrap(), tol).unwrap();
    let first = evolve(&h, &TimeGrid::uniform(4.0, 5).unwrap(), tol).unwrap();
    let second = evolve_from(&h, 4.0, &TimeGrid::uniform(6.0, 7).unwrap(), tol, 1).unwrap();
    let composed = second.final_unitary() * first.final_unitary();
    assert!(svd_norm(&(composed - full.final_unitary())) < 10.0 * tol);
}

#[test]
fn reference_example_commutator_bound() {
    let t_final = 20.0;
    let h = build_paper_example(t_final).unwrap();
    let grid = TimeGrid::uniform(t_final, 401).unwrap();
    let cert = certify(&h, 0.5, &grid, Permutation::identity(11)).unwrap();
    let auditor = BoundAuditor::new(&h, &grid, Permutation::identity(11), AUDIT_TOL).unwrap();
    let report = auditor
        .audit(&Block::singleton(0), &Block::singleton(5), &cert)
        .unwrap();
    assert_eq!(report.violations, 0);
    assert!(report.rows.iter().all(|r| r.lhs <= r.rhs + 1e-9));
    assert_eq!(report.rows[0].lhs, 0.0);
    let spread = propagator_spread(auditor.propagator(), 0).unwrap();
    assert_eq!(check_spread_bound(&spread, &cert).unwrap().violations, 0);
}

#[test]
fn invalid_certificates_are_flagged() {
    let t_final = 10.0;
    let h = build_paper_example(t_final).unwrap();
    let grid = TimeGrid::uniform(t_final, 101).unwrap();
    let cert = certify(&h, 0.5, &grid, Permutation::identity(11)).unwrap();
    let auditor = BoundAuditor::new(&h, &grid, Permutation::identity(11), AUDIT_TOL).unwrap();
    // A decay rate of 40 with the same a shrinks the bound by e^-79 at distance 2.
    let bogus = cert.with_overridden_mu(40.0);
    let report = auditor
        .audit(&Block::singleton(0), &Block::singleton(2), &bogus)
        .unwrap();
    assert!(report.violations > 0);
    assert!(report.min_margin < -1e-3);
    assert!(report.ensure_clean().is_err());
    let spread = propagator_spread(auditor.propagator(), 0).unwrap();
    assert!(check_spread_bound(&spread, &bogus).unwrap().violations > 0);
}

#[test]
fn general_operators_audit() {
    let t_final = 5.0;
    let h = build_paper_example(t_final).unwrap();
    let grid = TimeGrid::uniform(t_final, 51).unwrap();
    let cert = certify(&h, 0.5, &grid, Permutation::identity(11)).unwrap();
    let auditor = BoundAuditor::new(&h, &grid, Permutation::identity(11), AUDIT_TOL).unwrap();
    let (sa, sb) = (Block::new([0, 1]).unwrap(), Block::new([4, 6]).unwrap());

    // Scaling A by 3 scales both sides by 3.
    let pa = block_projector(&sa, 11).unwrap();
    let pb = block_projector(&sb, 11).unwrap();
    let base = auditor.audit(&sa, &sb, &cert).unwrap();
    let scaled = auditor
        .audit_operators(&sa, &(&pa * Complex64::new(3.0, 0.0)), &sb, &pb, &cert)
        .unwrap();
    for (r, s) in base.rows.iter().zip(&scaled.rows) {
        assert!((s.lhs - 3.0 * r.lhs).abs() < 1e-12);
        assert!((s.rhs - 3.0 * r.rhs).abs() <= 1e-12 * r.rhs.max(1.0));
    }

    // Off-diagonal hopping inside each support.
    let mut a = CMatrix::zeros(11, 11);
    a[(0, 1)] = Complex64::new(0.0, 1.0);
    a[(1, 0)] = Complex64::new(0.0, -1.0);
    let mut b = CMatrix::zeros(11, 11);
    b[(4, 6)] = Complex64::new(2.0, 0.0);
    b[(6, 4)] = Complex64::new(2.0, 0.0);
    let report = auditor.audit_operators(&sa, &a, &sb, &b, &cert).unwrap();
    assert_eq!(report.violations, 0);
    assert!(report.rows.iter().any(|r| r.lhs > 0.0));

    let mut leaky = a.clone();
    leaky[(0, 3)] = Complex64::new(1.0, 0.0);
    assert!(matches!(
        auditor.audit_operators(&sa, &leaky, &sb, &b, &cert),
        Err(LabError::Validation(_))
    ));
}

#[test]
fn overlapping_supports_are_rejected() {
    let h = build_paper_example(5.0).unwrap();
    let grid = TimeGrid::uniform(5.0, 11).unwrap();
    let cert = certify(&h, 0.5, &grid, Permutation::identity(11)).unwrap();
    let a = Block::new([1, 2]).unwrap();
    assert!(matches!(
        bound_audit(&h, &a, &a, &cert, &grid),
        Err(LabError::Precondition(_))
    ));
}

#[test]
fn rhs_algebra() {
    let (a, b) = (Block::singleton(0), Block::singleton(3));
    assert_eq!(lr_bound_rhs(&a, &b, 1.0, 1.0, 0.7, 2.0, 0.0).unwrap(), 0.0);
    let near = lr_bound_rhs(&a, &b, 1.0, 1.0, 0.7, 2.0, 1.3).unwrap();
    let far = lr_bound_rhs(&a, &Block::singleton(6), 1.0, 1.0, 0.7, 2.0, 1.3).unwrap();
    assert!((far / near - (-0.7f64 * 3.0).exp()).abs() < 1e-14);
}

#[test]
fn ensemble_bounds_hold() {
    for seed in 0..8 {
        let m = ensemble_member(seed, 201);
        let n = m.spec.dimension;
        let auditor =
            BoundAuditor::new(&m.h, &m.grid, Permutation::identity(n), AUDIT_TOL).unwrap();
        for (a, b) in support_pairs(n) {
            let report = auditor.audit(&a, &b, &m.certificate).unwrap();
            assert_eq!(report.violations, 0, "seed {seed}, {a:?} vs {b:?}");
        }
        for source in 0..n {
            let spread = propagator_spread(auditor.propagator(), source).unwrap();
            assert_eq!(
                check_spread_bound(&spread, &m.certificate)
                    .unwrap()
                    .violations,
                0
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heisenberg_preserves_norm(seed in any::<u64>(), n in 1usize..=12) {
        let mut r = rng(seed);
        let a = random_complex(&mut r, n);
        let u = random_unitary(&mut r, n);
        let na = operator_norm(&a).unwrap();
        prop_assert!((operator_norm(&heisenberg(&a, &u).unwrap()).unwrap() - na).abs() < 1e-10 * na.max(1.0));
    }

    #[test]
    fn commutator_orderings_agree(seed in any::<u64>(), n in 2usize..=12) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, n);
        let b = random_hermitian(&mut r, n);
        let u = unitary_exponential(&random_anti_hermitian(&mut r, n)).unwrap();
        let forward = commutator_norm(&a, &b, &u).unwrap();
        let ubu = &u * &b * u.adjoint();
        let swapped = svd_norm(&(&ubu * &a - &a * &ubu));
        prop_assert!((forward - swapped).abs() < 1e-10 * forward.max(1.0));
        let roles = commutator_norm(&b, &a, &u.adjoint()).unwrap();
        prop_assert!((forward - roles).abs() < 1e-10 * forward.max(1.0));
    }

    #[test]
    fn projectors_commute_at_time_zero(lo in 0usize..5, gap in 1usize..4, n in 10usize..14) {
        let a = block_projector(&Block::interval(0, lo).unwrap(), n).unwrap();
        let b = block_projector(&Block::interval(lo + gap, n - 1).unwrap(), n).unwrap();
        prop_assert_eq!(commutator_norm(&a, &b, &CMatrix::identity(n, n)).unwrap(), 0.0);
    }
}
