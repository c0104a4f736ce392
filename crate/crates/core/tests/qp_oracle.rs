mod common;

use common::{enumerate_penalty_qp, enumerate_qp, random_consistent_qp, random_qp};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbundle::qp::{
    classify_penalty_solution, detect_inconsistency, kkt_residual, min_linearized_violation, solve_penalty,
    solve_standard, QpSettings, QpStatus, QpSubproblem,
};

fn settings() -> QpSettings {
    QpSettings::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn standard_form_matches_enumeration(seed in any::<u64>(), n in 1usize..=3, m in 0usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_consistent_qp(&mut rng, n, m);
        let (d_ref, obj_ref) = enumerate_qp(&sub).expect("consistent by construction");
        let sol = solve_standard(&sub, &settings()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!((&sol.step - &d_ref).amax() <= 1e-6, "d {} vs {}", sol.step, d_ref);
        prop_assert!((sub.objective(&sol.step) - obj_ref).abs() <= 1e-8 * (1.0 + obj_ref.abs()));
        prop_assert!(kkt_residual(&sub, &sol) <= 1e-9);
    }

    #[test]
    fn penalty_form_matches_enumeration(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2, pi in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_qp(&mut rng, n, m).with_penalty(pi);
        let (d_ref, obj_ref) = enumerate_penalty_qp(&sub);
        let sol = solve_penalty(&sub, &settings()).unwrap();
        prop_assert!((sub.objective(&sol.step) - obj_ref).abs() <= 1e-8 * (1.0 + obj_ref.abs()));
        prop_assert!((&sol.step - &d_ref).amax() <= 1e-6);
        prop_assert!(kkt_residual(&sub, &sol) <= 1e-9);
    }

    #[test]
    fn penalty_multipliers_follow_the_sign_pattern(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3, pi in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = random_qp(&mut rng, n, m).with_penalty(pi);
        let sol = solve_penalty(&sub, &settings()).unwrap();
        let class = classify_penalty_solution(&sub, &sol, 1e-7);
        for &j in &class.inactive {
            prop_assert!((sol.lambda[j] - f64::from(class.signs[j]) * pi).abs() <= 1e-6);
        }
        for &j in &class.active {
            prop_assert!(sol.lambda[j].abs() <= pi + 1e-6);
        }
    }

    #[test]
    fn unconstrained_solution_is_a_clamp(g in prop::collection::vec(-10.0f64..10.0, 1..=4), alpha in 0.1f64..10.0) {
        let n = g.len();
        let sub = QpSubproblem::new(alpha, DVector::from_vec(g.clone()), DVector::from_element(n, -1.0), DVector::from_element(n, 1.0));
        let sol = solve_standard(&sub, &settings()).unwrap();
        for i in 0..n {
            prop_assert!((sol.step[i] - (-g[i] / alpha).clamp(-1.0, 1.0)).abs() <= 1e-9);
        }
    }
}

#[test]
fn inconsistent_linearization_is_detected() {
    // d₁ + d₂ = 1 and d₁ + d₂ = −1 cannot both hold.
    let jac = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let sub = QpSubproblem::new(
        1.0,
        DVector::zeros(2),
        DVector::from_element(2, -3.0),
        DVector::from_element(2, 3.0),
    )
    .with_constraints(DVector::from_vec(vec![-1.0, 1.0]), jac.clone());
    assert!(detect_inconsistency(&sub, 1e-8).unwrap());
    let sol = solve_standard(&sub, &settings()).unwrap();
    assert_eq!(sol.status, QpStatus::Inconsistent);
    let (violation, _) = min_linearized_violation(&sub, &settings()).unwrap();
    assert!((violation - 2.0).abs() <= 1e-8, "{violation}");

    // Consistent but only reachable at the edge of the box.
    let sub = QpSubproblem::new(
        1.0,
        DVector::zeros(2),
        DVector::from_element(2, -0.5),
        DVector::from_element(2, 0.5),
    )
    .with_constraints(
        DVector::from_vec(vec![-1.0]),
        DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
    );
    assert!(!detect_inconsistency(&sub, 1e-8).unwrap());
}

#[test]
fn box_only_violation_oracle_agrees_on_random_inconsistent_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let sub = random_qp(&mut rng, 2, 2);
        let (violation, _) = min_linearized_violation(&sub, &settings()).unwrap();
        let oracle = sbundle::problems::reference::min_l1_violation_2d(
            &sub.constraint_values,
            &sub.constraint_jacobian,
            &sub.step_lower,
            &sub.step_upper,
            201,
        );
        assert!(violation <= oracle + 1e-7, "{violation} vs {oracle}");
        assert!(violation >= oracle - 1e-2 * (1.0 + oracle), "{violation} vs {oracle}");
    }
}

#[test]
fn invalid_subproblems_are_rejected() {
    let sub = QpSubproblem::new(
        0.0,
        DVector::zeros(2),
        DVector::from_element(2, -1.0),
        DVector::from_element(2, 1.0),
    );
    assert!(solve_standard(&sub, &settings()).is_err());
    let sub = QpSubproblem::new(
        1.0,
        DVector::zeros(2),
        DVector::from_element(2, 1.0),
        DVector::from_element(2, -1.0),
    );
    assert!(solve_standard(&sub, &settings()).is_err());
}
