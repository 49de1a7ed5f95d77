mod common;

use common::{enumerate_qp, random_qp, rng};
use contact_aware::qp::{kkt_residual, QpProblem, QpSolver, QpStatus, WarmStart};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn matches_enumeration_on_six_variable_problems() {
    let solver = QpSolver::default();
    let mut r = rng(17);
    for trial in 0..300 {
        let m_eq = trial % 3;
        let problem = random_qp(&mut r, 6, m_eq, 8);
        let oracle = enumerate_qp(&problem).expect("problems are built feasible");
        let sol = solver.solve(&problem).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "trial {trial}");
        let gap = (&sol.x - &oracle).amax();
        assert!(gap <= 1e-8, "trial {trial}: |x - x_enum| = {gap:e}");
    }
}

#[test]
fn infeasible_when_enumeration_finds_nothing() {
    // x0 >= 1 and x0 + x1 <= 0 and x1 >= 0
    let problem = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2)).with_inequalities(
        DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 1.0, 1.0, 0.0, -1.0]),
        DVector::from_column_slice(&[-1.0, 0.0, 0.0]),
    );
    assert!(enumerate_qp(&problem).is_none());
    assert_eq!(
        QpSolver::default().solve(&problem).unwrap().status,
        QpStatus::Infeasible
    );
}

#[test]
fn box_projection_closed_form() {
    // min 1/2 |x - t|^2 over a box is the componentwise clamp of t
    let t = DVector::from_column_slice(&[2.0, -0.3, -5.0, 0.7]);
    let mut a_in = DMatrix::zeros(8, 4);
    let mut b_in = DVector::zeros(8);
    for i in 0..4 {
        a_in[(2 * i, i)] = 1.0;
        b_in[2 * i] = 1.0;
        a_in[(2 * i + 1, i)] = -1.0;
        b_in[2 * i + 1] = 1.0;
    }
    let problem = QpProblem::new(DMatrix::identity(4, 4), -&t).with_inequalities(a_in, b_in);
    let sol = QpSolver::default().solve(&problem).unwrap();
    let expected = t.map(|v| v.clamp(-1.0, 1.0));
    assert!((&sol.x - expected).amax() < 1e-12);
    assert_eq!(sol.active_set(), vec![0, 5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kkt_residual_is_small(seed in any::<u64>(), n in 1usize..8, m_eq in 0usize..3, m_in in 0usize..12) {
        let mut r = rng(seed);
        let problem = random_qp(&mut r, n, m_eq.min(n), m_in);
        let sol = QpSolver::default().solve(&problem).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let residual = kkt_residual(&problem, &sol.x, &sol.y_eq, &sol.y_in);
        prop_assert!(residual <= 1e-8, "residual {:e}", residual);
        prop_assert!((residual - sol.kkt_residual).abs() <= 1e-12);
    }

    #[test]
    fn warm_start_reaches_the_cold_solution(seed in any::<u64>(), n in 2usize..7, m_in in 1usize..10) {
        let mut r = rng(seed);
        let problem = random_qp(&mut r, n, 0, m_in);
        let solver = QpSolver::default();
        let cold = solver.solve(&problem).unwrap();
        let warm = solver.solve(&problem.clone().with_warm_start(cold.warm_start())).unwrap();
        prop_assert!((&warm.x - &cold.x).amax() <= 1e-9);
        prop_assert!(warm.iterations <= cold.iterations);
        // a poor guess must not change the answer either
        let junk = WarmStart { x: DVector::from_element(n, 10.0), y_in: Some(DVector::from_element(m_in, 1.0)) };
        let odd = solver.solve(&problem.clone().with_warm_start(junk)).unwrap();
        prop_assert!((&odd.x - &cold.x).amax() <= 1e-8);
    }
}
