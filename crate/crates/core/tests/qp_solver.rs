mod common;

use rand::Rng;
use tsdrive::qp::{solve, QpSettings, QpSolver, QpStatus, WarmStart};

#[test]
fn random_qps_match_active_set_enumeration() {
    let mut rng = common::rng(2024);
    for case in 0..50 {
        let n = rng.random_range(1..=6);
        let m_in = rng.random_range(0..=8);
        let qp = common::random_qp(&mut rng, n, m_in);
        let (x_ref, obj_ref) = common::enumerate_active_sets(&qp).expect("origin is feasible");
        let sol = solve(&qp, QpSettings::default(), None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        assert!(
            (sol.objective - obj_ref).abs() < 1e-6,
            "case {case}: {} vs {obj_ref}",
            sol.objective
        );
        assert!((&sol.x - &x_ref).amax() < 1e-5, "case {case}");
        assert!(sol.kkt.primal <= 1e-8, "case {case}: {:?}", sol.kkt);
        assert!(
            sol.kkt.complementarity <= 1e-7,
            "case {case}: {:?}",
            sol.kkt
        );
    }
}

#[test]
fn residuals_trend_downward() {
    let mut rng = common::rng(77);
    let settings = QpSettings {
        polish: false,
        record_history: true,
        ..QpSettings::default()
    };
    let (mut checked, mut monotone) = (0, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let m_in = rng.random_range(1..=8);
        let qp = common::random_qp(&mut rng, n, m_in);
        let sol = solve(&qp, settings, None).unwrap();
        assert!(sol.is_optimal());
        let h = &sol.residual_history;
        for k in (1..h.len()).filter(|k| 10 * k < h.len()) {
            checked += 1;
            if h[10 * k - 1] <= h[k - 1] {
                monotone += 1;
            }
        }
    }
    assert!(checked > 0);
    assert!(
        monotone as f64 >= 0.95 * checked as f64,
        "{monotone}/{checked}"
    );
}

#[test]
fn optimal_solutions_are_feasible_and_complementary() {
    let mut rng = common::rng(5);
    for _ in 0..30 {
        let qp = common::random_qp(&mut rng, 6, 8);
        let sol = solve(&qp, QpSettings::default(), None).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.kkt.primal <= 1e-8);
        assert!(sol.kkt.complementarity <= 1e-7);
        assert!(sol.kkt.dual <= 1e-8);
    }
}

#[test]
fn warm_start_on_slowly_varying_sequence() {
    let mut rng = common::rng(11);
    let base = common::random_qp(&mut rng, 6, 6);
    let mut cold_solver = QpSolver::new(QpSettings::default());
    let mut warm_solver = QpSolver::new(QpSettings::default());
    let mut prev: Option<WarmStart> = None;
    for k in 0..40 {
        let mut qp = base.clone();
        for i in 0..qp.n() {
            qp.f[i] += 0.05 * (0.2 * k as f64 + i as f64).sin();
        }
        let cold = cold_solver.solve(&qp, None).unwrap();
        let warm = warm_solver.solve(&qp, prev.as_ref()).unwrap();
        assert!(warm.is_optimal() && cold.is_optimal());
        assert!((warm.objective - cold.objective).abs() < 1e-8);
        assert!(
            warm.iterations <= 2 * cold.iterations.max(10),
            "step {k}: {} vs {}",
            warm.iterations,
            cold.iterations
        );
        prev = Some(WarmStart::from(&warm));
    }
}
