use num_complex::Complex64;
use proptest::prelude::*;
use swipt_conic::{AffineExpr, ConicError, Dual, Problem, Settings, Status};

fn settings() -> Settings {
    Settings::default()
}

#[test]
fn lower_bound_is_attained() {
    let mut p = Problem::new();
    let v = p.scalar();
    p.minimize(&v.expr());
    let mut e = v.expr();
    e.add_constant(-1.0);
    let c = p.nonneg(e);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.value(v) - 1.0).abs() < 1e-7);
    assert!((sol.objective - 1.0).abs() < 1e-7);
    match sol.dual(c).unwrap() {
        Dual::Vector(z) => assert!((z[0] - 1.0).abs() < 1e-6),
        other => panic!("unexpected dual {other:?}"),
    }
}

#[test]
fn contradictory_bounds_are_infeasible() {
    let mut p = Problem::new();
    let v = p.scalar();
    p.minimize(&v.expr());
    p.nonneg(v.expr().scaled(-1.0));
    let mut e = v.expr();
    e.add_constant(-1.0);
    p.nonneg(e);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Infeasible);
}

fn channel() -> Vec<Complex64> {
    vec![
        Complex64::new(0.8, -0.3),
        Complex64::new(-0.2, 0.5),
        Complex64::new(0.1, 0.9),
        Complex64::new(-0.6, -0.4),
    ]
}

#[test]
fn single_user_power_minimization_matches_matched_filter() {
    // min ||f||^2 s.t. Re(h^H f) >= sqrt(gamma) * sigma, with closed form gamma sigma^2 / ||h||^2.
    let h = channel();
    let (gamma, sigma2): (f64, f64) = (3.0, 1e-3);
    let mut p = Problem::new();
    let f = p.complex_vector(h.len());
    p.add_squared_norm(&f, 1.0);
    let mut lhs = f.inner(&h).re;
    lhs.add_constant(-(gamma * sigma2).sqrt());
    p.nonneg(lhs);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    let hn2: f64 = h.iter().map(|c| c.norm_sqr()).sum();
    let expected = gamma * sigma2 / hn2;
    assert!((sol.objective - expected).abs() < 1e-8 * expected.max(1e-12) + 1e-12);
    let fv = sol.vector(&f);
    let scale = (gamma * sigma2).sqrt() / hn2;
    for (fi, hi) in fv.iter().zip(&h) {
        assert!((fi - hi * scale).norm() < 1e-5 * scale);
    }
}

#[test]
fn trace_minimization_over_psd_cone_is_rank_one() {
    let h = channel();
    let mut p = Problem::new();
    let f = p.hermitian(h.len());
    p.minimize(&f.trace());
    let mut q = f.quad_form(&h);
    q.add_constant(-1.0);
    p.nonneg(q);
    let c = p.psd(f);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    let hn2: f64 = h.iter().map(|c| c.norm_sqr()).sum();
    assert!((sol.objective - 1.0 / hn2).abs() < 1e-8);
    let eig = sol.matrix(&f).symmetric_eigenvalues();
    let mut ev: Vec<f64> = eig.iter().cloned().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert!(ev[1] / ev[0] < 1e-6);
    assert!(matches!(sol.dual(c), Some(Dual::Matrix(_))));
}

#[test]
fn log_reward_has_interior_optimum() {
    // min c x - ln(1 + x), x >= 0 -> x = 1/c - 1
    let c = 0.25;
    let mut p = Problem::new();
    let x = p.scalar();
    p.minimize(&x.expr().scaled(c));
    let mut arg = x.expr();
    arg.add_constant(1.0);
    p.add_neg_log(1.0, arg);
    p.nonneg(x.expr());
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.value(x) - 3.0).abs() < 1e-6);
}

#[test]
fn rotated_cone_bounds_reciprocal() {
    // min x s.t. x * y >= 1, y <= 2
    let mut p = Problem::new();
    let x = p.scalar();
    let y = p.scalar();
    p.minimize(&x.expr());
    p.rotated_second_order(x.expr(), y.expr(), vec![AffineExpr::constant(1.0)]);
    let mut cap = y.expr().scaled(-1.0);
    cap.add_constant(2.0);
    p.nonneg(cap);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.value(x) - 0.5).abs() < 1e-7);
}

#[test]
fn second_order_cone_projection() {
    // min t s.t. ||(u1 - 3, u2 - 4)|| <= t, u1 + u2 >= 14 -> distance sqrt(24.5)
    let mut p = Problem::new();
    let t = p.scalar();
    let u1 = p.scalar();
    let u2 = p.scalar();
    p.minimize(&t.expr());
    let mut a = u1.expr();
    a.add_constant(-3.0);
    let mut b = u2.expr();
    b.add_constant(-4.0);
    p.second_order(t.expr(), vec![a, b]);
    let mut s = u1.expr();
    s.add_term(u2, 1.0).add_constant(-14.0);
    p.nonneg(s);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.objective - 24.5f64.sqrt()).abs() < 1e-7);
}

#[test]
fn dual_objective_bounds_primal() {
    let h = channel();
    let mut p = Problem::new();
    let f = p.complex_vector(h.len());
    p.add_squared_norm(&f, 2.0);
    let mut lhs = f.inner(&h).re;
    lhs.add_constant(-0.1);
    p.nonneg(lhs);
    let sol = p.solve(&settings(), None).unwrap();
    assert!(sol.dual_objective <= sol.objective);
    assert!(sol.objective - sol.dual_objective <= 1e-8 * sol.objective.abs() + 1e-12);
    assert!(sol.stationarity < 1e-6);
}

#[test]
fn infeasible_start_triggers_phase_one() {
    let mut p = Problem::new();
    let x = p.scalar();
    p.minimize(&x.expr());
    let mut e = x.expr();
    e.add_constant(-5.0);
    p.nonneg(e);
    let sol = p.solve(&settings(), Some(&[-100.0])).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.value(x) - 5.0).abs() < 1e-6);
}

#[test]
fn foreign_variable_is_rejected() {
    let mut other = Problem::new();
    other.scalar();
    let stray = other.scalar();
    let mut p = Problem::new();
    p.scalar();
    p.nonneg(stray.expr());
    assert_eq!(
        p.solve(&settings(), None).unwrap_err(),
        ConicError::UnknownVariable { index: 1, num_vars: 1 }
    );
}

#[test]
fn start_dimension_is_checked() {
    let mut p = Problem::new();
    p.scalar();
    assert_eq!(
        p.solve(&settings(), Some(&[0.0, 1.0])).unwrap_err(),
        ConicError::StartDimension { got: 2, expected: 1 }
    );
}

#[test]
fn negative_log_weight_is_rejected() {
    let mut p = Problem::new();
    let x = p.scalar();
    p.add_neg_log(-1.0, x.expr());
    assert_eq!(p.solve(&settings(), None).unwrap_err(), ConicError::NegativeLogWeight(-1.0));
}

/// min c.x over the unit box, with a scale on the objective.
fn box_lp(c: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let mut p = Problem::new();
    let vars: Vec<_> = c.iter().map(|_| p.scalar()).collect();
    let mut obj = AffineExpr::default();
    for (v, ci) in vars.iter().zip(c) {
        obj.add_term(*v, scale * ci);
        p.nonneg(v.expr());
        let mut up = v.expr().scaled(-1.0);
        up.add_constant(1.0);
        p.nonneg(up);
    }
    p.minimize(&obj);
    let sol = p.solve(&settings(), None).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    (sol.x, sol.objective)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_lp_reaches_vertex_value(c in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let (_, obj) = box_lp(&c, 1.0);
        let exact: f64 = c.iter().filter(|v| **v < 0.0).sum();
        prop_assert!((obj - exact).abs() <= 1e-7 * (1.0 + exact.abs()));
    }

    #[test]
    fn objective_scaling_preserves_argmin(
        c in prop::collection::vec(0.1f64..5.0, 1..5),
        scale in 1e-3f64..1e3,
    ) {
        // Mixed quadratic objective so the argmin is unique and interior.
        let solve = |s: f64| {
            let mut p = Problem::new();
            let vars: Vec<_> = c.iter().map(|_| p.scalar()).collect();
            let mut obj = AffineExpr::default();
            for (v, ci) in vars.iter().zip(&c) {
                obj.add_term(*v, -s * ci);
                p.add_product(*v, *v, s);
                let mut up = v.expr().scaled(-1.0);
                up.add_constant(1.0);
                p.nonneg(up);
            }
            p.minimize(&obj);
            p.solve(&settings(), None).unwrap()
        };
        let a = solve(1.0);
        let b = solve(scale);
        prop_assert!((b.objective - scale * a.objective).abs() <= 1e-6 * scale * (1.0 + a.objective.abs()));
        for (xa, xb) in a.x.iter().zip(&b.x) {
            prop_assert!((xa - xb).abs() <= 1e-5);
        }
    }
}
