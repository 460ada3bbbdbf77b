//! Property tests for identities that must hold on arbitrary inputs.

use proptest::prelude::*;
use qfrac::bounds::ml_bounds_check;
use qfrac::qcalculus::{caputo_derivative, jackson_integral};
use qfrac::qcore::{q_gamma, q_number, q_pochhammer, q_pochhammer_real};
use qfrac::qspecial::{q_exp_product, q_exp_series, q_mittag_leffler};
use qfrac::spectral::{
    direct_solve_suborder, inverse_solve, sobolev_norm, CoefficientField, Source, SpectralModel, TimeGrid,
};
use qfrac::sum::CompensatedSum;
use qfrac::wynn::EpsilonTable;
use qfrac::{EvalStrategy, MLParams, QContext};

fn ctx(q: f64) -> QContext {
    QContext::new(q).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_recurrence(x in 0.05f64..6.0, q in 0.2f64..0.9) {
        let c = ctx(q);
        let lhs = q_gamma(x + 1.0, &c).unwrap();
        prop_assert!(rel(q_number(x, &c) * q_gamma(x, &c).unwrap(), lhs) < 1e-12);
    }

    #[test]
    fn pochhammer_splitting(a in -0.9f64..0.95, n in 0usize..=20, q in 0.2f64..0.9) {
        let lhs = q_pochhammer(a, 2 * n, &ctx(q));
        let c2 = ctx(q * q);
        let rhs = q_pochhammer(a, n, &c2) * q_pochhammer(a * q, n, &c2);
        prop_assert!(rel(rhs, lhs) < 1e-12);
    }

    #[test]
    fn real_index_pochhammer_is_additive(a in -0.9f64..0.9, x in 0.0f64..3.0, y in 0.0f64..3.0, q in 0.2f64..0.9) {
        let c = ctx(q);
        let whole = q_pochhammer_real(a, x + y, &c).unwrap().value;
        let head = q_pochhammer_real(a, x, &c).unwrap().value;
        let tail = q_pochhammer_real(a * q.powf(x), y, &c).unwrap().value;
        prop_assert!(rel(head * tail, whole) < 1e-12);
    }

    #[test]
    fn q_exp_series_equals_product(frac in -0.9f64..0.9, q in 0.2f64..0.8) {
        let c = ctx(q);
        let x = frac / (1.0 - q);
        let s = q_exp_series(x, &c).unwrap().value;
        let p = q_exp_product(x, &c).unwrap().value;
        prop_assert!(rel(s, p) < 1e-11);
    }

    #[test]
    fn ml_matches_term_sum(alpha in 0.2f64..1.8, beta in 0.1f64..2.0, frac in -0.7f64..0.7, q in 0.3f64..0.7) {
        let c = ctx(q);
        let p = MLParams::new(alpha, beta).unwrap();
        let z = frac * p.radius(&c);
        let mut oracle = CompensatedSum::new();
        for k in 0..400 {
            oracle.add(z.powi(k) / q_gamma(alpha * k as f64 + beta, &c).unwrap());
        }
        let v = q_mittag_leffler(&p, z, &c, &EvalStrategy::default()).unwrap();
        prop_assert!((v.value - oracle.value()).abs() < 1e-12 * oracle.value().abs().max(1.0));
    }

    #[test]
    fn ml_stays_in_unit_interval(alpha in 0.05f64..0.95, frac in 0.001f64..0.95, q in 0.2f64..0.8) {
        let c = ctx(q);
        let z = frac * (1.0 - q).powf(-alpha);
        let r = ml_bounds_check(alpha, z, &c, &EvalStrategy::default()).unwrap();
        prop_assert!(r.holds_range, "value {}", r.value);
    }

    #[test]
    fn wynn_sums_alternating_geometric(x in 1.05f64..4.0) {
        let mut table = EpsilonTable::new();
        let mut s = 0.0;
        let mut est = 0.0;
        for k in 0..6 {
            s += (-x).powi(k);
            est = table.push(s);
        }
        prop_assert!(rel(est, 1.0 / (1.0 + x)) < 1e-10);
    }

    #[test]
    fn jackson_fundamental_theorem(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c3 in -2.0f64..2.0, a in 0.1f64..3.0, q in 0.2f64..0.9) {
        let c = ctx(q);
        let f = |t: f64| c0 + c1 * t + c3 * t * t * t;
        let df = |t: f64| (f(t) - f(q * t)) / (t * (1.0 - q));
        let v = jackson_integral(&df, 0.0, a, &c).unwrap().value;
        prop_assert!((v - (f(a) - f(0.0))).abs() < 1e-10 * f(a).abs().max(1.0));
    }

    #[test]
    fn caputo_is_linear(alpha in 0.1f64..1.9, x in 0.2f64..2.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let c = ctx(0.5);
        let f = |t: f64| t * t;
        let g = |t: f64| t.powf(2.5) - t;
        let h = |t: f64| a * f(t) + b * g(t);
        let cf = caputo_derivative(&f, alpha, x, &c).unwrap().value;
        let cg = caputo_derivative(&g, alpha, x, &c).unwrap().value;
        let ch = caputo_derivative(&h, alpha, x, &c).unwrap().value;
        let scale = (a * cf).abs().max((b * cg).abs()).max(1.0);
        prop_assert!((ch - (a * cf + b * cg)).abs() < 1e-11 * scale);
    }

    #[test]
    fn sobolev_norm_grows_with_order(coeffs in prop::collection::vec(-5.0f64..5.0, 1..12), d in 0.0f64..4.0, step in 0.0f64..2.0) {
        let model = SpectralModel::dirichlet_sine(coeffs.len(), 1.0).unwrap();
        let field = CoefficientField::new(coeffs);
        let lo = sobolev_norm(&field, &model, d).unwrap();
        let hi = sobolev_norm(&field, &model, d + step).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn direct_solve_is_linear(p1 in prop::collection::vec(-1.0f64..1.0, 3), p2 in prop::collection::vec(-1.0f64..1.0, 3),
                              f in prop::collection::vec(-2.0f64..2.0, 3), a in -2.0f64..2.0, alpha in 0.3f64..1.0) {
        let c = ctx(0.5);
        let s = EvalStrategy::default();
        let model = SpectralModel::dirichlet_sine(3, 1.0).unwrap();
        let grid = TimeGrid::with_floor(0.5, 1e-8, &c).unwrap();
        let (p1, p2): (CoefficientField, CoefficientField) = (p1.into(), p2.into());
        let src = Source::Constant(f.into());
        let u1 = direct_solve_suborder(alpha, &p1, &src, &model, &grid, &c, &s).unwrap();
        let u2 = direct_solve_suborder(alpha, &p2, &Source::Zero, &model, &grid, &c, &s).unwrap();
        let u = direct_solve_suborder(alpha, &p1.combine(1.0, &p2, a).unwrap(), &src, &model, &grid, &c, &s).unwrap();
        for i in 0..3 {
            for j in 0..grid.len() {
                let expect = u1.trace(i)[j] + a * u2.trace(i)[j];
                prop_assert!((u.trace(i)[j] - expect).abs() < 1e-10 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn inverse_hits_both_endpoints(phi in prop::collection::vec(-1.0f64..1.0, 4), rho in prop::collection::vec(-1.0f64..1.0, 4), horizon in 0.05f64..0.5) {
        let c = ctx(0.5);
        let model = SpectralModel::dirichlet_sine(4, 1.0).unwrap();
        let (phi, rho): (CoefficientField, CoefficientField) = (phi.into(), rho.into());
        let (b, _) = inverse_solve(0.5, &phi, &rho, horizon, &model, &c, &EvalStrategy::default()).unwrap();
        for (u, r) in b.at_horizon().iter().zip(rho.values()) {
            prop_assert!((u - r).abs() <= 1e-12 * (1.0 + r.abs()));
        }
        for (u, p) in b.at_origin().iter().zip(phi.values()) {
            prop_assert!((u - p).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }
}
