use std::sync::OnceLock;

use proptest::prelude::*;
use sumsq_core::inequalities::check;
use sumsq_core::{
    parse_expression, standard_battery, Domain, FieldSamples, FundamentalSolution, InequalityId, QuadratureScheme,
    RPolicy, Workspace,
};

/// Expression sources in the coefficient grammar. Divisions are by a
/// strictly positive denominator.
fn expression() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (1usize..=3).prop_map(|i| format!("x{i}")),
        (-30i32..30).prop_map(|k| format!("{}", k as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}/(1.5 + ({b})^2)")),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("abs({a})")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pretty_print_reparses(src in expression(), xs in prop::collection::vec(point(), 100)) {
        let e = parse_expression(&src).unwrap();
        let again = parse_expression(&e.to_string()).unwrap();
        for x in &xs {
            let (a, b) = (e.value(x), again.value(x));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{src} vs {again} at {x:?}: {a} {b}");
        }
    }

    #[test]
    fn derivatives_match_central_differences(src in expression(), x in point()) {
        let e = parse_expression(&src).unwrap();
        let h = 1e-4;
        let mut g = [0.0; 3];
        let mut hess = [0.0; 9];
        let on_kink = e.gradient(&x, &mut g) | e.hessian(&x, &mut hess);
        prop_assume!(!on_kink);
        for i in 0..3 {
            let shift = |s: f64| {
                let mut y = x.clone();
                y[i] += s;
                y
            };
            // Skip probes whose stencil straddles an abs kink.
            let fd2 = (e.value(&shift(h)) - 2.0 * e.value(&x) + e.value(&shift(-h))) / (h * h);
            let fd2_wide = (e.value(&shift(2.0 * h)) - 2.0 * e.value(&x) + e.value(&shift(-2.0 * h))) / (4.0 * h * h);
            prop_assume!((fd2 - fd2_wide).abs() <= 1e-3 * fd2.abs().max(1.0));
            let fd = (e.value(&shift(h)) - e.value(&shift(-h))) / (2.0 * h);
            let scale = g[i].abs().max(1.0);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * scale, "{src} ∂{i} at {x:?}: {} vs {fd}", g[i]);
            prop_assert!((fd2 - hess[i * 4]).abs() <= 1e-3 * hess[i * 4].abs().max(1.0),
                "{src} ∂²{i} at {x:?}: {} vs {fd2}", hess[i * 4]);
        }
    }

    #[test]
    fn wedges_match_their_inequalities(alpha in -8.0f64..10.0, beta in 1.0f64..10.0) {
        for id in InequalityId::ALL {
            let inside = beta > 2.0
                && match id {
                    InequalityId::Lh2a | InequalityId::Lh2 => alpha > 2.0 - beta,
                    InequalityId::Lr2a | InequalityId::Lr2 => alpha > 4.0 - beta && alpha < beta,
                    InequalityId::TwoLr2a | InequalityId::TwoLr2 => alpha > (8.0 - beta) / 3.0 && alpha < beta,
                    _ => true,
                };
            prop_assert_eq!(id.validate_params(alpha, beta).is_ok(), inside, "{} α={} β={}", id, alpha, beta);
        }
    }

    #[test]
    fn heisenberg_gauge_is_left_invariant(p in point(), x in point()) {
        let at_p = FundamentalSolution::heisenberg(1, p.clone()).unwrap();
        let at_0 = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
        // (−p)·x for the law (x, y, t)(x', y', t') = (x + x', y + y', t + t' + 2(x'y − xy')).
        let moved = [x[0] - p[0], x[1] - p[1], x[2] - p[2] + 2.0 * (p[0] * x[1] - x[0] * p[1])];
        let (a, b) = (at_p.gauge(&x), at_0.gauge(&moved));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} vs {b}");
    }
}

struct Fixture {
    ws: Workspace,
    samples: Vec<FieldSamples>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let fs = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
        let d = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
        let scheme = QuadratureScheme {
            order: 6,
            ..QuadratureScheme::default()
        };
        let ws = Workspace::new(&fs, &d, &scheme).unwrap();
        let samples = standard_battery(&d)
            .iter()
            .map(|u| ws.sample(u, false).unwrap())
            .collect();
        Fixture { ws, samples }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hardy_reports_hold_and_are_consistent(k in 0usize..12, t in 0.02f64..1.0, refined in any::<bool>()) {
        let f = fixture();
        let beta = 3.0;
        // α in (2 − β, β].
        let alpha = 2.0 - beta + t * (2.0 * beta - 2.0);
        let id = if refined { InequalityId::Lh2 } else { InequalityId::Lh2a };
        let r = check(&f.ws, id, &f.samples[k], alpha, beta, RPolicy::Auto).unwrap();
        prop_assert!(r.holds(), "{} {} α={}: slack {} error {}", r.name, r.function, alpha, r.slack, r.error_total);
        prop_assert_eq!(r.slack, r.recompute_slack());
        prop_assert_eq!(r.error_total, r.recompute_error());
        prop_assert!(r.rhs_terms.iter().all(|t| t.error >= 0.0));
        prop_assert_eq!(r.constant, ((beta + alpha - 2.0) / 2.0).powi(2));
    }

    #[test]
    fn uncertainty_reports_hold(k in 0usize..12, which in 0usize..4) {
        let f = fixture();
        let id = [InequalityId::Up1a, InequalityId::Up2a, InequalityId::Up1, InequalityId::Up2][which];
        let r = check(&f.ws, id, &f.samples[k], 0.0, 3.0, RPolicy::Auto).unwrap();
        prop_assert!(r.holds(), "{} {}: slack {} error {}", r.name, r.function, r.slack, r.error_total);
    }
}
