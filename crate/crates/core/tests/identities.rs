//! Green, Stokes, normalization and representation identities against
//! closed-form values.

use std::f64::consts::PI;

use sumsq_core::inequalities::{
    green_first_residual, green_second_residual, normalization_check, representation_residual, stokes_mc_interior,
    stokes_residual,
};
use sumsq_core::{standard_battery, Domain, Frame, FundamentalSolution, QuadratureScheme, ScalarField};

fn expr(src: &str) -> ScalarField {
    ScalarField::from_expression(src, src).unwrap()
}

fn h1_box() -> Domain {
    Domain::build_box(vec![-1.0, -0.5, -0.75], vec![1.0, 0.5, 0.75]).unwrap()
}

/// Folland's constant `2^{m−2}Γ(m/2)²/π^{m+1}` for `m = 1`, divided by 4 for
/// the frame `X = ∂x + 2y∂t` with gauge `(|z|⁴ + t²)^{1/4}`.
fn heisenberg1_constant() -> f64 {
    let gamma_half_sq = PI;
    0.5 * gamma_half_sq / (PI * PI) / 4.0
}

#[test]
fn euclidean_flux_of_quadratic() {
    // Δ(x1²) = 2 on the unit cube; the flux through x1 = 1 is 2.
    let d = Domain::build_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
    let r = green_first_residual(
        &Frame::euclidean(3),
        &expr("x1^2"),
        &expr("1"),
        &d,
        &QuadratureScheme::default(),
    )
    .unwrap();
    assert!((r.interior - 2.0).abs() < 1e-12, "{r:?}");
    assert!((r.boundary - 2.0).abs() < 1e-12, "{r:?}");
}

#[test]
fn heisenberg_sub_laplacian_of_t_squared() {
    // 𝓛(t²) = 8(x² + y²); over the box that integrates to 8 + 2.
    let r = green_first_residual(
        &Frame::heisenberg(1),
        &expr("x3^2"),
        &expr("1"),
        &h1_box(),
        &QuadratureScheme::default(),
    )
    .unwrap();
    assert!((r.interior - 10.0).abs() < 1e-10, "{r:?}");
    assert!((r.boundary - 10.0).abs() < 1e-10, "{r:?}");
}

#[test]
fn green_identities_on_battery_pairs() {
    let scheme = QuadratureScheme::default();
    for (frame, d) in [
        (
            Frame::euclidean(3),
            Domain::build_box(vec![-1.0, -0.5, -0.75], vec![1.0, 0.5, 0.75]).unwrap(),
        ),
        (Frame::heisenberg(1), h1_box()),
    ] {
        let b = standard_battery(&d);
        let get = |name: &str| b.iter().find(|u| u.name() == name).unwrap().clone();
        for (u, v) in [
            ("quadratic", "gaussian"),
            ("trig", "exp_linear"),
            ("gaussian_shifted", "affine"),
        ] {
            let (u, v) = (get(u), get(v));
            let g1 = green_first_residual(&frame, &u, &v, &d, &scheme).unwrap();
            let g2 = green_second_residual(&frame, &u, &v, &d, &scheme).unwrap();
            assert!(
                g1.relative() < 1e-6,
                "{} {} {}: {g1:?}",
                frame.name(),
                u.name(),
                v.name()
            );
            assert!(
                g2.relative() < 1e-6,
                "{} {} {}: {g2:?}",
                frame.name(),
                u.name(),
                v.name()
            );
        }
    }
}

#[test]
fn green_second_is_antisymmetric() {
    let d = h1_box();
    let scheme = QuadratureScheme::default();
    let f = Frame::heisenberg(1);
    let (u, v) = (expr("x1^2*x3 + x2"), expr("1 + x2^2 - x1*x3"));
    let a = green_second_residual(&f, &u, &v, &d, &scheme).unwrap();
    let b = green_second_residual(&f, &v, &u, &d, &scheme).unwrap();
    assert!((a.interior + b.interior).abs() < 1e-12);
    assert!((a.boundary + b.boundary).abs() < 1e-12);
}

#[test]
fn stokes_on_cube_matches_closed_form() {
    // X_1(x1²) = 2x1 integrates to 1 over the unit cube.
    let d = Domain::build_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
    let fk = [expr("x1^2"), expr("0"), expr("0")];
    let r = stokes_residual(&Frame::euclidean(3), &fk, &d, &QuadratureScheme::default()).unwrap();
    assert!((r.total.interior - 1.0).abs() < 1e-12, "{r:?}");
    assert!(r.total.residual.abs() < 1e-12, "{r:?}");
}

#[test]
fn stokes_nonsmooth_frame_agrees_with_monte_carlo() {
    let frame = Frame::nonsmooth_r3();
    let d = Domain::build_box(vec![-0.5; 3], vec![0.5; 3])
        .unwrap()
        .with_kinks(frame.kink_planes());
    let scheme = QuadratureScheme::default();
    let sets = [
        ["x1*x3 + x2^2", "x2*x3 + x1^2"],
        ["abs(x2)*x3^2 - x1", "abs(x1)*x3^2 - x2"],
        ["(1 + x1^2)/(2 + x3) + x3^3*x2", "(1 + x2^2)/(2 + x3) + x3^3*x1"],
    ];
    for set in sets {
        let fk: Vec<ScalarField> = set.iter().map(|s| expr(s)).collect();
        let r = stokes_residual(&frame, &fk, &d, &scheme).unwrap();
        assert!(r.total.residual.abs() < 1e-4, "{set:?}: {r:?}");
        let mc = stokes_mc_interior(&frame, &fk, &d, 100_000, 7).unwrap();
        let sigma = mc.error_estimate;
        assert!(
            (mc.value - r.total.boundary).abs() <= 5.0 * sigma + 1e-4,
            "{set:?}: mc {mc:?} vs {r:?}"
        );
    }
}

#[test]
fn euclidean_normalization_with_closed_form_constant() {
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3])
        .unwrap()
        .with_constant(1.0 / (4.0 * PI))
        .unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    let flux = normalization_check(&fs, &ball, &QuadratureScheme::default()).unwrap();
    assert!((flux.value + 1.0).abs() < 1e-3, "{flux:?}");
    // Off-centre pole in a box: still −1.
    let fs = FundamentalSolution::euclidean(3, vec![0.1, -0.2, 0.05])
        .unwrap()
        .with_constant(1.0 / (4.0 * PI))
        .unwrap();
    let b = Domain::build_box(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let flux = normalization_check(&fs, &b, &QuadratureScheme::default()).unwrap();
    assert!((flux.value + 1.0).abs() < 1e-3, "{flux:?}");
}

#[test]
fn exterior_pole_has_zero_flux() {
    let fs = FundamentalSolution::euclidean(3, vec![2.0, 0.0, 0.0]).unwrap();
    let b = Domain::build_box(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let flux = normalization_check(&fs, &b, &QuadratureScheme::default()).unwrap();
    assert!(flux.value.abs() < 1e-6, "{flux:?}");
}

#[test]
fn heisenberg_normalization_with_closed_form_constant() {
    let c = heisenberg1_constant();
    let fs = FundamentalSolution::heisenberg(1, vec![0.0; 3])
        .unwrap()
        .with_constant(c)
        .unwrap();
    let ball = Domain::build_gauge_ball(&fs, 1.0).unwrap();
    let flux = normalization_check(&fs, &ball, &QuadratureScheme::default()).unwrap();
    assert!((flux.value + 1.0).abs() < 1e-2, "{flux:?}");
    let fs = FundamentalSolution::heisenberg(1, vec![0.1, -0.2, 0.05])
        .unwrap()
        .with_constant(c)
        .unwrap();
    let flux = normalization_check(&fs, &h1_box(), &QuadratureScheme::default()).unwrap();
    assert!((flux.value + 1.0).abs() < 1e-2, "{flux:?}");
}

#[test]
fn calibrated_constants_match_closed_forms() {
    let scheme = QuadratureScheme::default();
    let e = FundamentalSolution::euclidean(3, vec![0.0; 3]).unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    let c = e.calibrate_constant(&ball, &scheme).unwrap().constant();
    assert!((c - 1.0 / (4.0 * PI)).abs() < 1e-3 / (4.0 * PI), "{c}");

    // n = 5: 1/((n−2)|S⁴|) with |S⁴| = 8π²/3.
    let e5 = FundamentalSolution::euclidean(5, vec![0.0; 5]).unwrap();
    let ball5 = Domain::build_euclidean_ball(vec![0.0; 5], 1.0).unwrap();
    let c5 = e5.calibrate_constant(&ball5, &scheme).unwrap().constant();
    let expected = 1.0 / (3.0 * 8.0 * PI * PI / 3.0);
    assert!((c5 / expected - 1.0).abs() < 1e-3, "{c5} vs {expected}");

    let h = FundamentalSolution::heisenberg(1, vec![0.0; 3]).unwrap();
    let gb = Domain::build_gauge_ball(&h, 1.0).unwrap();
    let ch = h.calibrate_constant(&gb, &scheme).unwrap().constant();
    let expected = heisenberg1_constant();
    assert!((ch / expected - 1.0).abs() < 1e-2, "{ch} vs {expected}");
}

#[test]
fn representation_reproduces_values() {
    let scheme = QuadratureScheme::default();
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3])
        .unwrap()
        .with_constant(1.0 / (4.0 * PI))
        .unwrap();
    let b = Domain::build_box(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let u = expr("1 + x1^2 - x2*x3 + x3");
    for x in [[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [-0.2, 0.1, -0.25]] {
        let r = representation_residual(&fs, &u, &x, &b, &scheme).unwrap();
        let exact = 1.0 + x[0] * x[0] - x[1] * x[2] + x[2];
        assert!((r.value - exact).abs() < 1e-14);
        assert!(r.residual.abs() < 1e-3, "{x:?}: {r:?}");
    }
}

#[test]
fn harmonic_function_has_no_volume_term() {
    let scheme = QuadratureScheme::default();
    let fs = FundamentalSolution::euclidean(3, vec![0.0; 3])
        .unwrap()
        .with_constant(1.0 / (4.0 * PI))
        .unwrap();
    let ball = Domain::build_euclidean_ball(vec![0.0; 3], 1.0).unwrap();
    let r = representation_residual(&fs, &expr("x1^2 - x2^2 + x3"), &[0.0; 3], &ball, &scheme).unwrap();
    assert!(r.volume.abs() < 1e-12, "{r:?}");
    assert!(r.residual.abs() < 1e-3, "{r:?}");
}
