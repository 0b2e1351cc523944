//! Closed-form oracles for the cross-section and angular data.

use dumbbell_core::cross_section::{
    angular_profile, lambda1_extrapolated, solve_cross_section, y1_eigenvalue_check,
};
use dumbbell_core::quadrature::{composite_gauss, sphere_measure};
use std::f64::consts::PI;

/// Squared first zeros of J_{(N−3)/2}: the first Dirichlet eigenvalue of the unit ball of ℝ^{N−1}.
const BALL_EIGENVALUES: [(usize, f64); 4] = [
    (3, 5.783_185_962_946_784),
    (4, PI * PI),
    (5, 14.681_970_642_123_893),
    (6, 20.190_728_556_426_63),
];

#[test]
fn cross_section_eigenvalue_matches_bessel_zeros() {
    for (dim, exact) in BALL_EIGENVALUES {
        let lambda = lambda1_extrapolated(dim, 2000).unwrap();
        assert!(
            (lambda - exact).abs() < 1e-6 * exact,
            "N = {dim}: {lambda} vs {exact}"
        );
    }
}

#[test]
fn cross_section_eigenfunction_is_l2_normalized() {
    for dim in 3..7 {
        let cs = solve_cross_section(dim, 2000).unwrap();
        let radial: f64 = composite_gauss(0.0, 1.0, 200, 4)
            .iter()
            .map(|&(s, w)| w * cs.psi(s).powi(2) * s.powi(dim as i32 - 2))
            .sum();
        let norm = sphere_measure(dim - 2) * radial;
        assert!((norm - 1.0).abs() < 1e-4, "N = {dim}: {norm}");
        assert_eq!(cs.psi(1.0), 0.0);
    }
}

#[test]
fn half_sphere_second_moment_is_a_sphere_fraction() {
    for dim in 3..9 {
        let ang = angular_profile(dim, 64).unwrap();
        let exact = sphere_measure(dim - 1) / (2.0 * dim as f64);
        assert!(
            (ang.upsilon.powi(2) - exact).abs() < 1e-12 * exact,
            "N = {dim}"
        );
    }
}

#[test]
fn first_coordinate_is_the_half_sphere_ground_state() {
    for dim in 3..9 {
        let quotient = y1_eigenvalue_check(dim).unwrap();
        assert!(
            (quotient - (dim as f64 - 1.0)).abs() < 1e-6,
            "N = {dim}: {quotient}"
        );
    }
}
