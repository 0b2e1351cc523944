//! Property tests for structural invariants of the public API.

use dumbbell_core::blowup::{fit_power, h_u};
use dumbbell_core::eigensolver::sign_normalize;
use dumbbell_core::frequency::frequency_tube_model;
use dumbbell_core::geometry::{
    build_cylinder_mesh, build_mesh, DumbbellSpec, MeridianMesh, Resolution,
};
use dumbbell_core::harmonic_profiles::kelvin;
use dumbbell_core::operators::{Analytic, DiscreteField, FieldExpr};
use dumbbell_core::quadrature::{gauss_legendre, sphere_measure};
use dumbbell_core::weight_model::{Bump, PWeight};
use proptest::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

fn cylinder() -> Arc<MeridianMesh> {
    static MESH: OnceLock<Arc<MeridianMesh>> = OnceLock::new();
    MESH.get_or_init(|| Arc::new(build_cylinder_mesh(3, -4.0, 1.0, 1.0, 40, 8).unwrap()))
        .clone()
}

fn tube_field(k: f64) -> DiscreteField {
    DiscreteField::from_fn(cylinder(), move |z, s| (k * z).exp() * (1.0 - s * s))
}

/// Number of triangles containing each undirected edge.
fn edge_counts(mesh: &MeridianMesh) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for tri in &mesh.triangles {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauss_legendre_is_exact_below_twice_the_order(n in 1usize..24, k_frac in 0.0f64..1.0) {
        let k = ((2 * n - 1) as f64 * k_frac) as i32;
        let (x, w) = gauss_legendre(n);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
        let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        prop_assert!((q - exact).abs() < 1e-13, "n = {n}, k = {k}: {q} vs {exact}");
    }

    #[test]
    fn sphere_measures_satisfy_the_dimension_recursion(k in 1usize..12) {
        let lhs = sphere_measure(k + 2);
        let rhs = 2.0 * std::f64::consts::PI / (k as f64 + 1.0) * sphere_measure(k);
        prop_assert!((lhs - rhs).abs() < 1e-12 * rhs);
    }

    #[test]
    fn power_fit_recovers_exact_power_laws(a in -6.0f64..6.0, logc in -10.0f64..10.0, lo in 0.01f64..0.1) {
        let c = logc.exp();
        let samples: Vec<(f64, f64)> = (0..6).map(|i| {
            let x = lo * 1.5f64.powi(i);
            (x, c * x.powf(a))
        }).collect();
        let fit = fit_power(&samples).unwrap();
        prop_assert!((fit.exponent - a).abs() < 1e-9);
        prop_assert!((fit.coefficient / c - 1.0).abs() < 1e-8);
        prop_assert!(fit.rms < 1e-9);
    }

    #[test]
    fn kelvin_transform_is_an_involution(
        dim in 3usize..7,
        cz in -2.0f64..2.0,
        radius in 0.3f64..3.0,
        z in -3.0f64..3.0,
        s in 0.05f64..3.0,
    ) {
        let v = Analytic(|z: f64, s: f64| (z * z - s * s + 3.0 * z, [2.0 * z + 3.0, -2.0 * s]));
        let once = kelvin(&v, cz, radius, dim);
        let twice = kelvin(&once, cz, radius, dim);
        let (a, ga) = v.eval(z, s).unwrap();
        let (b, gb) = twice.eval(z, s).unwrap();
        let scale = 1.0 + a.abs() + ga[0].abs() + ga[1].abs();
        prop_assert!((a - b).abs() < 1e-9 * scale);
        prop_assert!((ga[0] - gb[0]).abs() < 1e-8 * scale);
        prop_assert!((ga[1] - gb[1]).abs() < 1e-8 * scale);
    }

    #[test]
    fn tube_frequency_is_invariant_under_field_scaling(k in 0.5f64..3.0, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let u = tube_field(k);
        let radii = [-2.0, -1.0, 0.0];
        let base = frequency_tube_model(&u.mesh, &u, "base", &radii).unwrap();
        let scaled = frequency_tube_model(&u.mesh, &u.scaled(c), "scaled", &radii).unwrap();
        for (x, y) in base.samples.iter().zip(&scaled.samples) {
            prop_assert!((x.n - y.n).abs() < 1e-11 * x.n.abs());
            prop_assert!((y.h / (c * c * x.h) - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn h_u_is_quadratically_homogeneous(c in -20.0f64..20.0, dim in 3usize..6) {
        let f = |z: f64, s: f64| (1.0 + z * z + 0.5 * s, [2.0 * z, 0.5]);
        let base = h_u(&Analytic(f), dim, &[0.05, 0.1, 0.2]).unwrap();
        let scaled = h_u(&Analytic(move |z: f64, s: f64| {
            let (v, g) = f(z, s);
            (c * v, [c * g[0], c * g[1]])
        }), dim, &[0.05, 0.1, 0.2]).unwrap();
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert!((y.1 - c * c * x.1).abs() <= 1e-12 * (c * c * x.1).max(1e-300));
        }
    }

    #[test]
    fn sign_normalization_ignores_the_input_scale(c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
        let mesh = Arc::new(build_cylinder_mesh(3, -1.0, 3.0, 1.0, 16, 4).unwrap());
        let u = DiscreteField::from_fn(mesh, |z, s| (z + 2.0) * (1.0 - s * s));
        let a = sign_normalize(&u.scaled(c)).unwrap();
        let b = sign_normalize(&u.scaled(c.abs())).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn weights_supported_beyond_the_junction_ball_are_admissible(
        radius in 0.1f64..2.0,
        offset in 0.01f64..5.0,
        amplitude in 0.1f64..100.0,
        left in 0.01f64..5.0,
    ) {
        let p = PWeight {
            bumps: vec![
                Bump { center: 4.0 + radius + offset, radius, amplitude },
                Bump { center: -(radius + left), radius, amplitude },
            ],
        };
        prop_assert!(p.validate().is_empty(), "{:?}", p.validate());
        prop_assert!(p.eval_p(4.0 + radius + offset, 0.0) > 0.0);
        prop_assert_eq!(p.eval_p(0.75, 0.0), 0.0);
    }

    #[test]
    fn weights_touching_the_channel_are_rejected(center in 0.0f64..1.0, radius in 0.1f64..2.0) {
        let p = PWeight { bumps: vec![Bump { center, radius, amplitude: 1.0 }] };
        prop_assert!(!p.validate().is_empty());
    }

    #[test]
    fn cylinder_meshes_are_conforming(nz in 1usize..30, ns in 1usize..10, len in 0.5f64..10.0) {
        let mesh = build_cylinder_mesh(3, -len, 1.0, 1.0, nz, ns).unwrap();
        let total: f64 = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).sum();
        prop_assert!((total - (len + 1.0)).abs() < 1e-10 * (len + 1.0));
        prop_assert!((0..mesh.triangles.len()).all(|t| mesh.triangle_area(t) > 0.0));
        let counts = edge_counts(&mesh);
        let boundary = counts.values().filter(|&&c| c == 1).count();
        prop_assert!(counts.values().all(|&c| c == 1 || c == 2));
        prop_assert_eq!(boundary, 2 * (nz + ns));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dumbbell_meshes_are_conforming_for_any_width(eps in 0.01f64..0.45) {
        let mut spec = DumbbellSpec::new(3, eps);
        spec.resolution = Resolution::tiny();
        let mesh = build_mesh(&spec).unwrap();
        prop_assert!((0..mesh.triangles.len()).all(|t| mesh.triangle_area(t) > 0.0));
        prop_assert!(edge_counts(&mesh).values().all(|&c| c == 1 || c == 2));
        prop_assert!(mesh.vertices.iter().all(|v| v[1] >= 0.0));
        let channel_node = mesh.locate(0.5, 0.5 * eps);
        prop_assert!(channel_node.is_some());
        prop_assert!(mesh.locate(0.5, 1.5 * eps).is_none());
    }
}
