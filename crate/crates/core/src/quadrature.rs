//! Quadrature rules and sphere measures shared by every module.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` equal panels of `order` points.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for k in 0..order {
            out.push((lo + 0.5 * h * (x[k] + 1.0), 0.5 * h * w[k]));
        }
    }
    out
}

/// Γ(k/2) for a positive integer k.
pub fn gamma_half(k: usize) -> f64 {
    assert!(k >= 1);
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if k % 2 == 0 { 1.0 } else { 0.5 };
    while 2.0 * x < k as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface measure of the unit sphere S^k ⊂ ℝ^{k+1}.
pub fn sphere_measure(k: usize) -> f64 {
    2.0 * PI.powf((k as f64 + 1.0) / 2.0) / gamma_half(k + 1)
}

/// Degree-5 seven-point rule on the reference triangle: barycentric coordinates and weights
/// summing to one.
pub const TRIANGLE_RULE: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_2;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_measures() {
        assert!((sphere_measure(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_measure(2) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_measure(3) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn triangle_rule_exact_for_quintics() {
        // ∫_T λ1^2 λ2^3 dA / |T| = 2! 3! 2! / 7! = 24 / 5040
        let s: f64 = TRIANGLE_RULE
            .iter()
            .map(|(b, w)| w * b[0].powi(2) * b[1].powi(3))
            .sum();
        assert!((s - 24.0 / 5040.0).abs() < 1e-14);
    }
}
