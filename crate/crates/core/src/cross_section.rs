//! Spectral data of the channel cross-section Σ (unit ball of ℝ^{N−1}) and of the
//! half-sphere angular problem.

use crate::quadrature::{gauss_legendre, sphere_measure};
use crate::Error;
use std::f64::consts::PI;

/// First Dirichlet eigenpair of the unit ball of ℝ^{N−1}, restricted to radial profiles.
#[derive(Debug, Clone)]
pub struct CrossSectionSpectrum {
    pub dimension: usize,
    pub lambda1: f64,
    /// Radial grid s_i = i/n, i = 0..=n.
    pub grid: Vec<f64>,
    /// ψ₁ values on the grid, positive, normalized so that ∫_Σ ψ₁² dx′ = 1.
    pub psi1: Vec<f64>,
}

impl CrossSectionSpectrum {
    /// Piecewise-linear evaluation of ψ₁ at radius s ∈ [0, 1]; zero outside.
    pub fn psi(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let n = self.grid.len() - 1;
        let x = s * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        self.psi1[i] * (1.0 - t) + self.psi1[i + 1] * t
    }

    /// Derivative of ψ₁ at radius s, interpolated from centred nodal differences.
    pub fn dpsi(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let n = self.grid.len() - 1;
        let h = 1.0 / n as f64;
        let nodal = |i: usize| -> f64 {
            if i == 0 {
                0.0
            } else if i == n {
                (3.0 * self.psi1[n] - 4.0 * self.psi1[n - 1] + self.psi1[n - 2]) / (2.0 * h)
            } else {
                (self.psi1[i + 1] - self.psi1[i - 1]) / (2.0 * h)
            }
        };
        let x = s * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        nodal(i) * (1.0 - t) + nodal(i + 1) * t
    }

    pub fn sqrt_lambda1(&self) -> f64 {
        self.lambda1.sqrt()
    }
}

/// Radial Galerkin (P1) discretization of −(s^{N−2}ψ′)′ = λ s^{N−2}ψ on (0,1) with ψ(1) = 0.
/// The natural condition ψ′(0) = 0 is built in by the weak form, which removes the apparent
/// singularity of the (N−2)/s term. Galerkin eigenvalues are upper bounds that decrease
/// monotonically under refinement.
pub fn solve_cross_section(n_dim: usize, resolution: usize) -> Result<CrossSectionSpectrum, Error> {
    if n_dim < 3 {
        return Err(Error::InvalidInput(format!(
            "dimension N = {n_dim} must be at least 3"
        )));
    }
    if resolution < 16 {
        return Err(Error::InvalidInput(format!(
            "resolution {resolution} must be at least 16"
        )));
    }
    let n = resolution;
    let h = 1.0 / n as f64;
    let m = n_dim - 2;
    let omega = sphere_measure(n_dim - 2);
    let (gx, gw) = gauss_legendre(m / 2 + 3);

    // Unknowns: ψ_0 .. ψ_{n-1}; ψ_n = 0.
    let mut a_diag = vec![0.0; n];
    let mut a_off = vec![0.0; n];
    let mut b_diag = vec![0.0; n];
    let mut b_off = vec![0.0; n];
    for e in 0..n {
        let s0 = e as f64 * h;
        let s1 = s0 + h;
        let wint = (s1.powi(m as i32 + 1) - s0.powi(m as i32 + 1)) / (m as f64 + 1.0);
        let k = wint / (h * h);
        let (mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0);
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (x + 1.0);
            let s = s0 + t * h;
            let ww = 0.5 * w * h * s.powi(m as i32);
            m00 += ww * (1.0 - t) * (1.0 - t);
            m01 += ww * (1.0 - t) * t;
            m11 += ww * t * t;
        }
        a_diag[e] += k;
        b_diag[e] += m00;
        if e + 1 < n {
            a_diag[e + 1] += k;
            a_off[e] = -k;
            b_diag[e + 1] += m11;
            b_off[e] = m01;
        }
    }

    // Inverse iteration with zero shift: A x_{k+1} = B x_k.
    let mut x = vec![1.0; n];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = 1.0 - (i as f64 * h).powi(2);
    }
    let mut lambda = f64::NAN;
    let mut converged = false;
    for _ in 0..500 {
        let bx = tri_matvec(&b_diag, &b_off, &x);
        let y = tri_solve(&a_diag, &a_off, &bx)?;
        let ay = tri_matvec(&a_diag, &a_off, &y);
        let by = tri_matvec(&b_diag, &b_off, &y);
        let num: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let den: f64 = y.iter().zip(&by).map(|(a, b)| a * b).sum();
        let new_lambda = num / den;
        let norm = den.sqrt();
        x = y.iter().map(|v| v / norm).collect();
        if (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs() {
            lambda = new_lambda;
            converged = true;
            break;
        }
        lambda = new_lambda;
    }
    if !converged {
        return Err(Error::NoConvergence(
            "cross-section inverse iteration".into(),
        ));
    }
    let bx = tri_matvec(&b_diag, &b_off, &x);
    let norm2: f64 = omega * x.iter().zip(&bx).map(|(a, b)| a * b).sum::<f64>();
    let sign = if x[0] < 0.0 { -1.0 } else { 1.0 };
    let mut psi1: Vec<f64> = x.iter().map(|v| sign * v / norm2.sqrt()).collect();
    psi1.push(0.0);
    let grid = (0..=n).map(|i| i as f64 * h).collect();
    Ok(CrossSectionSpectrum {
        dimension: n_dim,
        lambda1: lambda,
        grid,
        psi1,
    })
}

/// Richardson extrapolation of λ₁(Σ) from resolutions n and 2n (second-order scheme).
pub fn lambda1_extrapolated(n_dim: usize, resolution: usize) -> Result<f64, Error> {
    let coarse = solve_cross_section(n_dim, resolution)?.lambda1;
    let fine = solve_cross_section(n_dim, 2 * resolution)?.lambda1;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn tri_matvec(d: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = d[i] * x[i];
        if i + 1 < n {
            y[i] += off[i] * x[i + 1];
        }
        if i > 0 {
            y[i] += off[i - 1] * x[i - 1];
        }
    }
    y
}

fn tri_solve(d: &[f64], off: &[f64], b: &[f64]) -> Result<Vec<f64>, Error> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut piv = d[0];
    if piv.abs() < 1e-300 {
        return Err(Error::Singular("tridiagonal pivot".into()));
    }
    y[0] = b[0] / piv;
    for i in 1..n {
        c[i - 1] = off[i - 1] / piv;
        piv = d[i] - off[i - 1] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::Singular("tridiagonal pivot".into()));
        }
        y[i] = (b[i] - off[i - 1] * y[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    Ok(y)
}

/// Half-sphere angular data: Υ_N and the first Dirichlet eigenfunction Y₁ = −θ₁/Υ_N.
#[derive(Debug, Clone)]
pub struct AngularProfile {
    pub dimension: usize,
    pub upsilon: f64,
}

impl AngularProfile {
    /// Y₁ evaluated from the first coordinate θ₁ of a unit vector.
    pub fn y1(&self, theta1: f64) -> f64 {
        -theta1 / self.upsilon
    }

    /// Y₁ at the direction of the meridian point (z, s) seen from the origin.
    pub fn y1_at(&self, z: f64, s: f64) -> f64 {
        let r = z.hypot(s);
        self.y1(z / r)
    }
}

/// Υ_N = (∫_{S^{N−1}_−} θ₁² dσ)^{1/2} by Gauss–Legendre quadrature in the polar angle.
pub fn angular_profile(n_dim: usize, quad_order: usize) -> Result<AngularProfile, Error> {
    if n_dim < 3 {
        return Err(Error::InvalidInput(format!(
            "dimension N = {n_dim} must be at least 3"
        )));
    }
    let val = half_sphere_integral(n_dim, quad_order, |phi| phi.cos().powi(2));
    Ok(AngularProfile {
        dimension: n_dim,
        upsilon: val.sqrt(),
    })
}

/// ∫ over the half-sphere {θ₁ < 0} of an axisymmetric function given in terms of the polar
/// angle φ ∈ [π/2, π] measured from e₁.
pub fn half_sphere_integral(n_dim: usize, quad_order: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(quad_order);
    let omega = sphere_measure(n_dim - 2);
    let a = 0.5 * PI;
    let b = PI;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let phi = 0.5 * (a + b) + 0.5 * (b - a) * xi;
        acc += 0.5 * (b - a) * wi * f(phi) * phi.sin().powi(n_dim as i32 - 2);
    }
    omega * acc
}

/// Rayleigh quotient of Y₁ for the Laplace–Beltrami operator on the half-sphere with Dirichlet
/// equator. The tangential derivative is taken by centred differences of the evaluator.
pub fn y1_eigenvalue_check(n_dim: usize) -> Result<f64, Error> {
    let ang = angular_profile(n_dim, 64)?;
    let y = |phi: f64| ang.y1(phi.cos());
    let dphi = 1e-5;
    let num = half_sphere_integral(n_dim, 64, |phi| {
        let d = (y(phi + dphi) - y(phi - dphi)) / (2.0 * dphi);
        d * d
    });
    let den = half_sphere_integral(n_dim, 64, |phi| y(phi).powi(2));
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_vanishes_at_wall_and_is_positive_inside() {
        let cs = solve_cross_section(3, 200).unwrap();
        assert_eq!(cs.psi(1.0), 0.0);
        assert!(cs.psi1[..200].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn eigenvalue_decreases_with_resolution() {
        let a = solve_cross_section(3, 50).unwrap().lambda1;
        let b = solve_cross_section(3, 100).unwrap().lambda1;
        let c = lambda1_extrapolated(3, 100).unwrap();
        assert!(a > b && b > c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_cross_section(2, 100).is_err());
        assert!(solve_cross_section(3, 8).is_err());
    }

    #[test]
    fn y1_equator_zero() {
        let ang = angular_profile(3, 32).unwrap();
        assert_eq!(ang.y1(0.0), 0.0);
        assert!(ang.y1(-0.5) > 0.0);
    }
}
