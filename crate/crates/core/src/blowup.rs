//! Rescalings of the eigenfield at the two junctions, the left normalization U_ε, the
//! dilation family U^λ, H_U and μ(λ), power-law fits, the two estimates of β, the nodal sign
//! scan and the comparison of blow-ups with the junction profiles.

use crate::cross_section::AngularProfile;
use crate::frequency::EigenState;
use crate::geometry::{curve_unchecked, CurveKind, MeridianMesh, Region};
use crate::operators::{
    curve_min, region_integral, surface_integral, Constraint, DiscreteField, FieldExpr,
    RegionDescriptor,
};
use crate::weight_model::PWeight;
use crate::Error;

/// Three-point Gauss panels on the half-spheres Γ_λ⁻.
const PANELS: usize = 64;

/// Kind of rescaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RescaleKind {
    /// ũ_ε(x) = ε⁻¹ u_ε(e₁ + ε(x − e₁)).
    RightTilde,
    /// û_ε(x) = u_ε(εx) / (ε^{1−N}∫_{Γ_ε^ε}u_ε²)^{1/2}.
    LeftHat,
    /// U_ε = u_ε / (∫_{Γ_k̃⁻}u_ε²)^{1/2}.
    UNormalized { k_tilde: f64 },
    /// U^λ(x) = U_ε(λx)/H_U(λ)^{1/2}.
    ULambda { k_tilde: f64, lambda: f64 },
}

/// u_ε sampled through the affine map x ↦ c + a(x − c) (c on the axis) and multiplied by a
/// normalization factor.
#[derive(Debug, Clone)]
pub struct RescaledField {
    pub kind: RescaleKind,
    pub u: DiscreteField,
    pub center: f64,
    pub scale: f64,
    pub factor: f64,
}

impl RescaledField {
    /// Pre-image of a physical point.
    pub fn to_rescaled(&self, z: f64, s: f64) -> (f64, f64) {
        (self.center + (z - self.center) / self.scale, s / self.scale)
    }
}

impl FieldExpr for RescaledField {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        let (v, g) = self
            .u
            .eval(self.center + self.scale * (z - self.center), self.scale * s)?;
        let k = self.factor * self.scale;
        Some((self.factor * v, [k * g[0], k * g[1]]))
    }
}

fn half_sphere(dim: usize, t: f64) -> crate::geometry::SamplingCurve {
    curve_unchecked(dim, CurveKind::HalfSphereLeft(t), 1.0, PANELS)
}

fn channel_slice(dim: usize, r: f64, eps: f64) -> crate::geometry::SamplingCurve {
    curve_unchecked(dim, CurveKind::Slice(r), eps, 24)
}

/// Builds the rescaled field of the given kind from the sign-normalized eigenfield.
pub fn rescale(u: &DiscreteField, eps: f64, kind: RescaleKind) -> Result<RescaledField, Error> {
    let dim = u.mesh.dim;
    let n = dim as f64;
    let vanishing =
        |what: &str| Error::Degenerate(format!("normalization integral over {what} vanishes"));
    let (center, scale, factor) = match kind {
        RescaleKind::RightTilde => (1.0, eps, 1.0 / eps),
        RescaleKind::LeftHat => {
            let h = surface_integral(u, &channel_slice(dim, eps, eps), |x| x.u * x.u)?;
            if !(h > 0.0) {
                return Err(vanishing("the channel slice at x1 = eps"));
            }
            (0.0, eps, 1.0 / (eps.powf(1.0 - n) * h).sqrt())
        }
        RescaleKind::UNormalized { k_tilde } => {
            let h = surface_integral(u, &half_sphere(dim, k_tilde), |x| x.u * x.u)?;
            if !(h > 0.0) {
                return Err(vanishing("the half-sphere of radius k~"));
            }
            (0.0, 1.0, 1.0 / h.sqrt())
        }
        RescaleKind::ULambda { k_tilde, lambda } => {
            let base = rescale(u, eps, RescaleKind::UNormalized { k_tilde })?;
            let hu = h_u(&base, dim, &[lambda])?[0].1;
            if !(hu > 0.0) {
                return Err(vanishing("the half-sphere of radius lambda"));
            }
            (0.0, lambda, base.factor / hu.sqrt())
        }
    };
    Ok(RescaledField {
        kind,
        u: u.clone(),
        center,
        scale,
        factor,
    })
}

/// H_U(λ) = λ^{1−N}∫_{Γ_λ⁻}U² at each λ, as (λ, H_U).
pub fn h_u(field: &dyn FieldExpr, dim: usize, lambdas: &[f64]) -> Result<Vec<(f64, f64)>, Error> {
    lambdas
        .iter()
        .map(|&l| {
            let v = surface_integral(field, &half_sphere(dim, l), |x| x.u * x.u)?;
            Ok((l, v * l.powf(1.0 - dim as f64)))
        })
        .collect()
}

/// μ(λ) = ∫_{S⁻}U(λθ)Y₁(θ)dσ(θ) = λ^{1−N}∫_{Γ_λ⁻}U Y₁(x/|x|) at each λ.
pub fn mu(
    field: &dyn FieldExpr,
    angular: &AngularProfile,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>, Error> {
    let dim = angular.dimension;
    lambdas
        .iter()
        .map(|&l| {
            let v = surface_integral(field, &half_sphere(dim, l), |x| {
                x.u * angular.y1_at(x.z, x.s)
            })?;
            Ok((l, v * l.powf(1.0 - dim as f64)))
        })
        .collect()
}

/// Checks that every λ lies in [4ε, k̃].
pub fn check_window(eps: f64, k_tilde: f64, lambdas: &[f64]) -> Result<(), Error> {
    match lambdas
        .iter()
        .find(|&&l| !(l >= 4.0 * eps * (1.0 - 1e-12) && l <= k_tilde * (1.0 + 1e-12)))
    {
        Some(l) => Err(Error::InvalidInput(format!(
            "lambda = {l} outside [4 eps, k~] = [{}, {k_tilde}]",
            4.0 * eps
        ))),
        None => Ok(()),
    }
}

/// Least-squares power law v ≈ coefficient·λ^exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub exponent: f64,
    pub coefficient: f64,
    /// RMS residual in log space.
    pub rms: f64,
    pub window: (f64, f64),
}

pub fn fit_power(samples: &[(f64, f64)]) -> Result<FitResult, Error> {
    if samples.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "power fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| !(s.0 > 0.0 && s.1 > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "nonpositive sample {s:?} in power fit"
        )));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate(
            "power fit needs distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - icpt - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FitResult {
        exponent: slope,
        coefficient: icpt.exp(),
        rms,
        window: (lo, hi),
    })
}

/// Intercept a of the least-squares fit v ≈ a + bλ².
fn quadratic_intercept(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0 * s.0).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = xs
        .iter()
        .zip(samples)
        .map(|(x, s)| (x - mx) * (s.1 - my))
        .sum();
    my - sxy / sxx * mx
}

/// β from the asymptotics of H_U and μ on a λ window.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaFit {
    /// Signed estimate: magnitude from λ^{2(N−1)}H_U(λ) → β²Υ², sign opposite to μ.
    pub beta: f64,
    /// −lim λ^{N−1}μ(λ)/Υ.
    pub beta_from_mu: f64,
    pub exponent: FitResult,
    pub h_u: Vec<(f64, f64)>,
    pub mu: Vec<(f64, f64)>,
}

/// The limits λ → 0 are taken as intercepts of fits a + bλ² in λ, the form of the leading
/// correction for the dipole term.
pub fn beta_from_fit(
    field: &dyn FieldExpr,
    angular: &AngularProfile,
    lambdas: &[f64],
) -> Result<BetaFit, Error> {
    let dim = angular.dimension;
    let m = dim as f64 - 1.0;
    let hu = h_u(field, dim, lambdas)?;
    let mus = mu(field, angular, lambdas)?;
    let exponent = fit_power(&hu)?;
    let scaled_h: Vec<(f64, f64)> = hu.iter().map(|&(l, h)| (l, h * l.powf(2.0 * m))).collect();
    let scaled_mu: Vec<(f64, f64)> = mus.iter().map(|&(l, v)| (l, v * l.powf(m))).collect();
    let mu0 = quadratic_intercept(&scaled_mu);
    let h0 = quadratic_intercept(&scaled_h);
    if !(h0 > 0.0) || mu0 == 0.0 {
        return Err(Error::Degenerate("vanishing asymptotic coefficient".into()));
    }
    let sign = -mu0.signum();
    // The trace sign on the smallest sphere must agree with the projection's sign.
    let trace_min = curve_min(
        field,
        &half_sphere(dim, lambdas.iter().copied().fold(f64::INFINITY, f64::min)),
    )?;
    let neg = NegatedField(field);
    let trace_max = -curve_min(
        &neg,
        &half_sphere(dim, lambdas.iter().copied().fold(f64::INFINITY, f64::min)),
    )?;
    if (trace_min > 0.0 && sign > 0.0) || (trace_max < 0.0 && sign < 0.0) {
        return Err(Error::Assumption(
            "trace sign and projection sign of U disagree".into(),
        ));
    }
    Ok(BetaFit {
        beta: sign * h0.sqrt() / angular.upsilon,
        beta_from_mu: -mu0 / angular.upsilon,
        exponent,
        h_u: hu,
        mu: mus,
    })
}

struct NegatedField<'a>(&'a dyn FieldExpr);

impl FieldExpr for NegatedField<'_> {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        self.0.eval(z, s).map(|(v, g)| (-v, [-g[0], -g[1]]))
    }
}

/// The bracket ∫_{Γ₁⁻}UY₁ − (λ_{k0}/N)∫_{D⁻} pUY₁ (|x|χ_{B₁⁻} + |x|^{1−N}χ_{Ω₋₁}).
pub fn beta_bracket(
    field: &dyn FieldExpr,
    mesh: &MeridianMesh,
    p: &PWeight,
    lambda_k0: f64,
    angular: &AngularProfile,
) -> Result<f64, Error> {
    let dim = angular.dimension;
    let n = dim as f64;
    let surface = surface_integral(field, &half_sphere(dim, 1.0), |x| {
        x.u * angular.y1_at(x.z, x.s)
    })?;
    let volume = if p.minus_part().bumps.is_empty() || lambda_k0 == 0.0 {
        0.0
    } else {
        region_integral(mesh, field, &RegionDescriptor::of(&[Region::Left]), |x| {
            let pv = p.eval_p(x.z, x.s);
            if pv == 0.0 {
                return 0.0;
            }
            let r = x.z.hypot(x.s);
            let w = if r < 1.0 { r } else { r.powf(1.0 - n) };
            pv * x.u * angular.y1_at(x.z, x.s) * w
        })?
        .value
    };
    Ok(surface - lambda_k0 / n * volume)
}

/// β = −bracket/Υ_N.
pub fn beta_from_formula(
    field: &dyn FieldExpr,
    mesh: &MeridianMesh,
    p: &PWeight,
    lambda_k0: f64,
    angular: &AngularProfile,
) -> Result<f64, Error> {
    Ok(-beta_bracket(field, mesh, p, lambda_k0, angular)? / angular.upsilon)
}

/// Deviation of λ^{N−1}μ(λ) from the bracket constant across the λ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MuExpansion {
    pub bracket: f64,
    /// (λ, |λ^{N−1}μ(λ) − bracket|).
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    /// Exponent of a power fit of the deviations, when they are all positive.
    pub correction_exponent: Option<f64>,
}

pub fn mu_expansion_check(
    field: &dyn FieldExpr,
    mesh: &MeridianMesh,
    p: &PWeight,
    lambda_k0: f64,
    angular: &AngularProfile,
    lambdas: &[f64],
) -> Result<MuExpansion, Error> {
    let bracket = beta_bracket(field, mesh, p, lambda_k0, angular)?;
    let m = angular.dimension as f64 - 1.0;
    let deviations: Vec<(f64, f64)> = mu(field, angular, lambdas)?
        .into_iter()
        .map(|(l, v)| (l, (v * l.powf(m) - bracket).abs()))
        .collect();
    let max_deviation = deviations.iter().fold(0.0f64, |a, d| a.max(d.1));
    let correction_exponent = fit_power(&deviations).ok().map(|f| f.exponent);
    Ok(MuExpansion {
        bracket,
        deviations,
        max_deviation,
        correction_exponent,
    })
}

/// Minima of u over left half-spheres Γ_r⁻ and right half-spheres Γ_t^+.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalScan {
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
}

impl NodalScan {
    pub fn all_positive(&self) -> bool {
        self.left.iter().chain(&self.right).all(|p| p.1 > 0.0)
    }
}

pub fn nodal_sign_scan(
    u: &DiscreteField,
    left_radii: &[f64],
    right_radii: &[f64],
) -> Result<NodalScan, Error> {
    let dim = u.mesh.dim;
    let left = left_radii
        .iter()
        .map(|&r| Ok((r, curve_min(u, &half_sphere(dim, r))?)))
        .collect::<Result<_, Error>>()?;
    let right = right_radii
        .iter()
        .map(|&t| {
            Ok((
                t,
                curve_min(
                    u,
                    &curve_unchecked(dim, CurveKind::HalfSphereRight(t), 1.0, PANELS),
                )?,
            ))
        })
        .collect::<Result<_, Error>>()?;
    Ok(NodalScan { left, right })
}

/// v(1 − x₁, x′): carries a field on the left junction frame into the model frame.
pub struct Reflected<'a>(pub &'a dyn FieldExpr);

impl FieldExpr for Reflected<'_> {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        self.0.eval(1.0 - z, s).map(|(v, g)| (v, [-g[0], g[1]]))
    }
}

/// Model-frame comparison region: tube slab −½ ≤ x₁ ≤ 1 plus the half-annulus 1 < |x − e₁| < 3.
pub fn comparison_region() -> [RegionDescriptor; 2] {
    [
        RegionDescriptor::of(&[Region::Corridor]).with(Constraint::Above(-0.5)),
        RegionDescriptor::of(&[Region::Right])
            .with(Constraint::OutsideBall { cz: 1.0, r: 1.0 })
            .with(Constraint::InsideBall { cz: 1.0, r: 3.0 }),
    ]
}

/// Least-squares constant c with rescaled ≈ c·profile on the comparison region of the profile's
/// model mesh, and the relative L² deviation ‖rescaled − c·profile‖/‖c·profile‖.
pub fn compare_blowup_to_profile(
    rescaled: &dyn FieldExpr,
    profile: &DiscreteField,
) -> Result<(f64, f64), Error> {
    let mesh = &profile.mesh;
    let other = |z: f64, s: f64| rescaled.eval(z, s).map(|v| v.0).unwrap_or(f64::NAN);
    let mut ab = 0.0;
    let mut bb = 0.0;
    for region in comparison_region() {
        ab += region_integral(mesh, profile, &region, |x| other(x.z, x.s) * x.u)?.value;
        bb += region_integral(mesh, profile, &region, |x| x.u * x.u)?.value;
    }
    if !ab.is_finite() {
        return Err(Error::OutsideDomain(
            "comparison region not covered by the rescaled field".into(),
        ));
    }
    if !(bb > 0.0) {
        return Err(Error::Degenerate(
            "profile vanishes on the comparison region".into(),
        ));
    }
    let c = ab / bb;
    let mut dev = 0.0;
    for region in comparison_region() {
        dev += region_integral(mesh, profile, &region, |x| {
            (other(x.z, x.s) - c * x.u).powi(2)
        })?
        .value;
    }
    Ok((c, (dev / (c * c * bb)).sqrt()))
}

/// ∫_{Γ̂_R}û² = H^c(Rε)/H^c(ε) against the bound e^{4√λ₁(Σ)(R−1)}, as (R, value, bound).
pub fn hat_gamma_bound(
    state: &EigenState,
    radii: &[f64],
    sqrt_lambda1: f64,
) -> Result<Vec<(f64, f64, f64)>, Error> {
    let dim = state.u.mesh.dim;
    let eps = state.eps;
    let h = |r: f64| surface_integral(&state.u, &channel_slice(dim, r, eps), |x| x.u * x.u);
    let base = h(eps)?;
    if !(base > 0.0) {
        return Err(Error::Degenerate(
            "trace on the slice x1 = eps vanishes".into(),
        ));
    }
    radii
        .iter()
        .map(|&r| {
            if r * eps > 1.0 {
                return Err(Error::InvalidInput(format!("R = {r} leaves the channel")));
            }
            Ok((
                r,
                h(r * eps)? / base,
                (4.0 * sqrt_lambda1 * (r - 1.0)).exp(),
            ))
        })
        .collect()
}

/// CSV `lambda,H_U,mu`.
pub fn h_u_csv(h: &[(f64, f64)], m: &[(f64, f64)]) -> String {
    let mut out = String::from("lambda,H_U,mu\n");
    for (a, b) in h.iter().zip(m) {
        out.push_str(&format!("{:.10e},{:.10e},{:.10e}\n", a.0, a.1, b.1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::angular_profile;
    use crate::operators::Analytic;

    fn dipole(beta: f64) -> impl Fn(f64, f64) -> (f64, [f64; 2]) + Sync {
        move |z: f64, s: f64| {
            let r2 = z * z + s * s;
            let r3 = r2.powf(1.5);
            (
                beta * z / r3,
                [
                    beta * (1.0 / r3 - 3.0 * z * z / (r3 * r2)),
                    -beta * 3.0 * z * s / (r3 * r2),
                ],
            )
        }
    }

    #[test]
    fn h_u_of_dipole_has_exponent_minus_four() {
        let ang = angular_profile(3, 64).unwrap();
        let f = Analytic(dipole(1.0));
        let lams = [0.05, 0.08, 0.1, 0.15, 0.2];
        let hu = h_u(&f, 3, &lams).unwrap();
        for &(l, h) in &hu {
            let exact = ang.upsilon.powi(2) * l.powi(-4);
            assert!((h - exact).abs() / exact < 1e-10);
        }
        assert!((fit_power(&hu).unwrap().exponent + 4.0).abs() < 1e-3);
    }

    #[test]
    fn beta_signs_both_ways() {
        let ang = angular_profile(3, 64).unwrap();
        let lams = [0.05, 0.08, 0.1, 0.15, 0.2];
        let neg = beta_from_fit(&Analytic(dipole(-0.7)), &ang, &lams).unwrap();
        assert!((neg.beta + 0.7).abs() < 1e-3 && (neg.beta_from_mu + 0.7).abs() < 1e-3);
        let pos = beta_from_fit(&Analytic(dipole(1.0)), &ang, &lams).unwrap();
        assert!((pos.beta - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_samples_fit_zero_exponent() {
        let f = fit_power(&[(0.1, 2.0), (0.2, 2.0), (0.4, 2.0)]).unwrap();
        assert!(f.exponent.abs() < 1e-14 && (f.coefficient - 2.0).abs() < 1e-12);
        assert!(fit_power(&[(0.1, 1.0), (0.2, -1.0), (0.3, 1.0)]).is_err());
    }

    #[test]
    fn window_rejects_small_lambda() {
        assert!(check_window(0.02, 0.25, &[0.08, 0.2]).is_ok());
        assert!(check_window(0.02, 0.25, &[0.05]).is_err());
    }
}
