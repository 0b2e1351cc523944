//! Almgren-type frequency quotients: N_ε in the left, corridor and right regimes, the model
//! quotients of harmonic fields in tubes and exteriors, Pohozaev and derivative residuals,
//! and the coercivity ratio.

use crate::eigensolver::{solve_pencil, SolveOptions};
use crate::geometry::{curve, CurveKind, MeridianMesh, MeshKind, Region, TAG_AXIS, TAG_GAMMA};
use crate::operators::{
    boundary_mass, region_integral, stiffness, surface_integral, Constraint, DiscreteField,
    FieldExpr, RegionDescriptor, Sample,
};
use crate::weight_model::PWeight;
use crate::Error;
use rayon::prelude::*;

/// Three-point Gauss panels on half-spheres.
const SPHERE_PANELS: usize = 64;
/// Three-point Gauss panels on channel and tube slices.
const SLICE_PANELS: usize = 24;
/// Samples with H below this fraction of the regime maximum are dropped.
const H_FLOOR: f64 = 1e-14;

/// Regime of a frequency sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Left,
    Corridor,
    Right,
    TubeModel,
    ExteriorModel,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Left => "left",
            Regime::Corridor => "corridor",
            Regime::Right => "right",
            Regime::TubeModel => "tube_model",
            Regime::ExteriorModel => "exterior_model",
        }
    }
}

/// One quotient sample: D and H are the raw volume and surface integrals, N = Λ·D/H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySample {
    pub regime: Regime,
    pub r: f64,
    pub d: f64,
    pub h: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyProfile {
    pub eps: Option<f64>,
    pub field: String,
    pub samples: Vec<FrequencySample>,
    /// Radii dropped because H underflowed.
    pub dropped: Vec<f64>,
}

impl FrequencyProfile {
    fn from_raw(eps: Option<f64>, field: &str, raw: Vec<FrequencySample>) -> Self {
        // The floor is relative to the maximum within each regime.
        let hmax = |r: Regime| {
            raw.iter()
                .filter(|s| s.regime == r)
                .fold(0.0f64, |m, s| m.max(s.h))
        };
        let keep: Vec<bool> = raw
            .iter()
            .map(|s| s.h > 0.0 && s.h > H_FLOOR * hmax(s.regime))
            .collect();
        let (samples, dropped): (Vec<_>, Vec<_>) = raw.into_iter().zip(keep).partition(|(_, k)| *k);
        let samples = samples.into_iter().map(|(s, _)| s).collect();
        let dropped: Vec<FrequencySample> = dropped.into_iter().map(|(s, _)| s).collect();
        Self {
            eps,
            field: field.to_string(),
            samples,
            dropped: dropped.iter().map(|s| s.r).collect(),
        }
    }

    /// N at radius r, if sampled.
    pub fn at(&self, r: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| (s.r - r).abs() < 1e-12)
            .map(|s| s.n)
    }

    /// CSV with columns `regime,eps,r,D,H,N`.
    pub fn to_csv(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            out.push_str("regime,eps,r,D,H,N\n");
        }
        let eps = self.eps.map(|e| format!("{e:.6e}")).unwrap_or_default();
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                s.regime.name(),
                eps,
                s.r,
                s.d,
                s.h,
                s.n
            ));
        }
        out
    }

    /// Largest decrease N(r_i) − N(r_{i+1}) between consecutive samples of one regime.
    pub fn max_decrease(&self) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].regime == w[1].regime)
            .map(|w| w[0].n - w[1].n)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest increase N(r_{i+1}) − N(r_i) between consecutive samples of one regime.
    pub fn max_increase(&self) -> f64 {
        self.samples
            .windows(2)
            .filter(|w| w[0].regime == w[1].regime)
            .map(|w| w[1].n - w[0].n)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A discrete eigenpair on an ε-dumbbell with its weight.
#[derive(Debug, Clone)]
pub struct EigenState {
    pub u: DiscreteField,
    pub lambda: f64,
    pub eps: f64,
    pub p: PWeight,
}

impl EigenState {
    pub fn new(u: DiscreteField, lambda: f64, p: PWeight) -> Result<Self, Error> {
        let eps = match u.mesh.kind {
            MeshKind::Dumbbell { eps, .. } => eps,
            _ => {
                return Err(Error::InvalidInput(
                    "eigen state needs a dumbbell mesh".into(),
                ))
            }
        };
        Ok(Self { u, lambda, eps, p })
    }

    pub fn mesh(&self) -> &MeridianMesh {
        &self.u.mesh
    }

    fn r_left(&self) -> f64 {
        match self.u.mesh.kind {
            MeshKind::Dumbbell { r_left, .. } => r_left,
            _ => unreachable!(),
        }
    }

    fn dim(&self) -> f64 {
        self.u.mesh.dim as f64
    }

    /// ∫_region (|∇u|² − λ p u²).
    fn d_form(&self, region: &RegionDescriptor) -> Result<f64, Error> {
        let lam = self.lambda;
        let p = &self.p;
        Ok(region_integral(self.mesh(), &self.u, region, |x| {
            x.grad2() - lam * p.eval_p(x.z, x.s) * x.u * x.u
        })?
        .value)
    }

    fn energy(&self, region: &RegionDescriptor) -> Result<f64, Error> {
        Ok(region_integral(self.mesh(), &self.u, region, |x| x.grad2())?.value)
    }

    fn volume(
        &self,
        region: &RegionDescriptor,
        g: impl Fn(&Sample) -> f64 + Sync,
    ) -> Result<f64, Error> {
        Ok(region_integral(self.mesh(), &self.u, region, g)?.value)
    }

    fn surface(&self, kind: CurveKind, g: impl Fn(&Sample) -> f64 + Sync) -> Result<f64, Error> {
        let panels = if matches!(kind, CurveKind::Slice(_)) {
            SLICE_PANELS
        } else {
            SPHERE_PANELS
        };
        surface_integral(&self.u, &curve(self.mesh(), kind, panels)?, g)
    }

    /// ∫_{S_ε} g over the wall {x₁ = 0, ε ≤ |x′| ≤ R_left}, split into dyadic pieces.
    fn left_wall(&self, g: impl Fn(&Sample) -> f64 + Sync + Copy) -> Result<f64, Error> {
        let mut total = 0.0;
        let mut a = self.eps;
        let end = self.r_left();
        while a < end {
            let b = (2.0 * a).min(end);
            total += surface_integral(
                &self.u,
                &curve(
                    self.mesh(),
                    CurveKind::Wall {
                        z: 0.0,
                        s_from: a,
                        s_to: b,
                    },
                    8,
                )?,
                g,
            )?;
            a = b;
        }
        Ok(total)
    }

    fn regime(&self, r: f64) -> Result<Regime, Error> {
        let e = self.eps;
        if r <= -e {
            Ok(Regime::Left)
        } else if (0.0..=1.0).contains(&r) {
            Ok(Regime::Corridor)
        } else if r >= 1.0 + e {
            Ok(Regime::Right)
        } else {
            Err(Error::InvalidInput(format!(
                "r = {r} lies in an excluded band of width eps = {e}"
            )))
        }
    }

    /// Ω_r^ε of the frequency definition.
    fn omega(&self, r: f64) -> Result<RegionDescriptor, Error> {
        Ok(match self.regime(r)? {
            Regime::Left => RegionDescriptor::of(&[Region::Left])
                .with(Constraint::OutsideBall { cz: 0.0, r: -r }),
            Regime::Corridor => {
                RegionDescriptor::of(&[Region::Left, Region::Corridor]).with(Constraint::Below(r))
            }
            _ => {
                return Err(Error::InvalidInput(format!(
                    "r = {r} is in the right regime"
                )))
            }
        })
    }

    fn gamma(&self, r: f64) -> Result<CurveKind, Error> {
        Ok(match self.regime(r)? {
            Regime::Left => CurveKind::HalfSphereLeft(-r),
            Regime::Corridor => CurveKind::Slice(r),
            _ => CurveKind::HalfSphereRight(r - 1.0),
        })
    }

    /// Raw D(r) = ∫_{Ω_r^ε}(|∇u|² − λpu²) and H(r) = ∫_{Γ_r^ε}u².
    pub fn raw_dh(&self, r: f64) -> Result<(f64, f64), Error> {
        let h = self.surface(self.gamma(r)?, |x| x.u * x.u)?;
        let d = match self.regime(r)? {
            Regime::Right => {
                // D⁻ ∪ 𝒞_ε ∪ B⁺_t.
                let t = r - 1.0;
                self.d_form(&RegionDescriptor::of(&[Region::Left, Region::Corridor]))?
                    + self.d_form(
                        &RegionDescriptor::of(&[Region::Right])
                            .with(Constraint::InsideBall { cz: 1.0, r: t }),
                    )?
            }
            _ => self.d_form(&self.omega(r)?)?,
        };
        Ok((d, h))
    }

    /// Λ_N(r, ε).
    pub fn lambda_n(&self, r: f64) -> Result<f64, Error> {
        Ok(match self.regime(r)? {
            Regime::Left => -r,
            Regime::Corridor => self.eps,
            _ => r - 1.0,
        })
    }
}

/// Positions of the axis vertices in [lo, hi]: sample radii on which the sampling curves pass
/// through mesh vertices, so that sampled quotients vary smoothly with r.
pub fn aligned_radii(mesh: &MeridianMesh, lo: f64, hi: f64) -> Vec<f64> {
    let mut zs: Vec<f64> = (0..mesh.n_vertices())
        .filter(|&i| mesh.tags[i] & TAG_AXIS != 0)
        .map(|i| mesh.vertices[i][0])
        .filter(|&z| z >= lo && z <= hi)
        .collect();
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    zs.dedup();
    zs
}

/// N_ε(r) = Λ_N(r, ε)·D(r)/H(r) at every sample radius.
pub fn frequency_dumbbell(
    state: &EigenState,
    r_samples: &[f64],
) -> Result<FrequencyProfile, Error> {
    let raw: Result<Vec<FrequencySample>, Error> = r_samples
        .par_iter()
        .map(|&r| {
            let regime = state.regime(r)?;
            let (d, h) = state.raw_dh(r)?;
            Ok(FrequencySample {
                regime,
                r,
                d,
                h,
                n: state.lambda_n(r)? * d / h,
            })
        })
        .collect();
    Ok(FrequencyProfile::from_raw(Some(state.eps), "u_eps", raw?))
}

/// N_φ(r) = ∫_{T_{1,r}}|∇φ|² / ∫_{Γ_r}φ² for a field on a tube of radius 1 ending at x₁ = 1
/// (the model mesh or a cylinder mesh); integrals run over the tube part x₁ < r.
pub fn frequency_tube_model(
    mesh: &MeridianMesh,
    phi: &dyn FieldExpr,
    name: &str,
    r_samples: &[f64],
) -> Result<FrequencyProfile, Error> {
    let raw: Result<Vec<FrequencySample>, Error> = r_samples
        .par_iter()
        .map(|&r| {
            let region = RegionDescriptor::of(&[Region::Corridor]).with(Constraint::Below(r));
            let d = region_integral(mesh, phi, &region, |x| x.grad2())?.value;
            let h = surface_integral(
                phi,
                &curve(mesh, CurveKind::TubeSlice { r, width: 1.0 }, SLICE_PANELS)?,
                |x| x.u * x.u,
            )?;
            Ok(FrequencySample {
                regime: Regime::TubeModel,
                r,
                d,
                h,
                n: d / h,
            })
        })
        .collect();
    Ok(FrequencyProfile::from_raw(None, name, raw?))
}

/// Orientation of an exterior quotient: about the origin into D⁻, or about e₁ into D⁺ (the
/// reflected frame x ↦ (1 − x₁, x′) of a model-domain field).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExteriorFrame {
    Left,
    RightModel,
}

/// N⁻_φ(r) = t∫_{Ω_{−t}}|∇φ|² / ∫_{Γ_t^−}φ² with t = −r, integrated over the mesh part outside
/// the half-ball of radius t.
pub fn frequency_exterior_model(
    mesh: &MeridianMesh,
    phi: &dyn FieldExpr,
    frame: ExteriorFrame,
    name: &str,
    r_samples: &[f64],
) -> Result<FrequencyProfile, Error> {
    let raw: Result<Vec<FrequencySample>, Error> = r_samples
        .par_iter()
        .map(|&r| {
            let t = -r;
            if t <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "exterior radius must be negative, got {r}"
                )));
            }
            let (region, kind) = match frame {
                ExteriorFrame::Left => (
                    RegionDescriptor::of(&[Region::Left])
                        .with(Constraint::OutsideBall { cz: 0.0, r: t }),
                    CurveKind::HalfSphereLeft(t),
                ),
                ExteriorFrame::RightModel => (
                    RegionDescriptor::of(&[Region::Right])
                        .with(Constraint::OutsideBall { cz: 1.0, r: t }),
                    CurveKind::HalfSphereRight(t),
                ),
            };
            let d = region_integral(mesh, phi, &region, |x| x.grad2())?.value;
            let h = surface_integral(phi, &curve(mesh, kind, SPHERE_PANELS)?, |x| x.u * x.u)?;
            Ok(FrequencySample {
                regime: Regime::ExteriorModel,
                r,
                d,
                h,
                n: t * d / h,
            })
        })
        .collect();
    Ok(FrequencyProfile::from_raw(None, name, raw?))
}

/// Smallest Steklov-type quotient ∫_{Ω_{−1}}|∇w|² / ∫_{Γ₁⁻}w² on an exterior mesh with the inner
/// half-sphere free, together with the minimizer's trace.
#[derive(Debug, Clone)]
pub struct PoincareResult {
    pub constant: f64,
    pub minimizer: DiscreteField,
    /// Normalized Γ₁⁻ trace inner product of the minimizer with x₁/|x|^N.
    pub correlation: f64,
}

pub fn poincare_optimal_constant(
    mesh: &std::sync::Arc<MeridianMesh>,
) -> Result<PoincareResult, Error> {
    let inner = match mesh.kind {
        MeshKind::Exterior { inner, .. } => inner,
        _ => {
            return Err(Error::InvalidInput(
                "Poincaré constant needs an exterior mesh".into(),
            ))
        }
    };
    let k = stiffness(mesh);
    let b = boundary_mass(mesh, TAG_GAMMA);
    let mut opts = SolveOptions::new(1);
    opts.tol = 1e-10;
    let sol = solve_pencil(&k.reduced, &b.reduced, &opts)?;
    let mut values = vec![0.0; mesh.n_vertices()];
    for (&i, v) in k.free.iter().zip(&sol.vectors[0]) {
        values[i] = *v;
    }
    let field = DiscreteField::new(mesh.clone(), values)?;
    let dim = mesh.dim as i32;
    let dipole = crate::operators::Analytic(move |z: f64, s: f64| {
        let r2 = z * z + s * s;
        (z / r2.powf(dim as f64 / 2.0), [0.0, 0.0])
    });
    let gamma = curve(mesh, CurveKind::HalfSphereLeft(inner), SPHERE_PANELS)?;
    let pairs: Vec<(f64, f64, f64)> = gamma
        .nodes
        .iter()
        .map(|n| {
            let a = field.value_at(n.z, n.s).unwrap_or(0.0);
            let b = dipole.eval(n.z, n.s).map(|v| v.0).unwrap_or(0.0);
            (n.weight * a * b, n.weight * a * a, n.weight * b * b)
        })
        .collect();
    let (ab, aa, bb) = pairs.iter().fold((0.0, 0.0, 0.0), |acc, p| {
        (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2)
    });
    Ok(PoincareResult {
        constant: sol.values[0],
        minimizer: field,
        correlation: ab.abs() / (aa * bb).sqrt(),
    })
}

/// Rayleigh quotient ∫_{Ω_{−R}}|∇φ|²/∫_{Γ_R^−}φ² of a closed-form field on an exterior mesh plus
/// a closed-form energy `tail` beyond the outer radius.
pub fn exterior_quotient(
    mesh: &MeridianMesh,
    phi: &dyn FieldExpr,
    tail: f64,
) -> Result<f64, Error> {
    let inner = match mesh.kind {
        MeshKind::Exterior { inner, .. } => inner,
        _ => {
            return Err(Error::InvalidInput(
                "exterior quotient needs an exterior mesh".into(),
            ))
        }
    };
    let d = region_integral(mesh, phi, &RegionDescriptor::all(), |x| x.grad2())?.value + tail;
    let h = surface_integral(
        phi,
        &curve(mesh, CurveKind::HalfSphereLeft(inner), SPHERE_PANELS)?,
        |x| x.u * x.u,
    )?;
    Ok(d / h)
}

/// Location of a Pohozaev identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PohozaevLocation {
    /// Half-sphere Γ_t^− about the origin.
    Left(f64),
    /// Half-sphere Γ_t^+ about e₁, with the inner sphere Γ_{2ε}^+.
    Right(f64),
    /// Channel slice at x₁ = r.
    Corridor(f64),
}

/// Both sides of a Pohozaev identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PohozaevSides {
    pub lhs: f64,
    pub rhs: f64,
}

impl PohozaevSides {
    /// |LHS − RHS| / max(|LHS|, |RHS|), zero when both sides vanish.
    pub fn residual(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

pub fn pohozaev_sides(
    state: &EigenState,
    location: PohozaevLocation,
) -> Result<PohozaevSides, Error> {
    let n = state.dim();
    let lam = state.lambda;
    let p = &state.p;
    match location {
        PohozaevLocation::Left(t) => {
            if t <= state.eps {
                return Err(Error::InvalidInput(format!(
                    "left identity needs t > eps, got {t}"
                )));
            }
            let kind = CurveKind::HalfSphereLeft(t);
            let omega = RegionDescriptor::of(&[Region::Left])
                .with(Constraint::OutsideBall { cz: 0.0, r: t });
            let lhs =
                t * state.surface(kind, |x| x.grad2() - lam * p.eval_p(x.z, x.s) * x.u * x.u)?;
            let rhs = 2.0 * t * state.surface(kind, |x| x.dnu().powi(2))?
                - (n - 2.0) * state.energy(&omega)?
                + lam
                    * state.volume(&omega, |x| {
                        (n * p.eval_p(x.z, x.s) + p.radial_term(x.z, x.s)) * x.u * x.u
                    })?;
            Ok(PohozaevSides { lhs, rhs })
        }
        PohozaevLocation::Right(t) => {
            let e2 = 2.0 * state.eps;
            if !(t > e2) {
                return Err(Error::InvalidInput(format!(
                    "right identity needs t > 2 eps, got {t}"
                )));
            }
            let outer = CurveKind::HalfSphereRight(t);
            let inner = CurveKind::HalfSphereRight(e2);
            let annulus = RegionDescriptor::of(&[Region::Right])
                .with(Constraint::InsideBall { cz: 1.0, r: t })
                .with(Constraint::OutsideBall { cz: 1.0, r: e2 });
            let lhs = t * state.surface(outer, |x| x.grad2())?;
            let rhs = e2 * state.surface(inner, |x| x.grad2() - 2.0 * x.dnu().powi(2))?
                + (n - 2.0) * state.energy(&annulus)?
                + 2.0 * t * state.surface(outer, |x| x.dnu().powi(2))?;
            Ok(PohozaevSides { lhs, rhs })
        }
        PohozaevLocation::Corridor(r) => {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "corridor identity needs 0 < r < 1, got {r}"
                )));
            }
            let kind = CurveKind::Slice(r);
            let omega =
                RegionDescriptor::of(&[Region::Left, Region::Corridor]).with(Constraint::Below(r));
            let lhs = state.surface(kind, |x| x.grad2() - lam * p.eval_p(x.z, x.s) * x.u * x.u)?;
            let rhs = 2.0 * state.surface(kind, |x| x.gz * x.gz)?
                + state.left_wall(|x| x.gz * x.gz)?
                - lam * state.volume(&omega, |x| p.axial_term(x.z, x.s) * x.u * x.u)?;
            Ok(PohozaevSides { lhs, rhs })
        }
    }
}

/// Normalized residual of the selected Pohozaev identity.
pub fn pohozaev_residual(state: &EigenState, location: PohozaevLocation) -> Result<f64, Error> {
    Ok(pohozaev_sides(state, location)?.residual())
}

/// R_ε^+ = ∫_{Γ_{2ε}^+}(−(N−2)u ∂_νu + 2ε|∇u|² − 4ε|∂_νu|²).
pub fn remainder_plus(state: &EigenState) -> Result<f64, Error> {
    let n = state.dim();
    let e = state.eps;
    state.surface(CurveKind::HalfSphereRight(2.0 * e), |x| {
        -(n - 2.0) * x.u * x.dnu() + 2.0 * e * x.grad2() - 4.0 * e * x.dnu().powi(2)
    })
}

/// Numeric and closed-form dN/dr at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSample {
    pub regime: Regime,
    pub r: f64,
    pub numeric: f64,
    pub closed: f64,
}

impl DerivativeSample {
    pub fn residual(&self) -> f64 {
        (self.numeric - self.closed).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub samples: Vec<DerivativeSample>,
    /// R_ε^+ when the profile has right-regime samples.
    pub remainder_plus: Option<f64>,
}

impl DerivativeReport {
    /// Median residual over the samples of one regime.
    pub fn median_absolute(&self, regime: Regime) -> Option<f64> {
        let mut res: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.regime == regime)
            .map(|s| s.residual())
            .collect();
        if res.is_empty() {
            return None;
        }
        res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(res[res.len() / 2])
    }

    /// Median residual over the samples of one regime divided by the largest |closed form|.
    pub fn median_relative(&self, regime: Regime) -> Option<f64> {
        let med = self.median_absolute(regime)?;
        let scale = self
            .samples
            .iter()
            .filter(|s| s.regime == regime)
            .fold(0.0f64, |m, s| m.max(s.closed.abs()));
        Some(if scale > 0.0 { med / scale } else { med })
    }
}

/// Closed-form dN_ε/dr at r.
pub fn derivative_closed_form(
    state: &EigenState,
    r: f64,
    rem_plus: Option<f64>,
) -> Result<f64, Error> {
    let lam = state.lambda;
    let p = &state.p;
    match state.regime(r)? {
        Regime::Left => {
            let t = -r;
            let kind = CurveKind::HalfSphereLeft(t);
            // ν = x/|x|.
            let dn2 = state.surface(kind, |x| x.dnu().powi(2))?;
            let u2 = state.surface(kind, |x| x.u * x.u)?;
            let udn = state.surface(kind, |x| x.u * x.dnu())?;
            let omega = RegionDescriptor::of(&[Region::Left])
                .with(Constraint::OutsideBall { cz: 0.0, r: t });
            let vol = state.volume(&omega, |x| {
                (2.0 * p.eval_p(x.z, x.s) + p.radial_term(x.z, x.s)) * x.u * x.u
            })?;
            let dndt = -2.0 * t * (dn2 * u2 - udn * udn) / (u2 * u2) - lam * vol / u2;
            Ok(-dndt)
        }
        Regime::Corridor => {
            let kind = CurveKind::Slice(r);
            let d1 = state.surface(kind, |x| x.gz * x.gz)?;
            let u2 = state.surface(kind, |x| x.u * x.u)?;
            let ud1 = state.surface(kind, |x| x.u * x.gz)?;
            let wall = state.left_wall(|x| x.gz * x.gz)?;
            let omega =
                RegionDescriptor::of(&[Region::Left, Region::Corridor]).with(Constraint::Below(r));
            let vol = state.volume(&omega, |x| p.axial_term(x.z, x.s) * x.u * x.u)?;
            let e = state.eps;
            Ok(e * (2.0 * (d1 * u2 - ud1 * ud1) / (u2 * u2) + wall / u2) - e * lam * vol / u2)
        }
        _ => {
            let t = r - 1.0;
            let kind = CurveKind::HalfSphereRight(t);
            let dn2 = state.surface(kind, |x| x.dnu().powi(2))?;
            let u2 = state.surface(kind, |x| x.u * x.u)?;
            let udn = state.surface(kind, |x| x.u * x.dnu())?;
            let rem = match rem_plus {
                Some(v) => v,
                None => remainder_plus(state)?,
            };
            Ok(2.0 * t * (dn2 * u2 - udn * udn) / (u2 * u2) + rem / u2)
        }
    }
}

/// Three-point differences of the profile against the closed-form derivative at interior samples
/// whose neighbours share the regime.
pub fn derivative_residual(
    profile: &FrequencyProfile,
    state: &EigenState,
) -> Result<DerivativeReport, Error> {
    let has_right = profile.samples.iter().any(|s| s.regime == Regime::Right);
    let rem = if has_right {
        Some(remainder_plus(state)?)
    } else {
        None
    };
    let idx: Vec<usize> = (1..profile.samples.len().saturating_sub(1))
        .filter(|&i| {
            let w = &profile.samples[i - 1..=i + 1];
            w[0].regime == w[1].regime && w[1].regime == w[2].regime
        })
        .collect();
    let samples: Result<Vec<DerivativeSample>, Error> = idx
        .par_iter()
        .map(|&i| {
            let (a, b, c) = (
                &profile.samples[i - 1],
                &profile.samples[i],
                &profile.samples[i + 1],
            );
            // Second-order three-point derivative on a non-uniform grid.
            let (h1, h2) = (b.r - a.r, c.r - b.r);
            let numeric = -h2 / (h1 * (h1 + h2)) * a.n
                + (h2 - h1) / (h1 * h2) * b.n
                + h1 / (h2 * (h1 + h2)) * c.n;
            Ok(DerivativeSample {
                regime: b.regime,
                r: b.r,
                numeric,
                closed: derivative_closed_form(state, b.r, rem)?,
            })
        })
        .collect();
    Ok(DerivativeReport {
        samples: samples?,
        remainder_plus: rem,
    })
}

/// ∫_{Ω_r^ε}(|∇u|² − λpu²) / (½∫_{Ω_r^ε}|∇u|²) for r in the left or corridor regime.
pub fn coercivity_ratio(state: &EigenState, r: f64) -> Result<f64, Error> {
    if state.regime(r)? == Regime::Right {
        return Err(Error::InvalidInput(format!(
            "coercivity is stated for r < 1, got {r}"
        )));
    }
    let omega = state.omega(r)?;
    let energy = state.energy(&omega)?;
    if energy == 0.0 {
        return Err(Error::Degenerate(
            "field has no energy in the region".into(),
        ));
    }
    Ok(state.d_form(&omega)? / (0.5 * energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross_section::solve_cross_section;
    use crate::geometry::{build_cylinder_mesh, build_exterior_mesh, Resolution};
    use crate::operators::Analytic;
    use std::sync::Arc;

    fn dipole(n: f64) -> impl Fn(f64, f64) -> (f64, [f64; 2]) + Sync {
        move |z: f64, s: f64| {
            let r2 = z * z + s * s;
            let rn = r2.powf(n / 2.0);
            (
                z / rn,
                [1.0 / rn - n * z * z / (rn * r2), -n * z * s / (rn * r2)],
            )
        }
    }

    #[test]
    fn dipole_exterior_frequency_is_two() {
        let mesh = build_exterior_mesh(3, 1.0, 64.0, &Resolution::default()).unwrap();
        let f = Analytic(dipole(3.0));
        let prof = frequency_exterior_model(
            &mesh,
            &f,
            ExteriorFrame::Left,
            "dipole",
            &[-1.0, -2.0, -4.0],
        )
        .unwrap();
        for s in &prof.samples {
            assert!((s.n - 2.0).abs() < 0.01, "{s:?}");
        }
    }

    #[test]
    fn tube_exponential_frequency_is_root() {
        let cs = solve_cross_section(3, 2000).unwrap();
        let k = cs.sqrt_lambda1();
        let mesh = build_cylinder_mesh(3, -14.0, 1.0, 1.0, 150, 24).unwrap();
        let f = Analytic(|z: f64, s: f64| {
            let e = (k * z).exp();
            (e * cs.psi(s), [k * e * cs.psi(s), e * cs.dpsi(s)])
        });
        let prof = frequency_tube_model(&mesh, &f, "exp", &[-6.0, -3.0, -1.0]).unwrap();
        for s in &prof.samples {
            assert!((s.n - k).abs() / k < 0.01, "{s:?} vs {k}");
        }
    }

    #[test]
    fn poincare_constant_is_n_minus_one() {
        let mesh = Arc::new(build_exterior_mesh(3, 1.0, 32.0, &Resolution::default()).unwrap());
        let res = poincare_optimal_constant(&mesh).unwrap();
        assert!((res.constant - 2.0).abs() < 0.04, "{}", res.constant);
        assert!(res.correlation > 0.99);
    }
}
