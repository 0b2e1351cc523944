//! Junction profiles on the model domain D̃ = D⁺ ∪ T₁⁻: Φ₁ = 𝒯(x₁ − 1) and Φ₂, the explicit
//! tube fields f and h, the Kelvin transform, and the envelope bounds for eigenfields.

use crate::cross_section::{solve_cross_section, CrossSectionSpectrum};
use crate::geometry::{
    build_exterior_mesh, build_half_ball_mesh, build_model_mesh, curve, CurveKind, MeridianMesh,
    MeshKind, ModelSpec, Region, Resolution, TAG_FAR_TUBE,
};
use crate::linalg::{generalized_eigen, SkylineLdlt};
use crate::operators::{
    line_load, region_integral, stiffness, surface_integral, DiscreteField, FieldExpr,
    RegionDescriptor, SparseOperator,
};
use crate::quadrature::{composite_gauss, sphere_measure};
use crate::Error;
use std::collections::HashMap;
use std::sync::Arc;

/// f(x₁, x′) = e^{−√λ₁(Σ)(x₁−1)} ψ₁^Σ(x′) with its meridian gradient.
pub fn eval_f(cs: &CrossSectionSpectrum, z: f64, s: f64) -> (f64, [f64; 2]) {
    let k = cs.sqrt_lambda1();
    let e = (-k * (z - 1.0)).exp();
    let psi = cs.psi(s);
    (e * psi, [-k * e * psi, e * cs.dpsi(s)])
}

/// h(x₁, x′) = f(1 − x₁, x′).
pub fn eval_h(cs: &CrossSectionSpectrum, z: f64, s: f64) -> (f64, [f64; 2]) {
    let (v, g) = eval_f(cs, 1.0 - z, s);
    (v, [-g[0], g[1]])
}

/// The field f as an evaluable expression (zero gradient outside the tube radius).
pub struct FField<'a>(pub &'a CrossSectionSpectrum);

impl FieldExpr for FField<'_> {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        if s > 1.0 {
            return None;
        }
        Some(eval_f(self.0, z, s))
    }
}

/// Separated mode ρ^{(x₁−1)/h} ψ_h(s) of the discrete tube operator: the exact discrete analogue
/// of f on a uniform tube grid.
#[derive(Debug, Clone)]
pub struct TubeMode {
    pub hz: f64,
    pub rho: f64,
    /// Discrete decay rate −ln(ρ)/h, the counterpart of √λ₁(Σ).
    pub kappa_h: f64,
    pub s_nodes: Vec<f64>,
    /// Positive, ω∫ψ_h² s^{N−2} ds = 1, zero at s = 1.
    pub psi: Vec<f64>,
}

impl TubeMode {
    pub fn psi_at(&self, s: f64) -> (f64, f64) {
        if !(0.0..=1.0).contains(&s) {
            return (0.0, 0.0);
        }
        let j = self
            .s_nodes
            .partition_point(|&x| x <= s)
            .clamp(1, self.s_nodes.len() - 1);
        let (s0, s1) = (self.s_nodes[j - 1], self.s_nodes[j]);
        let t = (s - s0) / (s1 - s0);
        (
            self.psi[j - 1] * (1.0 - t) + self.psi[j] * t,
            (self.psi[j] - self.psi[j - 1]) / (s1 - s0),
        )
    }

    pub fn eval(&self, z: f64, s: f64) -> (f64, [f64; 2]) {
        let e = (-self.kappa_h * (z - 1.0)).exp();
        let (p, dp) = self.psi_at(s);
        (e * p, [-self.kappa_h * e * p, e * dp])
    }
}

/// Extracts the tube mode from the assembled stiffness: with columns i−1, i, i+1 of the
/// uniform tube grid, K couples them as B u_{i−1} + A u_i + B u_{i+1} with B diagonal, so
/// u_i = ρ^i ψ solves the rows iff A ψ = (ρ + 1/ρ)(−B) ψ.
pub fn discrete_tube_mode(mesh: &MeridianMesh, k: &SparseOperator) -> Result<TubeMode, Error> {
    let tube: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&v| mesh.vertices[v][0] <= 1.0 && mesh.vertices[v][1] <= 1.0)
        .filter(|&v| {
            mesh.triangles
                .iter()
                .zip(&mesh.regions)
                .any(|(t, r)| *r == Region::Corridor && t.contains(&v))
        })
        .collect();
    let mut zs: Vec<f64> = tube.iter().map(|&v| mesh.vertices[v][0]).collect();
    let mut ss: Vec<f64> = tube.iter().map(|&v| mesh.vertices[v][1]).collect();
    let sort_dedup = |x: &mut Vec<f64>| {
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x.dedup();
    };
    sort_dedup(&mut zs);
    sort_dedup(&mut ss);
    if zs.len() < 5 || ss.len() < 3 {
        return Err(Error::InvalidInput(
            "model mesh has no tensor tube block".into(),
        ));
    }
    let index: HashMap<(u64, u64), usize> = tube
        .iter()
        .map(|&v| {
            (
                (mesh.vertices[v][0].to_bits(), mesh.vertices[v][1].to_bits()),
                v,
            )
        })
        .collect();
    let at = |z: f64, s: f64| -> Result<usize, Error> {
        index
            .get(&(z.to_bits(), s.to_bits()))
            .copied()
            .ok_or_else(|| Error::InvalidInput("tube grid is not tensor".into()))
    };
    let ic = zs.len() / 2;
    let free_s: Vec<f64> = ss.iter().copied().filter(|&s| s < 1.0).collect();
    let n = free_s.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut c = vec![vec![0.0; n]; n];
    for (j, &sj) in free_s.iter().enumerate() {
        let vj = at(zs[ic], sj)?;
        for (l, &sl) in free_s.iter().enumerate() {
            a[j][l] = k.full.get(vj, at(zs[ic], sl)?);
        }
        let right = k.full.get(vj, at(zs[ic + 1], sj)?);
        let left = k.full.get(vj, at(zs[ic - 1], sj)?);
        if (right - left).abs() > 1e-10 * right.abs() {
            return Err(Error::InvalidInput("tube spacing is not uniform".into()));
        }
        c[j][j] = -right;
    }
    let (nu, vecs) = generalized_eigen(&a, &c)?;
    let nu0 = nu[0];
    if nu0 <= 2.0 {
        return Err(Error::Degenerate(format!(
            "tube symbol {nu0} admits no decaying mode"
        )));
    }
    let rho = 0.5 * (nu0 - (nu0 * nu0 - 4.0).sqrt());
    let hz = zs[ic + 1] - zs[ic];
    let mut psi: Vec<f64> = (0..n).map(|j| vecs[j][0]).collect();
    psi.push(0.0);
    let s_nodes: Vec<f64> = free_s.iter().copied().chain(std::iter::once(1.0)).collect();
    if psi[0] < 0.0 {
        psi.iter_mut().for_each(|x| *x = -*x);
    }
    // P1 normalization ω ∫ ψ² s^{N−2} ds = 1.
    let m = mesh.dim as i32 - 2;
    let mut norm = 0.0;
    for j in 0..s_nodes.len() - 1 {
        for (t, w) in composite_gauss(0.0, 1.0, 1, 4) {
            let s = s_nodes[j] + t * (s_nodes[j + 1] - s_nodes[j]);
            let p = psi[j] * (1.0 - t) + psi[j + 1] * t;
            norm += w * (s_nodes[j + 1] - s_nodes[j]) * p * p * s.powi(m);
        }
    }
    norm *= sphere_measure(mesh.dim - 2);
    psi.iter_mut().for_each(|x| *x /= norm.sqrt());
    Ok(TubeMode {
        hz,
        rho,
        kappa_h: -rho.ln() / hz,
        s_nodes,
        psi,
    })
}

fn solve_dirichlet(
    mesh: &MeridianMesh,
    k: &SparseOperator,
    load: &[f64],
    boundary: &[f64],
) -> Result<Vec<f64>, Error> {
    let kb = k.full.matvec(boundary);
    let rhs: Vec<f64> = k.free.iter().map(|&i| load[i] - kb[i]).collect();
    let fact = SkylineLdlt::factor(&k.reduced)?;
    let x = fact.solve(&rhs);
    let mut out = boundary.to_vec();
    for (&i, v) in k.free.iter().zip(x) {
        out[i] = v;
    }
    let _ = mesh;
    Ok(out)
}

/// Φ₁ = w + (x₁−1)⁺ where ∫∇w·∇φ = ∫_Σ φ for all test φ vanishing on ∂D̃.
pub fn compute_phi1(mesh: &Arc<MeridianMesh>, k: &SparseOperator) -> Result<DiscreteField, Error> {
    let load = line_load(mesh, 1.0, 1.0, |_| 1.0);
    let w = solve_dirichlet(mesh, k, &load, &vec![0.0; mesh.n_vertices()])?;
    let values = w
        .iter()
        .zip(&mesh.vertices)
        .map(|(w, v)| w + (v[0] - 1.0).max(0.0))
        .collect();
    DiscreteField::new(mesh.clone(), values)
}

/// Φ₂ as the discrete harmonic function on D̃ equal to the tube mode on the far tube section
/// and zero on the rest of the boundary.
pub fn compute_phi2(
    mesh: &Arc<MeridianMesh>,
    k: &SparseOperator,
    mode: &TubeMode,
) -> Result<DiscreteField, Error> {
    let boundary: Vec<f64> = mesh
        .vertices
        .iter()
        .zip(&mesh.tags)
        .map(|(v, &t)| {
            if t & TAG_FAR_TUBE != 0 {
                mode.eval(v[0], v[1]).0
            } else {
                0.0
            }
        })
        .collect();
    let values = solve_dirichlet(mesh, k, &vec![0.0; mesh.n_vertices()], &boundary)?;
    DiscreteField::new(mesh.clone(), values)
}

/// Φ₁ and Φ₂ on one model mesh with the data needed to evaluate them beyond it.
#[derive(Debug, Clone)]
pub struct ProfilePair {
    pub phi1: DiscreteField,
    pub phi2: DiscreteField,
    pub mode: TubeMode,
    pub cross: Arc<CrossSectionSpectrum>,
    pub tube_length: f64,
    pub radius: f64,
}

impl ProfilePair {
    pub fn compute(spec: &ModelSpec) -> Result<Self, Error> {
        let mesh = Arc::new(build_model_mesh(spec)?);
        let k = stiffness(&mesh);
        let mode = discrete_tube_mode(&mesh, &k)?;
        let phi1 = compute_phi1(&mesh, &k)?;
        let phi2 = compute_phi2(&mesh, &k, &mode)?;
        let cross = Arc::new(solve_cross_section(spec.dim, 2000)?);
        Ok(Self {
            phi1,
            phi2,
            mode,
            cross,
            tube_length: spec.tube_length,
            radius: spec.radius,
        })
    }

    pub fn mesh(&self) -> &Arc<MeridianMesh> {
        &self.phi1.mesh
    }

    /// Φ₁ extended beyond the mesh by its asymptotics: x₁ − 1 in D⁺, 0 deep in the tube.
    pub fn phi1_at(&self, z: f64, s: f64) -> Option<f64> {
        self.phi1.value_at(z, s).or_else(|| self.beyond(z, s, true))
    }

    /// Φ₂ extended beyond the mesh: 0 in D⁺, the tube mode deep in the tube.
    pub fn phi2_at(&self, z: f64, s: f64) -> Option<f64> {
        self.phi2
            .value_at(z, s)
            .or_else(|| self.beyond(z, s, false))
    }

    fn beyond(&self, z: f64, s: f64, first: bool) -> Option<f64> {
        if z > 1.0 && (z - 1.0).hypot(s) >= self.radius * 0.999 {
            Some(if first { z - 1.0 } else { 0.0 })
        } else if z < -self.tube_length && s <= 1.0 {
            Some(if first { 0.0 } else { self.mode.eval(z, s).0 })
        } else {
            None
        }
    }

    /// Nodewise checks of the profile inequalities.
    pub fn report(&self) -> ProfileReport {
        let mesh = self.mesh();
        let mut phi1_excess = f64::INFINITY;
        let mut phi2_excess_tube = f64::INFINITY;
        let mut phi2_min_interior = f64::INFINITY;
        for (i, v) in mesh.vertices.iter().enumerate() {
            phi1_excess = phi1_excess.min(self.phi1.values[i] - (v[0] - 1.0).max(0.0));
            if v[0] <= 1.0 && v[1] <= 1.0 {
                let f = self.mode.eval(v[0], v[1]).0;
                if f > 0.0 {
                    phi2_excess_tube = phi2_excess_tube.min((self.phi2.values[i] - f) / f);
                }
            }
            if !mesh.dirichlet[i] {
                phi2_min_interior = phi2_min_interior.min(self.phi2.values[i]);
            }
        }
        let kappa = self.cross.sqrt_lambda1();
        // Tube decay: fit C₂ at x₁ = 0 and test x₁ ∈ [−L, 0].
        let c2 = self.phi1_at(0.0, 0.0).unwrap_or(f64::NAN) / (-0.5 * kappa).exp();
        let mut tube_decay_ok = true;
        let n = 60;
        for i in 0..=n {
            let z = -self.tube_length * i as f64 / n as f64;
            if let Some(v) = self.phi1.value_at(z, 0.0) {
                if v > c2 * (0.5 * kappa * (z - 1.0)).exp() * (1.0 + 1e-9) {
                    tube_decay_ok = false;
                }
            }
        }
        // Far field: fit c on |x − e₁| = 4 and test 4 ≤ |x − e₁| ≤ 10.
        let dim = mesh.dim as i32;
        let far = |radius: f64, g: &dyn Fn(f64, f64) -> Option<f64>| -> f64 {
            let mut c = 0.0f64;
            for k in 1..40 {
                let phi = std::f64::consts::FRAC_PI_2 * k as f64 / 40.0;
                let (z, s) = (1.0 + radius * phi.cos(), radius * phi.sin());
                if let Some(d) = g(z, s) {
                    c = c.max(d * radius.powi(dim) / (z - 1.0));
                }
            }
            c
        };
        let d1 = |z: f64, s: f64| self.phi1.value_at(z, s).map(|v| (v - (z - 1.0)).abs());
        let d2 = |z: f64, s: f64| self.phi2.value_at(z, s).map(|v| v.abs());
        let c_phi1 = far(4.0, &d1);
        let c_phi2 = far(4.0, &d2);
        let far_ok = |c: f64, g: &dyn Fn(f64, f64) -> Option<f64>| {
            [5.0, 6.0, 8.0, 10.0].iter().all(|&r| far(r, g) <= c * 1.05)
        };
        ProfileReport {
            phi1_min_excess: phi1_excess,
            phi2_min_excess_tube: phi2_excess_tube,
            phi2_min_interior,
            c2,
            tube_decay_ok,
            c_far_phi1: c_phi1,
            far_phi1_ok: far_ok(c_phi1, &d1),
            c_far_phi2: c_phi2,
            far_phi2_ok: far_ok(c_phi2, &d2),
        }
    }
}

/// Fitted constants and nodewise inequality margins of the profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    /// min(Φ₁ − (x₁−1)⁺) over the nodes.
    pub phi1_min_excess: f64,
    /// min (Φ₂ − f)/f over the tube nodes, with the discrete tube mode standing in for f.
    pub phi2_min_excess_tube: f64,
    pub phi2_min_interior: f64,
    pub c2: f64,
    pub tube_decay_ok: bool,
    pub c_far_phi1: f64,
    pub far_phi1_ok: bool,
    pub c_far_phi2: f64,
    pub far_phi2_ok: bool,
}

/// Kelvin transform about (cz, 0) with radius R:
/// ṽ(x) = (R/|x−c|)^{N−2} v(c + R²(x−c)/|x−c|²).
pub struct Kelvin<'a> {
    pub inner: &'a dyn FieldExpr,
    pub cz: f64,
    pub radius: f64,
    pub dim: usize,
}

pub fn kelvin(inner: &dyn FieldExpr, cz: f64, radius: f64, dim: usize) -> Kelvin<'_> {
    Kelvin {
        inner,
        cz,
        radius,
        dim,
    }
}

impl FieldExpr for Kelvin<'_> {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        let y = [z - self.cz, s];
        let r2 = y[0] * y[0] + y[1] * y[1];
        if r2 == 0.0 {
            return None;
        }
        let r = r2.sqrt();
        let big = self.radius * self.radius;
        let t = [self.cz + big * y[0] / r2, big * y[1] / r2];
        let (v, g) = self.inner.eval(t[0], t[1])?;
        let m = self.dim as f64 - 2.0;
        let factor = (self.radius / r).powf(m);
        // DT = R²(I/r² − 2yyᵀ/r⁴) is symmetric.
        let dt = |i: usize, j: usize| {
            big * ((if i == j { 1.0 } else { 0.0 }) / r2 - 2.0 * y[i] * y[j] / (r2 * r2))
        };
        let mut grad = [0.0; 2];
        for i in 0..2 {
            let chain = dt(i, 0) * g[0] + dt(i, 1) * g[1];
            grad[i] = factor * (chain - m * y[i] / r2 * v);
        }
        Some((factor * v, grad))
    }
}

/// Both sides of the Kelvin energy identity
/// ∫_{B⁻_{1/R}}|∇ṽ|² + (N−2)R∫_{Γ⁻_{1/R}}ṽ² = ∫_{Ω_{−R}}|∇v|² and of the trace identity
/// R²∫_{Γ⁻_{1/R}}ṽ² = ∫_{Γ_R^−}v².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelvinIdentity {
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub trace_lhs: f64,
    pub trace_rhs: f64,
}

impl KelvinIdentity {
    pub fn energy_residual(&self) -> f64 {
        (self.energy_lhs - self.energy_rhs).abs() / self.energy_lhs.abs().max(self.energy_rhs.abs())
    }

    pub fn trace_residual(&self) -> f64 {
        (self.trace_lhs - self.trace_rhs).abs() / self.trace_lhs.abs().max(self.trace_rhs.abs())
    }
}

/// Evaluates both identities for a field v on Ω_{−R}, with the exterior truncated at 64R.
pub fn kelvin_energy_identity(
    v: &dyn FieldExpr,
    dim: usize,
    r: f64,
    res: &Resolution,
) -> Result<KelvinIdentity, Error> {
    let kv = kelvin(v, 0.0, 1.0, dim);
    let ball = build_half_ball_mesh(dim, 1.0 / r, res)?;
    let ext = build_exterior_mesh(dim, r, 64.0 * r, res)?;
    let inner = curve(&ball, CurveKind::HalfSphereLeft(1.0 / r), 64)?;
    let outer = curve(&ext, CurveKind::HalfSphereLeft(r), 64)?;
    let kv_trace = surface_integral(&kv, &inner, |x| x.u * x.u)?;
    let energy_lhs = region_integral(&ball, &kv, &RegionDescriptor::all(), |x| x.grad2())?.value
        + (dim as f64 - 2.0) * r * kv_trace;
    let energy_rhs = region_integral(&ext, v, &RegionDescriptor::all(), |x| x.grad2())?.value;
    Ok(KelvinIdentity {
        energy_lhs,
        energy_rhs,
        trace_lhs: r * r * kv_trace,
        trace_rhs: surface_integral(v, &outer, |x| x.u * x.u)?,
    })
}

/// Fitted envelope constants of an eigenfield on ℬ_ε = B⁺_{r₀} ∪ {|x′| < ε, ½ < x₁ ≤ 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub eps: f64,
    /// Smallest C₃ with |u| ≤ C₃ Φ^ε on the samples.
    pub c3: f64,
    /// Largest C with u ≥ C Φ̃^ε where Φ̃^ε > 0.
    pub c_sub: f64,
    /// Samples with Φ̃^ε ≤ 0 where u < C Φ̃^ε.
    pub sub_violations: usize,
    /// min u/(x₁−1) over B⁺_{r₀} ∖ B⁺_{2ε}.
    pub c5: f64,
    pub sup_abs_u: f64,
    pub samples: usize,
}

impl EnvelopeReport {
    pub fn holds(&self) -> bool {
        self.c3.is_finite()
            && self.c3 > 0.0
            && self.c5 > 0.0
            && self.c_sub > 0.0
            && self.sub_violations == 0
            && self.sup_abs_u.is_finite()
    }
}

/// Evaluates Φ^ε and Φ̃^ε on the mesh nodes of ℬ_ε and fits the envelope constants.
pub fn check_envelopes(
    u: &DiscreteField,
    profiles: &ProfilePair,
    eps: f64,
    r0: f64,
) -> Result<EnvelopeReport, Error> {
    let mesh = &u.mesh;
    if !matches!(mesh.kind, MeshKind::Dumbbell { eps: e, .. } if (e - eps).abs() < 1e-14) {
        return Err(Error::InvalidInput(
            "envelope check needs the eigenfield of the same channel width".into(),
        ));
    }
    let kappa = profiles.cross.sqrt_lambda1();
    let amp_sup = (-kappa / (4.0 * eps)).exp();
    let amp_sub = (-kappa / (2.0 * 2f64.sqrt() * eps)).exp();
    let mut c3 = 0.0f64;
    let mut sub_pairs = Vec::new();
    let mut c5 = f64::INFINITY;
    let mut samples = 0;
    for (i, v) in mesh.vertices.iter().enumerate() {
        let (z, s) = (v[0], v[1]);
        let in_ball = z > 1.0 && (z - 1.0).hypot(s) < r0;
        let in_tube = z > 0.5 && z <= 1.0 && s < eps;
        if mesh.dirichlet[i] || !(in_ball || in_tube) {
            continue;
        }
        let ui = u.values[i];
        let p1 = profiles.phi1_at(1.0 + (z - 1.0) / eps, s / eps);
        let p2 = profiles.phi2_at(1.0 + (z - 1.0) / (2.0 * eps), s / (2.0 * eps));
        let p2s = profiles.phi2_at(
            1.0 + (z - 1.0) / (2f64.sqrt() * eps),
            s / (2f64.sqrt() * eps),
        );
        let (Some(p1), Some(p2), Some(p2s)) = (p1, p2, p2s) else {
            return Err(Error::OutsideDomain(format!(
                "scaled point of ({z}, {s}) outside the model domain"
            )));
        };
        let sup = eps * p1 + amp_sup * p2;
        let sub = eps * p1 - amp_sub * p2s;
        samples += 1;
        if sup > 0.0 {
            c3 = c3.max(ui.abs() / sup);
        }
        sub_pairs.push((ui, sub));
        if in_ball && (z - 1.0).hypot(s) > 2.0 * eps && z - 1.0 > 1e-12 {
            c5 = c5.min(ui / (z - 1.0));
        }
    }
    let c_sub = sub_pairs
        .iter()
        .filter(|(_, b)| *b > 0.0)
        .map(|(a, b)| a / b)
        .fold(f64::INFINITY, f64::min);
    let sub_violations = sub_pairs
        .iter()
        .filter(|(a, b)| *b <= 0.0 && *a < c_sub * b)
        .count();
    Ok(EnvelopeReport {
        eps,
        c3,
        c_sub,
        sub_violations,
        c5,
        sup_abs_u: u.max_abs(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Analytic;

    fn small_model() -> ProfilePair {
        let mut spec = ModelSpec::new(3);
        spec.resolution = Resolution::tiny();
        spec.tube_length = 6.0;
        spec.radius = 12.0;
        ProfilePair::compute(&spec).unwrap()
    }

    #[test]
    fn f_closed_form_values() {
        let cs = solve_cross_section(3, 400).unwrap();
        assert_eq!(eval_f(&cs, 1.0, 0.0).0, cs.psi(0.0));
        assert_eq!(eval_f(&cs, -2.0, 1.0).0, 0.0);
        assert_eq!(eval_h(&cs, 0.0, 0.3).0, eval_f(&cs, 1.0, 0.3).0);
    }

    #[test]
    fn tube_mode_rate_approximates_cross_section_root() {
        let pair = small_model();
        let k = pair.cross.sqrt_lambda1();
        assert!(
            (pair.mode.kappa_h - k).abs() / k < 0.05,
            "{} vs {k}",
            pair.mode.kappa_h
        );
    }

    #[test]
    fn profile_inequalities_hold() {
        let rep = small_model().report();
        assert!(rep.phi1_min_excess > -1e-8, "{rep:?}");
        assert!(rep.phi2_min_excess_tube > -1e-8, "{rep:?}");
        assert!(rep.phi2_min_interior > 0.0, "{rep:?}");
        assert!(rep.tube_decay_ok);
    }

    #[test]
    fn kelvin_of_linear_field_is_dipole() {
        let lin = Analytic(|z: f64, _s: f64| (z, [1.0, 0.0]));
        let k = kelvin(&lin, 0.0, 1.0, 3);
        let (v, g) = k.eval(-0.7, 0.4).unwrap();
        let r2: f64 = 0.49 + 0.16;
        let r3 = r2.powf(1.5);
        assert!((v - (-0.7) / r3).abs() < 1e-14);
        let gz = 1.0 / r3 - 3.0 * 0.49 / (r3 * r2);
        assert!((g[0] - gz).abs() < 1e-12);
    }

    #[test]
    fn kelvin_identity_for_dipole() {
        let dip = Analytic(|z: f64, s: f64| {
            let r2 = z * z + s * s;
            let r3 = r2.powf(1.5);
            (
                z / r3,
                [1.0 / r3 - 3.0 * z * z / (r3 * r2), -3.0 * z * s / (r3 * r2)],
            )
        });
        let id = kelvin_energy_identity(&dip, 3, 1.0, &Resolution::default()).unwrap();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((id.energy_lhs - exact).abs() / exact < 1e-3, "{id:?}");
        assert!(
            id.energy_residual() < 0.01 && id.trace_residual() < 1e-6,
            "{id:?}"
        );
    }

    #[test]
    fn kelvin_is_an_involution() {
        let base = Analytic(|z: f64, s: f64| {
            (
                (z * 1.3).sin() * (1.0 + s * s),
                [
                    1.3 * (z * 1.3).cos() * (1.0 + s * s),
                    2.0 * s * (z * 1.3).sin(),
                ],
            )
        });
        let once = kelvin(&base, 0.0, 1.0, 4);
        let twice = kelvin(&once, 0.0, 1.0, 4);
        for &(z, s) in &[(-0.3, 0.2), (-2.0, 1.5), (0.5, 0.7)] {
            let a = base.eval(z, s).unwrap();
            let b = twice.eval(z, s).unwrap();
            assert!((a.0 - b.0).abs() < 1e-12);
            assert!((a.1[0] - b.1[0]).abs() < 1e-10 && (a.1[1] - b.1[1]).abs() < 1e-10);
        }
    }
}
