//! Axisymmetric P1 weak forms: stiffness, weighted mass, line loads and boundary masses, plus
//! surface integrals over sampling curves and region-restricted volume integrals.
//!
//! Every integral carries the factor ω_{N−2} s^{N−2} of the axisymmetric reduction, so the
//! values are the N-dimensional integrals of the rotated fields.

use crate::geometry::{MeridianMesh, Region, SamplingCurve};
use crate::linalg::{SparseSym, TripletBuilder};
use crate::quadrature::{composite_gauss, sphere_measure, TRIANGLE_RULE};
use crate::Error;
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

/// Fixed chunk size of the parallel reductions; sums are formed per chunk and then added in
/// chunk order, so results do not depend on the number of threads.
const CHUNK: usize = 512;

/// Scalar field evaluable with its gradient in meridian coordinates.
pub trait FieldExpr: Sync {
    /// Value and (∂_z, ∂_s) gradient at (z, s); `None` outside the field's domain.
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])>;

    /// Evaluation at a point known to lie in triangle `t` of `mesh` with barycentrics `bary`.
    fn eval_in(
        &self,
        mesh: &MeridianMesh,
        t: usize,
        bary: [f64; 3],
        z: f64,
        s: f64,
    ) -> Option<(f64, [f64; 2])> {
        let _ = (mesh, t, bary);
        self.eval(z, s)
    }
}

/// Closed-form field given by a closure returning value and gradient.
pub struct Analytic<F>(pub F);

impl<F> FieldExpr for Analytic<F>
where
    F: Fn(f64, f64) -> (f64, [f64; 2]) + Sync,
{
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        let (v, g) = (self.0)(z, s);
        if v.is_finite() && g[0].is_finite() && g[1].is_finite() {
            Some((v, g))
        } else {
            None
        }
    }
}

/// Nodal values of a P1 field on a meridian mesh.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub mesh: Arc<MeridianMesh>,
    pub values: Vec<f64>,
    recovered: OnceLock<Vec<[f64; 2]>>,
}

impl DiscreteField {
    pub fn new(mesh: Arc<MeridianMesh>, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        Ok(Self {
            mesh,
            values,
            recovered: OnceLock::new(),
        })
    }

    pub fn zeros(mesh: Arc<MeridianMesh>) -> Self {
        let n = mesh.n_vertices();
        Self {
            mesh,
            values: vec![0.0; n],
            recovered: OnceLock::new(),
        }
    }

    /// Nodal interpolant of f(z, s).
    pub fn from_fn(mesh: Arc<MeridianMesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = mesh.vertices.iter().map(|v| f(v[0], v[1])).collect();
        Self {
            mesh,
            values,
            recovered: OnceLock::new(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            recovered: OnceLock::new(),
        }
    }

    /// Constant gradient of the P1 interpolant on triangle t.
    pub fn triangle_gradient(&self, t: usize) -> [f64; 2] {
        let (grads, _) = p1_gradients(&self.mesh, t);
        let tri = self.mesh.triangles[t];
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += self.values[tri[k]] * grads[k][0];
            g[1] += self.values[tri[k]] * grads[k][1];
        }
        g
    }

    /// Area-weighted average of the adjacent triangle gradients at every vertex.
    pub fn nodal_gradients(&self) -> &[[f64; 2]] {
        self.recovered.get_or_init(|| {
            let mesh = &self.mesh;
            let mut acc = vec![[0.0; 2]; mesh.n_vertices()];
            let mut wsum = vec![0.0; mesh.n_vertices()];
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let g = self.triangle_gradient(t);
                let a = mesh.triangle_area(t);
                for &v in tri {
                    acc[v][0] += a * g[0];
                    acc[v][1] += a * g[1];
                    wsum[v] += a;
                }
            }
            acc.iter()
                .zip(&wsum)
                .map(|(g, w)| [g[0] / w, g[1] / w])
                .collect()
        })
    }

    /// Interpolated value at (z, s), or `None` outside the mesh.
    pub fn value_at(&self, z: f64, s: f64) -> Option<f64> {
        let (t, b) = self.mesh.locate(z, s)?;
        let tri = self.mesh.triangles[t];
        Some((0..3).map(|k| b[k] * self.values[tri[k]]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl FieldExpr for DiscreteField {
    fn eval(&self, z: f64, s: f64) -> Option<(f64, [f64; 2])> {
        let (t, b) = self.mesh.locate(z, s)?;
        let tri = self.mesh.triangles[t];
        let rec = self.nodal_gradients();
        let mut u = 0.0;
        let mut g = [0.0; 2];
        for k in 0..3 {
            u += b[k] * self.values[tri[k]];
            g[0] += b[k] * rec[tri[k]][0];
            g[1] += b[k] * rec[tri[k]][1];
        }
        Some((u, g))
    }

    fn eval_in(
        &self,
        mesh: &MeridianMesh,
        t: usize,
        bary: [f64; 3],
        z: f64,
        s: f64,
    ) -> Option<(f64, [f64; 2])> {
        if std::ptr::eq(mesh, &*self.mesh) {
            let tri = mesh.triangles[t];
            let u = (0..3).map(|k| bary[k] * self.values[tri[k]]).sum();
            Some((u, self.triangle_gradient(t)))
        } else {
            self.eval(z, s)
        }
    }
}

/// Gradients of the three barycentric basis functions on triangle t and its area.
pub fn p1_gradients(mesh: &MeridianMesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = mesh.triangles[t];
    let [za, sa] = mesh.vertices[a];
    let [zb, sb] = mesh.vertices[b];
    let [zc, sc] = mesh.vertices[c];
    let det = (zb - za) * (sc - sa) - (zc - za) * (sb - sa);
    let grads = [
        [(sb - sc) / det, (zc - zb) / det],
        [(sc - sa) / det, (za - zc) / det],
        [(sa - sb) / det, (zb - za) / det],
    ];
    (grads, 0.5 * det)
}

/// Physical point of barycentric coordinates `b` in triangle t.
fn point(mesh: &MeridianMesh, t: usize, b: &[f64; 3]) -> (f64, f64) {
    let tri = mesh.triangles[t];
    let mut z = 0.0;
    let mut s = 0.0;
    for k in 0..3 {
        z += b[k] * mesh.vertices[tri[k]][0];
        s += b[k] * mesh.vertices[tri[k]][1];
    }
    (z, s)
}

/// Symmetric operator on all vertices, with its restriction to the free (non-Dirichlet) ones.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub full: SparseSym,
    pub free: Vec<usize>,
    pub reduced: SparseSym,
}

impl SparseOperator {
    fn new(mesh: &MeridianMesh, full: SparseSym) -> Self {
        let free = mesh.free_nodes();
        let reduced = full.restrict(&free);
        Self {
            full,
            free,
            reduced,
        }
    }

    /// Quadratic form of nodal values over all vertices.
    pub fn form(&self, values: &[f64]) -> f64 {
        self.full.quadratic_form(values)
    }
}

fn assemble(
    mesh: &MeridianMesh,
    element: &(dyn Fn(usize) -> Result<[[f64; 3]; 3], Error> + Sync),
) -> Result<SparseSym, Error> {
    let locals: Vec<Result<[[f64; 3]; 3], Error>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(element)
        .collect();
    let mut tb = TripletBuilder::new(mesh.n_vertices());
    for (t, loc) in locals.into_iter().enumerate() {
        let loc = loc?;
        let tri = mesh.triangles[t];
        for a in 0..3 {
            for b in 0..3 {
                if loc[a][b] != 0.0 {
                    tb.add(tri[a], tri[b], loc[a][b]);
                }
            }
        }
    }
    Ok(tb.build())
}

/// ω ∫_T s^{N−2} dA by the seven-point rule.
fn weighted_area(mesh: &MeridianMesh, t: usize) -> f64 {
    let omega = sphere_measure(mesh.dim - 2);
    let m = mesh.dim as i32 - 2;
    let area = mesh.triangle_area(t);
    TRIANGLE_RULE
        .iter()
        .map(|(b, w)| w * point(mesh, t, b).1.powi(m))
        .sum::<f64>()
        * area
        * omega
}

/// Stiffness matrix ω_{N−2} ∫ s^{N−2} ∇φ_i·∇φ_j.
pub fn stiffness(mesh: &MeridianMesh) -> SparseOperator {
    let full = assemble(mesh, &|t| {
        let (g, _) = p1_gradients(mesh, t);
        let wa = weighted_area(mesh, t);
        let mut loc = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                loc[a][b] = wa * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        Ok(loc)
    })
    .expect("stiffness assembly is infallible");
    SparseOperator::new(mesh, full)
}

/// Weighted mass matrix ω_{N−2} ∫ s^{N−2} p φ_i φ_j; errors on a negative weight sample.
pub fn weighted_mass(
    mesh: &MeridianMesh,
    p: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<SparseOperator, Error> {
    let omega = sphere_measure(mesh.dim - 2);
    let m = mesh.dim as i32 - 2;
    let full = assemble(mesh, &|t| {
        let area = mesh.triangle_area(t);
        let mut loc = [[0.0; 3]; 3];
        for (b, w) in TRIANGLE_RULE.iter() {
            let (z, s) = point(mesh, t, b);
            let pv = p(z, s);
            if pv < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "negative weight {pv} at ({z}, {s})"
                )));
            }
            if pv == 0.0 {
                continue;
            }
            let f = omega * area * w * pv * s.powi(m);
            for a in 0..3 {
                for c in 0..3 {
                    loc[a][c] += f * b[a] * b[c];
                }
            }
        }
        Ok(loc)
    })?;
    Ok(SparseOperator::new(mesh, full))
}

/// Distinct mesh edges (i < j) for which `keep(i, j)` holds, in sorted order.
fn edges_where(mesh: &MeridianMesh, keep: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = (a.min(b), a.max(b));
            if keep(e.0, e.1) {
                set.insert(e);
            }
        }
    }
    set.into_iter().collect()
}

/// Load vector ω ∫ φ_i g s^{N−2} along the mesh edges lying on the segment {z = z0, s ≤ s_max}.
pub fn line_load(mesh: &MeridianMesh, z0: f64, s_max: f64, g: impl Fn(f64) -> f64) -> Vec<f64> {
    let omega = sphere_measure(mesh.dim - 2);
    let m = mesh.dim as i32 - 2;
    let on = |i: usize| mesh.vertices[i][0] == z0 && mesh.vertices[i][1] <= s_max + 1e-14;
    let mut f = vec![0.0; mesh.n_vertices()];
    for (a, b) in edges_where(mesh, |a, b| on(a) && on(b)) {
        let (sa, sb) = (mesh.vertices[a][1], mesh.vertices[b][1]);
        for (t, w) in composite_gauss(0.0, 1.0, 1, 4) {
            let s = sa + t * (sb - sa);
            let jac = (sb - sa).abs();
            let val = omega * w * jac * s.powi(m) * g(s);
            f[a] += val * (1.0 - t);
            f[b] += val * t;
        }
    }
    f
}

/// Boundary mass ω ∫ φ_i φ_j s^{N−2} dℓ over boundary edges whose endpoints both carry `tag`.
pub fn boundary_mass(mesh: &MeridianMesh, tag: u16) -> SparseOperator {
    let omega = sphere_measure(mesh.dim - 2);
    let m = mesh.dim as i32 - 2;
    let mut count = std::collections::HashMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
        }
    }
    let mut tb = TripletBuilder::new(mesh.n_vertices());
    let tagged = |i: usize| mesh.tags[i] & tag != 0;
    for (a, b) in edges_where(mesh, |a, b| tagged(a) && tagged(b) && count[&(a, b)] == 1) {
        let pa = mesh.vertices[a];
        let pb = mesh.vertices[b];
        let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
        let mut loc = [[0.0; 2]; 2];
        for (t, w) in composite_gauss(0.0, 1.0, 1, 4) {
            let s = pa[1] + t * (pb[1] - pa[1]);
            let f = omega * w * len * s.powi(m);
            let phi = [1.0 - t, t];
            for i in 0..2 {
                for j in 0..2 {
                    loc[i][j] += f * phi[i] * phi[j];
                }
            }
        }
        let ids = [a, b];
        for i in 0..2 {
            for j in 0..2 {
                tb.add(ids[i], ids[j], loc[i][j]);
            }
        }
    }
    SparseOperator::new(mesh, tb.build())
}

/// Field data at a quadrature node of a curve or of a region.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub z: f64,
    pub s: f64,
    pub u: f64,
    pub gz: f64,
    pub gs: f64,
    /// Unit normal (zero for volume samples).
    pub nz: f64,
    pub ns: f64,
}

impl Sample {
    pub fn grad2(&self) -> f64 {
        self.gz * self.gz + self.gs * self.gs
    }

    pub fn dnu(&self) -> f64 {
        self.gz * self.nz + self.gs * self.ns
    }

    /// x·∇u.
    pub fn x_dot_grad(&self) -> f64 {
        self.z * self.gz + self.s * self.gs
    }
}

/// ∫_curve integrand(sample) dσ with the axisymmetric surface weight.
pub fn surface_integral(
    field: &dyn FieldExpr,
    curve: &SamplingCurve,
    integrand: impl Fn(&Sample) -> f64 + Sync,
) -> Result<f64, Error> {
    let parts: Vec<Result<f64, Error>> = curve
        .nodes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for n in chunk {
                let (u, g) = field.eval(n.z, n.s).ok_or_else(|| {
                    Error::OutsideDomain(format!(
                        "curve node ({}, {}) outside the field's mesh",
                        n.z, n.s
                    ))
                })?;
                let smp = Sample {
                    z: n.z,
                    s: n.s,
                    u,
                    gz: g[0],
                    gs: g[1],
                    nz: n.nz,
                    ns: n.ns,
                };
                acc += n.weight * integrand(&smp);
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Minimum of the field over the curve nodes.
pub fn curve_min(field: &dyn FieldExpr, curve: &SamplingCurve) -> Result<f64, Error> {
    let mut m = f64::INFINITY;
    for n in &curve.nodes {
        let (u, _) = field
            .eval(n.z, n.s)
            .ok_or_else(|| Error::OutsideDomain(format!("({}, {})", n.z, n.s)))?;
        m = m.min(u);
    }
    Ok(m)
}

/// Geometric restriction of a region integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// |x − (cz, 0)| < r.
    InsideBall { cz: f64, r: f64 },
    /// |x − (cz, 0)| > r.
    OutsideBall { cz: f64, r: f64 },
    /// x₁ < z.
    Below(f64),
    /// x₁ > z.
    Above(f64),
}

impl Constraint {
    fn holds(&self, z: f64, s: f64) -> bool {
        match *self {
            Constraint::InsideBall { cz, r } => (z - cz).hypot(s) < r,
            Constraint::OutsideBall { cz, r } => (z - cz).hypot(s) > r,
            Constraint::Below(zc) => z < zc,
            Constraint::Above(zc) => z > zc,
        }
    }

    /// Some(true) if the whole triangle satisfies it, Some(false) if none of it, None if cut.
    fn classify(&self, p: &[[f64; 2]; 3]) -> Option<bool> {
        match *self {
            Constraint::InsideBall { cz, r } | Constraint::OutsideBall { cz, r } => {
                let inside = matches!(self, Constraint::InsideBall { .. });
                let dmax = p
                    .iter()
                    .map(|v| (v[0] - cz).hypot(v[1]))
                    .fold(0.0, f64::max);
                let dmin = dist_to_triangle([cz, 0.0], p);
                if dmax <= r {
                    Some(inside)
                } else if dmin >= r {
                    Some(!inside)
                } else {
                    None
                }
            }
            Constraint::Below(zc) | Constraint::Above(zc) => {
                let below = matches!(self, Constraint::Below(_));
                let lo = p.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = p.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                if hi <= zc {
                    Some(below)
                } else if lo >= zc {
                    Some(!below)
                } else {
                    None
                }
            }
        }
    }
}

fn dist_to_segment(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((q[0] - a[0]) * d[0] + (q[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (q[0] - a[0] - t * d[0]).hypot(q[1] - a[1] - t * d[1])
}

fn dist_to_triangle(q: [f64; 2], p: &[[f64; 2]; 3]) -> f64 {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 =
        ((q[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (q[1] - p[0][1])) / det;
    let l2 =
        ((p[1][0] - p[0][0]) * (q[1] - p[0][1]) - (q[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    if l1 >= 0.0 && l2 >= 0.0 && l1 + l2 <= 1.0 {
        return 0.0;
    }
    dist_to_segment(q, p[0], p[1])
        .min(dist_to_segment(q, p[1], p[2]))
        .min(dist_to_segment(q, p[2], p[0]))
}

/// Region of a meridian mesh: a set of region tags intersected with geometric constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDescriptor {
    pub regions: Vec<Region>,
    pub constraints: Vec<Constraint>,
}

impl RegionDescriptor {
    pub fn all() -> Self {
        Self {
            regions: vec![Region::Left, Region::Corridor, Region::Right],
            constraints: Vec::new(),
        }
    }

    pub fn of(regions: &[Region]) -> Self {
        Self {
            regions: regions.to_vec(),
            constraints: Vec::new(),
        }
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }
}

/// Outcome of a region integral; `empty` flags a region without any quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIntegral {
    pub value: f64,
    pub empty: bool,
}

const CUT_DEPTH: usize = 5;

/// ∫_region integrand(sample) dx over the triangles of `mesh`, evaluating `field` inside them.
/// Triangles cut by a constraint are subdivided recursively before masking quadrature points.
pub fn region_integral(
    mesh: &MeridianMesh,
    field: &dyn FieldExpr,
    region: &RegionDescriptor,
    integrand: impl Fn(&Sample) -> f64 + Sync,
) -> Result<RegionIntegral, Error> {
    let omega = sphere_measure(mesh.dim - 2);
    let m = mesh.dim as i32 - 2;
    let ids: Vec<usize> = (0..mesh.triangles.len())
        .filter(|&t| region.regions.contains(&mesh.regions[t]))
        .collect();
    let parts: Vec<Result<(f64, usize), Error>> = ids
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            let mut points = 0usize;
            for &t in chunk {
                let area = mesh.triangle_area(t);
                // Sub-triangles in barycentric coordinates of t.
                let root = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                let mut stack = vec![(root, 0usize, area)];
                while let Some((sub, depth, sub_area)) = stack.pop() {
                    let phys = sub.map(|b| {
                        let (z, s) = point(mesh, t, &b);
                        [z, s]
                    });
                    let mut verdict = Some(true);
                    for c in &region.constraints {
                        match c.classify(&phys) {
                            Some(false) => {
                                verdict = Some(false);
                                break;
                            }
                            Some(true) => {}
                            None => verdict = None,
                        }
                    }
                    let (mask, split) = match verdict {
                        Some(false) => continue,
                        Some(true) => (false, false),
                        None if depth < CUT_DEPTH => (false, true),
                        None => (true, false),
                    };
                    if split {
                        let mid = |a: usize, b: usize| -> [f64; 3] {
                            std::array::from_fn(|k| 0.5 * (sub[a][k] + sub[b][k]))
                        };
                        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
                        let q = 0.25 * sub_area;
                        stack.push(([sub[0], m01, m20], depth + 1, q));
                        stack.push(([m01, sub[1], m12], depth + 1, q));
                        stack.push(([m20, m12, sub[2]], depth + 1, q));
                        stack.push(([m01, m12, m20], depth + 1, q));
                        continue;
                    }
                    for (b, w) in TRIANGLE_RULE.iter() {
                        let bary: [f64; 3] = std::array::from_fn(|k| {
                            b[0] * sub[0][k] + b[1] * sub[1][k] + b[2] * sub[2][k]
                        });
                        let (z, s) = point(mesh, t, &bary);
                        if mask && !region.constraints.iter().all(|c| c.holds(z, s)) {
                            continue;
                        }
                        let (u, g) = field.eval_in(mesh, t, bary, z, s).ok_or_else(|| {
                            Error::OutsideDomain(format!("volume node ({z}, {s})"))
                        })?;
                        let smp = Sample {
                            z,
                            s,
                            u,
                            gz: g[0],
                            gs: g[1],
                            nz: 0.0,
                            ns: 0.0,
                        };
                        acc += omega * sub_area * w * s.powi(m) * integrand(&smp);
                        points += 1;
                    }
                }
            }
            Ok((acc, points))
        })
        .collect();
    let mut value = 0.0;
    let mut points = 0;
    for p in parts {
        let (v, n) = p?;
        value += v;
        points += n;
    }
    Ok(RegionIntegral {
        value,
        empty: points == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, curve, CurveKind, DumbbellSpec, Resolution};
    use std::f64::consts::PI;

    fn mesh(eps: f64) -> Arc<MeridianMesh> {
        let mut spec = DumbbellSpec::new(3, eps);
        spec.resolution = Resolution::tiny();
        spec.r_left = 8.0;
        spec.r_right = 8.0;
        Arc::new(build_mesh(&spec).unwrap())
    }

    #[test]
    fn corridor_energy_of_linear_field() {
        let m = mesh(0.1);
        let u = DiscreteField::from_fn(m.clone(), |z, _| z);
        let e = region_integral(&m, &u, &RegionDescriptor::of(&[Region::Corridor]), |s| {
            s.grad2()
        })
        .unwrap();
        assert!((e.value - PI * 0.01).abs() < 1e-4);
    }

    #[test]
    fn stiffness_annihilates_constants_and_is_symmetric() {
        let m = mesh(0.1);
        let k = stiffness(&m);
        let ones = vec![1.0; m.n_vertices()];
        assert!(k.form(&ones).abs() < 1e-9);
        assert!(k.full.symmetry_defect() < 1e-12);
    }

    #[test]
    fn corridor_mass_is_cylinder_volume() {
        let m = mesh(0.1);
        let mass =
            weighted_mass(&m, &|z, _| if (0.0..=1.0).contains(&z) { 1.0 } else { 0.0 }).unwrap();
        // Only the corridor triangles have all quadrature points in 0 ≤ z ≤ 1.
        let ones = vec![1.0; m.n_vertices()];
        assert!((mass.form(&ones) - PI * 0.01).abs() < 1e-10);
        assert!(weighted_mass(&m, &|_, _| -1.0).is_err());
    }

    #[test]
    fn curve_measures() {
        let m = mesh(0.1);
        let one = Analytic(|_: f64, _: f64| (1.0, [0.0, 0.0]));
        let c = curve(&m, CurveKind::HalfSphereLeft(1.0), 16).unwrap();
        assert!((surface_integral(&one, &c, |s| s.u * s.u).unwrap() - 2.0 * PI).abs() < 1e-10);
        let c = curve(&m, CurveKind::Slice(0.5), 8).unwrap();
        assert!((surface_integral(&one, &c, |s| s.u * s.u).unwrap() - PI * 0.01).abs() < 1e-12);
    }

    #[test]
    fn cut_region_volume() {
        // Half-ball of radius 2 inside D⁻: volume 2π·8/3.
        let m = mesh(0.1);
        let one = Analytic(|_: f64, _: f64| (1.0, [0.0, 0.0]));
        let r =
            RegionDescriptor::of(&[Region::Left]).with(Constraint::InsideBall { cz: 0.0, r: 2.0 });
        let v = region_integral(&m, &one, &r, |_| 1.0).unwrap().value;
        assert!(
            (v - 16.0 * PI / 3.0).abs() / (16.0 * PI / 3.0) < 2e-2,
            "{v}"
        );
    }
}
