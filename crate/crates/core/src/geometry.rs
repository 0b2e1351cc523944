//! Meridian meshes of the axisymmetric dumbbell and of the auxiliary model domains, together
//! with the sampling curves (half-spheres and channel slices) used by the frequency quotients.
//!
//! Coordinates are (z, s) = (x₁, |x′|) with s ≥ 0. Every mesh is assembled from two kinds of
//! structured blocks that share vertices bit-exactly along their interfaces:
//! polar blocks centred on the origin or on e₁, and tensor-product rectangles.

use crate::quadrature::{composite_gauss, sphere_measure};
use crate::Error;
use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

pub const TAG_AXIS: u16 = 1;
pub const TAG_WALL: u16 = 2;
pub const TAG_OUTER_LEFT: u16 = 4;
pub const TAG_OUTER_RIGHT: u16 = 8;
pub const TAG_TUBE_WALL: u16 = 16;
pub const TAG_FAR_TUBE: u16 = 32;
pub const TAG_SIGMA: u16 = 64;
pub const TAG_GAMMA: u16 = 128;

const DIRICHLET_TAGS: u16 =
    TAG_WALL | TAG_OUTER_LEFT | TAG_OUTER_RIGHT | TAG_TUBE_WALL | TAG_FAR_TUBE;

const TAG_NAMES: [(u16, &str); 8] = [
    (TAG_AXIS, "axis"),
    (TAG_WALL, "wall"),
    (TAG_OUTER_LEFT, "outer_left"),
    (TAG_OUTER_RIGHT, "outer_right"),
    (TAG_TUBE_WALL, "tube_wall"),
    (TAG_FAR_TUBE, "far_tube"),
    (TAG_SIGMA, "sigma"),
    (TAG_GAMMA, "gamma"),
];

/// Region tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Left,
    Corridor,
    Right,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Left => "left",
            Region::Corridor => "corridor",
            Region::Right => "right",
        }
    }
}

/// Which domain a mesh discretizes.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshKind {
    Dumbbell {
        eps: f64,
        r_left: f64,
        r_right: f64,
    },
    HalfSpacePlus {
        r_right: f64,
    },
    HalfSpaceMinus {
        r_left: f64,
    },
    /// Tube T₁ ∩ {x₁ > −L} joined at x₁ = 1 to D⁺ ∩ B(e₁, R).
    Model {
        tube_length: f64,
        radius: f64,
    },
    /// D⁻ ∩ {inner < |x| < outer}.
    Exterior {
        inner: f64,
        outer: f64,
    },
    /// D⁻ ∩ B(0, radius).
    HalfBall {
        radius: f64,
    },
    /// Cylinder {z0 < z < z1, s < radius} with Dirichlet on the lateral wall and both ends.
    Cylinder {
        z0: f64,
        z1: f64,
        radius: f64,
    },
}

/// Mesh resolution controls. Scaling by a factor f refines every length by 1/f.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// Angular cells of a polar block over the quarter plane, before wall refinement.
    pub angular_cells: usize,
    /// Minimum edge at a junction circle is (junction radius)/junction_cells.
    pub junction_cells: usize,
    /// Bulk channel cells per channel radius along x₁.
    pub corridor_cells: usize,
    /// Target edge length in the weight's support and beyond.
    pub h_far: f64,
    /// Edge length along the model tube.
    pub tube_h: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            angular_cells: 24,
            junction_cells: 8,
            corridor_cells: 6,
            h_far: 0.35,
            tube_h: 0.1,
        }
    }
}

impl Resolution {
    pub fn tiny() -> Self {
        Self {
            angular_cells: 12,
            junction_cells: 4,
            corridor_cells: 3,
            h_far: 0.7,
            tube_h: 0.2,
        }
    }

    pub fn fine() -> Self {
        Self::default().scaled(2.0)
    }

    /// All mesh lengths divided by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let up = |n: usize| ((n as f64 * factor).round() as usize).max(2);
        Self {
            angular_cells: up(self.angular_cells),
            junction_cells: up(self.junction_cells),
            corridor_cells: up(self.corridor_cells),
            h_far: self.h_far / factor,
            tube_h: self.tube_h / factor,
        }
    }
}

/// Full experiment geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DumbbellSpec {
    pub dim: usize,
    pub eps: f64,
    pub r_left: f64,
    pub r_right: f64,
    pub grading_ratio: f64,
    pub resolution: Resolution,
    /// Further junction radii refined exactly like `eps`; listing the whole ε ladder here keeps
    /// the half-space parts of the meshes identical across the ladder.
    pub extra_radii: Vec<f64>,
}

impl DumbbellSpec {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            dim,
            eps,
            r_left: 32.0,
            r_right: 12.0,
            grading_ratio: 0.7,
            resolution: Resolution::default(),
            extra_radii: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.dim < 3 {
            return Err(Error::InvalidInput(format!("dimension {} < 3", self.dim)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidInput(format!(
                "eps = {} must lie in (0, 0.5)",
                self.eps
            )));
        }
        if self.r_left < 8.0 || self.r_right < 8.0 {
            return Err(Error::InvalidInput(
                "truncation radii must be at least 8".into(),
            ));
        }
        if !(self.grading_ratio > 0.0 && self.grading_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "grading ratio {} must lie in (0, 1)",
                self.grading_ratio
            )));
        }
        if self.extra_radii.iter().any(|&r| !(r > 0.0 && r < 0.5)) {
            return Err(Error::InvalidInput(
                "extra junction radii must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }

    fn junction_radii(&self) -> Vec<f64> {
        let mut radii = self.extra_radii.clone();
        radii.push(self.eps);
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        radii
    }

    fn growth(&self) -> f64 {
        1.0 / self.grading_ratio - 1.0
    }

    fn radial_nodes(&self, r_max: f64) -> Vec<f64> {
        let radii = self.junction_radii();
        let res = &self.resolution;
        let rho_min = radii[0];
        let growth = self.growth();
        let rel = relative_step(self.grading_ratio, res.angular_cells);
        let sizing = RadialSizing {
            rel,
            h_center: rho_min / res.junction_cells as f64,
            junctions: radii
                .iter()
                .map(|&r| (r, r / res.junction_cells as f64))
                .collect(),
            growth,
            h_far: res.h_far,
            far_start: 8.0,
        };
        let mut fixed = radii.clone();
        fixed.push(self.r_left.min(self.r_right));
        fixed.push(self.r_left.max(self.r_right));
        fixed.retain(|&r| r <= r_max + 1e-12);
        mesh_1d(0.0, r_max, &fixed, &|r| sizing.size(r))
    }

    fn angular_nodes(&self) -> Vec<f64> {
        angular_nodes(self.resolution.angular_cells, self.growth())
    }
}

fn relative_step(grading_ratio: f64, angular_cells: usize) -> f64 {
    let dtheta = FRAC_PI_2 / angular_cells as f64;
    (1.0 / grading_ratio - 1.0).min(1.6 * dtheta)
}

fn angular_nodes(cells: usize, growth: f64) -> Vec<f64> {
    let dtheta = FRAC_PI_2 / cells as f64;
    let mut nodes = mesh_1d(0.0, FRAC_PI_2, &[], &|t| {
        dtheta.min(0.25 * dtheta + growth * (FRAC_PI_2 - t))
    });
    *nodes.last_mut().unwrap() = FRAC_PI_2;
    nodes
}

struct RadialSizing {
    rel: f64,
    h_center: f64,
    junctions: Vec<(f64, f64)>,
    growth: f64,
    h_far: f64,
    far_start: f64,
}

impl RadialSizing {
    fn size(&self, r: f64) -> f64 {
        let mut h = (self.rel * r).max(self.h_center);
        h = h.min(self.h_far + 0.2 * (r - self.far_start).max(0.0));
        for &(rho, hj) in &self.junctions {
            h = h.min(hj + self.growth * (r - rho).abs());
        }
        h
    }
}

/// Nodes on [a, b] following the size function `h`, containing every fixed point exactly.
pub fn mesh_1d(a: f64, b: f64, fixed: &[f64], h: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut breaks: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = fixed.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for x in inner {
        if x - breaks.last().unwrap() > 1e-14 {
            breaks.push(x);
        }
    }
    if b - breaks.last().unwrap() > 1e-14 {
        breaks.push(b);
    } else {
        *breaks.last_mut().unwrap() = b;
    }
    let mut nodes = vec![a];
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // March a fine pre-grid and accumulate ∫ dx/h.
        let mut xs = vec![lo];
        let mut cum = vec![0.0];
        let mut x = lo;
        while x < hi {
            let step = (h(x) / 24.0).min(hi - x).max((hi - lo) * 1e-9);
            let xn = (x + step).min(hi);
            let mid = 0.5 * (x + xn);
            let inc = (xn - x) * (1.0 / h(x) + 4.0 / h(mid) + 1.0 / h(xn)) / 6.0;
            cum.push(cum.last().unwrap() + inc);
            xs.push(xn);
            x = xn;
        }
        let total = *cum.last().unwrap();
        let n = (total - 1e-9).ceil().max(1.0) as usize;
        let mut k = 0usize;
        for i in 1..n {
            let target = total * i as f64 / n as f64;
            while cum[k + 1] < target {
                k += 1;
            }
            let t = (target - cum[k]) / (cum[k + 1] - cum[k]);
            nodes.push(xs[k] + t * (xs[k + 1] - xs[k]));
        }
        nodes.push(hi);
    }
    nodes
}

/// Node-and-triangle accumulator with bit-exact vertex sharing.
struct MeshBuilder {
    vertices: Vec<[f64; 2]>,
    tags: Vec<u16>,
    index: HashMap<(u64, u64), usize>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
}

fn key(z: f64, s: f64) -> (u64, u64) {
    let norm = |x: f64| {
        if x == 0.0 {
            0.0f64.to_bits()
        } else {
            x.to_bits()
        }
    };
    (norm(z), norm(s))
}

impl MeshBuilder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            tags: Vec::new(),
            index: HashMap::new(),
            triangles: Vec::new(),
            regions: Vec::new(),
        }
    }

    fn vertex(&mut self, z: f64, s: f64, tag: u16) -> usize {
        let k = key(z, s);
        if let Some(&i) = self.index.get(&k) {
            self.tags[i] |= tag;
            return i;
        }
        let i = self.vertices.len();
        self.vertices.push([z, s]);
        self.tags.push(tag);
        self.index.insert(k, i);
        i
    }

    fn triangle(&mut self, a: usize, b: usize, c: usize, region: Region) {
        let [za, sa] = self.vertices[a];
        let [zb, sb] = self.vertices[b];
        let [zc, sc] = self.vertices[c];
        let area2 = (zb - za) * (sc - sa) - (zc - za) * (sb - sa);
        if area2 > 0.0 {
            self.triangles.push([a, b, c]);
        } else {
            self.triangles.push([a, c, b]);
        }
        self.regions.push(region);
    }

    /// Polar block around (cz, 0). `dir` = −1 opens toward z < cz, +1 toward z > cz.
    /// `radial[0]` may be zero (fan at the centre). `ray_tag(r)` tags vertices on the wall ray
    /// θ = π/2; the outer ring gets `outer_tag`, the inner ring (if r₀ > 0) `inner_tag`.
    #[allow(clippy::too_many_arguments)]
    fn polar_block(
        &mut self,
        cz: f64,
        dir: f64,
        radial: &[f64],
        angular: &[f64],
        region: Region,
        ray_tag: &dyn Fn(f64) -> u16,
        outer_tag: u16,
        inner_tag: u16,
    ) {
        let nr = radial.len();
        let na = angular.len();
        let mut ids = vec![vec![usize::MAX; na]; nr];
        let with_center = radial[0] == 0.0;
        let center = if with_center {
            Some(self.vertex(cz, 0.0, TAG_AXIS | ray_tag(0.0)))
        } else {
            None
        };
        for (i, &r) in radial.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for (j, &th) in angular.iter().enumerate() {
                let (z, s) = if j == 0 {
                    (cz + dir * r, 0.0)
                } else if j == na - 1 {
                    (cz, r)
                } else {
                    (cz + dir * r * th.cos(), r * th.sin())
                };
                let mut tag = 0;
                if j == 0 {
                    tag |= TAG_AXIS;
                }
                if j == na - 1 {
                    tag |= ray_tag(r);
                }
                if i == nr - 1 {
                    tag |= outer_tag;
                }
                if i == 0 {
                    tag |= inner_tag;
                }
                ids[i][j] = self.vertex(z, s, tag);
            }
        }
        let i0 = if with_center { 1 } else { 0 };
        if let Some(c) = center {
            for j in 0..na - 1 {
                self.triangle(c, ids[1][j], ids[1][j + 1], region);
            }
        }
        for i in i0..nr - 1 {
            for j in 0..na - 1 {
                let a = ids[i][j];
                let b = ids[i + 1][j];
                let c = ids[i + 1][j + 1];
                let d = ids[i][j + 1];
                let dist = |p: usize, q: usize| {
                    let [z1, s1] = self.vertices[p];
                    let [z2, s2] = self.vertices[q];
                    (z1 - z2).hypot(s1 - s2)
                };
                if dist(a, c) <= dist(b, d) {
                    self.triangle(a, b, c, region);
                    self.triangle(a, c, d, region);
                } else {
                    self.triangle(a, b, d, region);
                    self.triangle(b, c, d, region);
                }
            }
        }
    }

    /// Tensor rectangle with a uniform diagonal direction; `tag(z, s, iz, is)` tags vertices.
    fn rect_block(
        &mut self,
        zs: &[f64],
        ss: &[f64],
        region: Region,
        tag: &dyn Fn(usize, usize) -> u16,
    ) {
        let mut ids = vec![vec![0usize; ss.len()]; zs.len()];
        for (i, &z) in zs.iter().enumerate() {
            for (j, &s) in ss.iter().enumerate() {
                ids[i][j] = self.vertex(z, s, tag(i, j));
            }
        }
        for i in 0..zs.len() - 1 {
            for j in 0..ss.len() - 1 {
                self.triangle(ids[i][j], ids[i + 1][j], ids[i + 1][j + 1], region);
                self.triangle(ids[i][j], ids[i + 1][j + 1], ids[i][j + 1], region);
            }
        }
    }

    fn finish(self, dim: usize, kind: MeshKind) -> MeridianMesh {
        MeridianMesh::from_parts(
            dim,
            kind,
            self.vertices,
            self.triangles,
            self.regions,
            self.tags,
        )
    }
}

/// Triangulated meridian half-plane domain with region and boundary tags.
#[derive(Debug, Clone)]
pub struct MeridianMesh {
    pub dim: usize,
    pub kind: MeshKind,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub tags: Vec<u16>,
    pub dirichlet: Vec<bool>,
    /// s^{N−2} per vertex.
    pub axis_weight: Vec<f64>,
    locator: Bvh,
}

impl MeridianMesh {
    fn from_parts(
        dim: usize,
        kind: MeshKind,
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        tags: Vec<u16>,
    ) -> Self {
        let dirichlet = tags.iter().map(|t| t & DIRICHLET_TAGS != 0).collect();
        let axis_weight = vertices.iter().map(|v| v[1].powi(dim as i32 - 2)).collect();
        let locator = Bvh::build(&vertices, &triangles);
        Self {
            dim,
            kind,
            vertices,
            triangles,
            regions,
            tags,
            dirichlet,
            axis_weight,
            locator,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&i| !self.dirichlet[i])
            .collect()
    }

    pub fn eps(&self) -> Option<f64> {
        match self.kind {
            MeshKind::Dumbbell { eps, .. } => Some(eps),
            _ => None,
        }
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let [za, sa] = self.vertices[a];
        let [zb, sb] = self.vertices[b];
        let [zc, sc] = self.vertices[c];
        0.5 * ((zb - za) * (sc - sa) - (zc - za) * (sb - sa))
    }

    /// Meridian area of the triangles with the given region tag.
    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Locates the triangle containing (z, s); returns it with barycentric coordinates.
    pub fn locate(&self, z: f64, s: f64) -> Option<(usize, [f64; 3])> {
        self.locator.locate(&self.vertices, &self.triangles, z, s)
    }

    /// Minimum edge length among edges touching a vertex within distance `radius` of (z, s).
    pub fn min_edge_near(&self, z: f64, s: f64, radius: f64) -> f64 {
        let mut best = f64::INFINITY;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let q = self.vertices[tri[(k + 1) % 3]];
                if (p[0] - z).hypot(p[1] - s) <= radius || (q[0] - z).hypot(q[1] - s) <= radius {
                    best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
                }
            }
        }
        best
    }

    /// Plain-text dump: `vertex z s`, `tri i j k region`, `bnd i tag` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# meridian mesh: dim {} vertices {} triangles {}",
            self.dim,
            self.vertices.len(),
            self.triangles.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "vertex {:.17e} {:.17e}", v[0], v[1]);
        }
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(out, "tri {} {} {} {}", t[0], t[1], t[2], r.name());
        }
        for (i, &tag) in self.tags.iter().enumerate() {
            for (bit, name) in TAG_NAMES {
                if tag & bit != 0 {
                    let _ = writeln!(out, "bnd {i} {name}");
                }
            }
        }
        out
    }
}

/// Conforming mesh of the truncated dumbbell meridian.
pub fn build_mesh(spec: &DumbbellSpec) -> Result<MeridianMesh, Error> {
    spec.validate()?;
    let eps = spec.eps;
    let radial_all = spec.radial_nodes(spec.r_left.max(spec.r_right));
    let angular = spec.angular_nodes();
    let left: Vec<f64> = radial_all
        .iter()
        .copied()
        .filter(|&r| r <= spec.r_left)
        .collect();
    let right: Vec<f64> = radial_all
        .iter()
        .copied()
        .filter(|&r| r <= spec.r_right)
        .collect();
    let s_nodes: Vec<f64> = radial_all.iter().copied().filter(|&r| r <= eps).collect();
    let res = &spec.resolution;
    let h_end = s_nodes
        .windows(2)
        .last()
        .map(|w| w[1] - w[0])
        .unwrap_or(eps / res.junction_cells as f64);
    let h_bulk = eps / res.corridor_cells as f64;
    let growth = spec.growth();
    let z_nodes = mesh_1d(0.0, 1.0, &[], &|z| {
        h_bulk.min(h_end + growth * z.min(1.0 - z))
    });

    let wall_from_eps = move |r: f64| if r >= eps { TAG_WALL } else { 0 };
    let mut b = MeshBuilder::new();
    b.polar_block(
        0.0,
        -1.0,
        &left,
        &angular,
        Region::Left,
        &wall_from_eps,
        TAG_OUTER_LEFT,
        0,
    );
    b.polar_block(
        1.0,
        1.0,
        &right,
        &angular,
        Region::Right,
        &wall_from_eps,
        TAG_OUTER_RIGHT,
        0,
    );
    let ns = s_nodes.len();
    b.rect_block(&z_nodes, &s_nodes, Region::Corridor, &|_, j| {
        let mut t = 0;
        if j == 0 {
            t |= TAG_AXIS;
        }
        if j == ns - 1 {
            t |= TAG_WALL;
        }
        t
    });
    Ok(b.finish(
        spec.dim,
        MeshKind::Dumbbell {
            eps,
            r_left: spec.r_left,
            r_right: spec.r_right,
        },
    ))
}

/// Mesh of the truncated half-space D⁺ (plus = true) or D⁻, identical to the corresponding
/// block of `build_mesh(spec)` with the channel opening closed.
pub fn build_half_space(spec: &DumbbellSpec, plus: bool) -> Result<MeridianMesh, Error> {
    spec.validate()?;
    let radius = if plus { spec.r_right } else { spec.r_left };
    let radial_all = spec.radial_nodes(spec.r_left.max(spec.r_right));
    let radial: Vec<f64> = radial_all.into_iter().filter(|&r| r <= radius).collect();
    let angular = spec.angular_nodes();
    let mut b = MeshBuilder::new();
    let wall = |_: f64| TAG_WALL;
    if plus {
        b.polar_block(
            1.0,
            1.0,
            &radial,
            &angular,
            Region::Right,
            &wall,
            TAG_OUTER_RIGHT,
            0,
        );
        Ok(b.finish(spec.dim, MeshKind::HalfSpacePlus { r_right: radius }))
    } else {
        b.polar_block(
            0.0,
            -1.0,
            &radial,
            &angular,
            Region::Left,
            &wall,
            TAG_OUTER_LEFT,
            0,
        );
        Ok(b.finish(spec.dim, MeshKind::HalfSpaceMinus { r_left: radius }))
    }
}

/// Parameters of the junction model domain D̃ = D⁺ ∪ T₁⁻ (tube radius 1, junction at x₁ = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub dim: usize,
    pub tube_length: f64,
    pub radius: f64,
    pub grading_ratio: f64,
    pub resolution: Resolution,
}

impl ModelSpec {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tube_length: 12.0,
            radius: 40.0,
            grading_ratio: 0.7,
            resolution: Resolution::default(),
        }
    }
}

/// Meridian mesh of (T₁ ∩ {x₁ > −L}) ∪ (D⁺ ∩ B(e₁, R)). The tube part is a uniform tensor grid
/// in x₁, so tube modes separate exactly at the discrete level.
pub fn build_model_mesh(spec: &ModelSpec) -> Result<MeridianMesh, Error> {
    if spec.tube_length <= 1.0 || spec.radius < 8.0 {
        return Err(Error::InvalidInput(
            "model domain needs tube length > 1 and radius ≥ 8".into(),
        ));
    }
    let res = &spec.resolution;
    let growth = 1.0 / spec.grading_ratio - 1.0;
    let rel = relative_step(spec.grading_ratio, res.angular_cells);
    let hj = 1.0 / res.junction_cells as f64;
    let sizing = RadialSizing {
        rel,
        h_center: res.tube_h,
        junctions: vec![(1.0, 0.5 * hj)],
        growth,
        h_far: res.h_far.max(res.tube_h),
        far_start: 8.0,
    };
    let radial = mesh_1d(0.0, spec.radius, &[1.0], &|r| sizing.size(r));
    let angular = angular_nodes(res.angular_cells, growth);
    let s_nodes: Vec<f64> = radial.iter().copied().filter(|&r| r <= 1.0).collect();
    // Columns are laid out from the junction leftward so that tubes of different lengths with
    // the same spacing share their columns near the junction.
    let length = spec.tube_length + 1.0;
    let nz = (length / res.tube_h).round().max(1.0) as usize;
    let hz = length / nz as f64;
    let mut z_nodes: Vec<f64> = (0..=nz).map(|i| 1.0 - (nz - i) as f64 * hz).collect();
    z_nodes[0] = -spec.tube_length;

    let mut b = MeshBuilder::new();
    let ray = |r: f64| if r >= 1.0 { TAG_WALL } else { TAG_SIGMA };
    b.polar_block(
        1.0,
        1.0,
        &radial,
        &angular,
        Region::Right,
        &ray,
        TAG_OUTER_RIGHT,
        0,
    );
    let ns = s_nodes.len();
    let nzl = z_nodes.len();
    b.rect_block(&z_nodes, &s_nodes, Region::Corridor, &|i, j| {
        let mut t = 0;
        if j == 0 {
            t |= TAG_AXIS;
        }
        if j == ns - 1 {
            t |= TAG_TUBE_WALL;
        }
        if i == 0 {
            t |= TAG_FAR_TUBE;
        }
        if i == nzl - 1 && j < ns - 1 {
            t |= TAG_SIGMA;
        }
        t
    });
    Ok(b.finish(
        spec.dim,
        MeshKind::Model {
            tube_length: spec.tube_length,
            radius: spec.radius,
        },
    ))
}

/// Mesh of D⁻ ∩ {inner < |x| < outer} with the inner half-sphere free (tag gamma).
pub fn build_exterior_mesh(
    dim: usize,
    inner: f64,
    outer: f64,
    res: &Resolution,
) -> Result<MeridianMesh, Error> {
    if !(inner > 0.0 && outer > inner) {
        return Err(Error::InvalidInput(
            "exterior mesh needs 0 < inner < outer".into(),
        ));
    }
    let growth = 1.0 / 0.7 - 1.0;
    let rel = relative_step(0.7, res.angular_cells);
    let radial = mesh_1d(inner, outer, &[], &|r| {
        (rel * r).min(res.h_far * (r / inner).max(1.0))
    });
    let angular = angular_nodes(res.angular_cells, growth);
    let mut b = MeshBuilder::new();
    b.polar_block(
        0.0,
        -1.0,
        &radial,
        &angular,
        Region::Left,
        &|_| TAG_WALL,
        TAG_OUTER_LEFT,
        TAG_GAMMA,
    );
    Ok(b.finish(dim, MeshKind::Exterior { inner, outer }))
}

/// Mesh of the half-ball D⁻ ∩ B(0, radius); the spherical part is tagged gamma and left free.
pub fn build_half_ball_mesh(
    dim: usize,
    radius: f64,
    res: &Resolution,
) -> Result<MeridianMesh, Error> {
    if radius <= 0.0 {
        return Err(Error::InvalidInput(
            "half-ball radius must be positive".into(),
        ));
    }
    let growth = 1.0 / 0.7 - 1.0;
    let rel = relative_step(0.7, res.angular_cells);
    let h_c = radius * rel;
    let radial = mesh_1d(0.0, radius, &[], &|r| (rel * r).max(h_c));
    let angular = angular_nodes(res.angular_cells, growth);
    let mut b = MeshBuilder::new();
    b.polar_block(
        0.0,
        -1.0,
        &radial,
        &angular,
        Region::Left,
        &|_| TAG_WALL,
        TAG_GAMMA,
        0,
    );
    Ok(b.finish(dim, MeshKind::HalfBall { radius }))
}

/// Uniform mesh of the cylinder {z0 < z < z1, s < radius} with Dirichlet lateral wall and ends.
pub fn build_cylinder_mesh(
    dim: usize,
    z0: f64,
    z1: f64,
    radius: f64,
    nz: usize,
    ns: usize,
) -> Result<MeridianMesh, Error> {
    if !(z1 > z0 && radius > 0.0 && nz >= 1 && ns >= 1) {
        return Err(Error::InvalidInput("degenerate cylinder".into()));
    }
    let zs: Vec<f64> = (0..=nz)
        .map(|i| z0 + (z1 - z0) * i as f64 / nz as f64)
        .collect();
    let ss: Vec<f64> = (0..=ns).map(|j| radius * j as f64 / ns as f64).collect();
    let mut b = MeshBuilder::new();
    b.rect_block(&zs, &ss, Region::Corridor, &|i, j| {
        let mut t = 0;
        if j == 0 {
            t |= TAG_AXIS;
        }
        if j == ns {
            t |= TAG_TUBE_WALL;
        }
        if i == 0 || i == nz {
            t |= TAG_FAR_TUBE;
        }
        t
    });
    Ok(b.finish(dim, MeshKind::Cylinder { z0, z1, radius }))
}

/// Bounding-volume hierarchy over triangles for point location.
#[derive(Debug, Clone)]
struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: [f64; 2],
    hi: [f64; 2],
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

impl Bvh {
    fn build(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> Self {
        let boxes: Vec<([f64; 2], [f64; 2])> = triangles
            .iter()
            .map(|t| {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for &v in t {
                    for d in 0..2 {
                        lo[d] = lo[d].min(vertices[v][d]);
                        hi[d] = hi[d].max(vertices[v][d]);
                    }
                }
                (lo, hi)
            })
            .collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            Self::split(&boxes, &mut order, 0, triangles.len(), &mut nodes);
        }
        Self { nodes, order }
    }

    fn split(
        boxes: &[([f64; 2], [f64; 2])],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> usize {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &t in &order[start..end] {
            for d in 0..2 {
                lo[d] = lo[d].min(boxes[t].0[d]);
                hi[d] = hi[d].max(boxes[t].1[d]);
            }
        }
        let id = nodes.len();
        nodes.push(BvhNode {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > 4 {
            let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
            let centre = |t: usize| boxes[t].0[axis] + boxes[t].1[axis];
            order[start..end].sort_by(|&a, &b| centre(a).partial_cmp(&centre(b)).unwrap());
            let mid = (start + end) / 2;
            let l = Self::split(boxes, order, start, mid, nodes);
            let r = Self::split(boxes, order, mid, end, nodes);
            nodes[id].children = Some((l, r));
        }
        id
    }

    fn locate(
        &self,
        vertices: &[[f64; 2]],
        triangles: &[[usize; 3]],
        z: f64,
        s: f64,
    ) -> Option<(usize, [f64; 3])> {
        if self.nodes.is_empty() {
            return None;
        }
        let tol_box = 1e-12 * (1.0 + z.abs() + s.abs());
        let mut stack = vec![0usize];
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if z < node.lo[0] - tol_box
                || z > node.hi[0] + tol_box
                || s < node.lo[1] - tol_box
                || s > node.hi[1] + tol_box
            {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &t in &self.order[node.start..node.end] {
                        let bary = barycentric(vertices, triangles[t], z, s);
                        let m = bary[0].min(bary[1]).min(bary[2]);
                        if m >= -1e-9 && best.as_ref().map_or(true, |b| m > b.2) {
                            best = Some((t, bary, m));
                            if m >= 0.0 {
                                return Some((t, bary));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(t, b, _)| (t, b))
    }
}

fn barycentric(vertices: &[[f64; 2]], tri: [usize; 3], z: f64, s: f64) -> [f64; 3] {
    let [za, sa] = vertices[tri[0]];
    let [zb, sb] = vertices[tri[1]];
    let [zc, sc] = vertices[tri[2]];
    let det = (zb - za) * (sc - sa) - (zc - za) * (sb - sa);
    let l1 = ((z - za) * (sc - sa) - (zc - za) * (s - sa)) / det;
    let l2 = ((zb - za) * (s - sa) - (z - za) * (sb - sa)) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Kinds of sampling curves in the meridian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurveKind {
    /// {|x| = t, x₁ < 0}.
    HalfSphereLeft(f64),
    /// {x₁ = r, |x′| < eps}.
    Slice(f64),
    /// {|x − e₁| = t, x₁ > 1}.
    HalfSphereRight(f64),
    /// Slice {x₁ = r, |x′| < width} of a tube of the given width.
    TubeSlice { r: f64, width: f64 },
    /// Flat wall piece {x₁ = z, s_from ≤ |x′| ≤ s_to}, normal e₁.
    Wall { z: f64, s_from: f64, s_to: f64 },
}

/// Quadrature node on a sampling curve: position, unit normal ν and surface weight.
#[derive(Debug, Clone, Copy)]
pub struct CurveNode {
    pub z: f64,
    pub s: f64,
    pub nz: f64,
    pub ns: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SamplingCurve {
    pub kind: CurveKind,
    pub nodes: Vec<CurveNode>,
}

/// Builds the quadrature nodes of a sampling curve with `quad_order` three-point Gauss panels.
/// Weights carry the axisymmetric surface factor ω_{N−2} s^{N−2}.
pub fn curve(
    mesh: &MeridianMesh,
    kind: CurveKind,
    quad_order: usize,
) -> Result<SamplingCurve, Error> {
    validate_curve(mesh, kind)?;
    Ok(curve_nodes(
        mesh.dim,
        kind,
        mesh.eps().unwrap_or(f64::NAN),
        quad_order,
    ))
}

/// Same as [`curve`] without a mesh, for analytic fields; channel slices take radius `eps`.
pub fn curve_unchecked(dim: usize, kind: CurveKind, eps: f64, quad_order: usize) -> SamplingCurve {
    curve_nodes(dim, kind, eps, quad_order)
}

fn curve_nodes(dim: usize, kind: CurveKind, eps: f64, quad_order: usize) -> SamplingCurve {
    let omega = sphere_measure(dim - 2);
    let m = dim as i32 - 2;
    let panels = quad_order.max(1);
    let mut nodes = Vec::new();
    match kind {
        CurveKind::HalfSphereLeft(t) | CurveKind::HalfSphereRight(t) => {
            let (cz, dir) = if matches!(kind, CurveKind::HalfSphereLeft(_)) {
                (0.0, -1.0)
            } else {
                (1.0, 1.0)
            };
            for (phi, w) in composite_gauss(0.0, FRAC_PI_2, panels, 3) {
                let nz = dir * phi.cos();
                let ns = phi.sin();
                let s = t * ns;
                nodes.push(CurveNode {
                    z: cz + t * nz,
                    s,
                    nz,
                    ns,
                    weight: omega * s.powi(m) * t * w,
                });
            }
        }
        CurveKind::Slice(_) | CurveKind::TubeSlice { .. } | CurveKind::Wall { .. } => {
            let (z, a, b) = match kind {
                CurveKind::Slice(r) => (r, 0.0, eps),
                CurveKind::TubeSlice { r, width } => (r, 0.0, width),
                CurveKind::Wall { z, s_from, s_to } => (z, s_from, s_to),
                _ => unreachable!(),
            };
            for (s, w) in composite_gauss(a, b, panels, 3) {
                nodes.push(CurveNode {
                    z,
                    s,
                    nz: 1.0,
                    ns: 0.0,
                    weight: omega * s.powi(m) * w,
                });
            }
        }
    }
    SamplingCurve { kind, nodes }
}

fn validate_curve(mesh: &MeridianMesh, kind: CurveKind) -> Result<(), Error> {
    let bad = |msg: String| Err(Error::OutsideDomain(msg));
    match (kind, &mesh.kind) {
        (CurveKind::Slice(r), MeshKind::Dumbbell { .. }) => {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("slice at x1 = {r} outside the channel"));
            }
        }
        (CurveKind::Slice(_), _) => return bad("channel slices need a dumbbell mesh".into()),
        (
            CurveKind::HalfSphereLeft(t),
            MeshKind::Dumbbell { r_left, .. } | MeshKind::HalfSpaceMinus { r_left },
        ) => {
            if !(t > 0.0 && t < *r_left) {
                return bad(format!("left half-sphere radius {t} outside (0, {r_left})"));
            }
        }
        (CurveKind::HalfSphereLeft(t), MeshKind::Exterior { inner, outer }) => {
            if !(t >= *inner && t < *outer) {
                return bad(format!("half-sphere radius {t} outside [{inner}, {outer})"));
            }
        }
        (CurveKind::HalfSphereLeft(t), MeshKind::HalfBall { radius }) => {
            if !(t > 0.0 && t <= *radius) {
                return bad(format!("half-sphere radius {t} outside (0, {radius}]"));
            }
        }
        (
            CurveKind::HalfSphereRight(t),
            MeshKind::Dumbbell { r_right, .. } | MeshKind::HalfSpacePlus { r_right },
        ) => {
            if !(t > 0.0 && t < *r_right) {
                return bad(format!(
                    "right half-sphere radius {t} outside (0, {r_right})"
                ));
            }
        }
        (CurveKind::HalfSphereRight(t), MeshKind::Model { radius, .. }) => {
            if !(t > 0.0 && t < *radius) {
                return bad(format!(
                    "right half-sphere radius {t} outside (0, {radius})"
                ));
            }
        }
        (CurveKind::TubeSlice { r, width }, MeshKind::Model { tube_length, .. }) => {
            if !(r >= -tube_length && r <= 1.0 && (width - 1.0).abs() < 1e-12) {
                return bad(format!("tube slice at {r} outside the model tube"));
            }
        }
        (CurveKind::TubeSlice { r, width }, MeshKind::Cylinder { z0, z1, radius }) => {
            if !(r >= *z0 && r <= *z1 && (width - radius).abs() < 1e-12) {
                return bad(format!("tube slice at {r} outside the cylinder"));
            }
        }
        (CurveKind::Wall { .. }, _) => {}
        (k, m) => return bad(format!("curve {k:?} not defined on mesh {m:?}")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(eps: f64) -> DumbbellSpec {
        let mut spec = DumbbellSpec::new(3, eps);
        spec.resolution = Resolution::tiny();
        spec.r_left = 8.0;
        spec.r_right = 8.0;
        spec
    }

    #[test]
    fn mesh_1d_contains_fixed_points_and_is_increasing() {
        let nodes = mesh_1d(0.0, 10.0, &[0.1, 3.0], &|x| 0.05 + 0.2 * x);
        assert!(nodes.contains(&0.1) && nodes.contains(&3.0));
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*nodes.last().unwrap(), 10.0);
    }

    #[test]
    fn dumbbell_regions_and_tags() {
        let spec = small_spec(0.1);
        let mesh = build_mesh(&spec).unwrap();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            assert!(mesh.triangle_area(t) > 0.0);
            if mesh.regions[t] == Region::Corridor {
                for &v in tri {
                    let [z, s] = mesh.vertices[v];
                    assert!((0.0..=1.0).contains(&z) && s <= 0.1 + 1e-15);
                }
            }
        }
        assert!((mesh.region_area(Region::Corridor) - 0.1).abs() < 1e-10);
        for (i, &tag) in mesh.tags.iter().enumerate() {
            if tag & TAG_WALL != 0 {
                let [z, s] = mesh.vertices[i];
                let on_left = z.abs() < 1e-14 && s >= 0.1 - 1e-14;
                let on_right = (z - 1.0).abs() < 1e-14 && s >= 0.1 - 1e-14;
                let on_channel = (0.0..=1.0).contains(&z) && (s - 0.1).abs() < 1e-14;
                assert!(on_left || on_right || on_channel, "wall vertex {z} {s}");
            }
        }
    }

    #[test]
    fn mesh_is_conforming() {
        // Every interior edge is shared by exactly two triangles, boundary edges by one and
        // lie on tagged boundaries or the axis.
        let mesh = build_mesh(&small_spec(0.1)).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for (&(a, b), &c) in &count {
            assert!(c <= 2);
            if c == 1 {
                assert!(
                    mesh.tags[a] != 0 && mesh.tags[b] != 0,
                    "free edge between untagged vertices"
                );
            }
        }
    }

    #[test]
    fn junction_circles_are_vertices() {
        let mesh = build_mesh(&small_spec(0.05)).unwrap();
        assert!(mesh.locate(0.0, 0.05).is_some());
        assert!(mesh.vertices.iter().any(|v| v[0] == 0.0 && v[1] == 0.05));
        assert!(mesh.vertices.iter().any(|v| v[0] == 1.0 && v[1] == 0.05));
    }

    #[test]
    fn rejects_degenerate_spec() {
        let mut spec = small_spec(0.6);
        assert!(build_mesh(&spec).is_err());
        spec.eps = 0.1;
        spec.grading_ratio = 1.2;
        assert!(build_mesh(&spec).is_err());
    }

    #[test]
    fn locate_finds_interior_points() {
        let mesh = build_mesh(&small_spec(0.1)).unwrap();
        for &(z, s) in &[(-1.0, 0.5), (0.5, 0.05), (3.0, 2.0), (1.0, 0.0)] {
            let (t, b) = mesh.locate(z, s).expect("point inside");
            let tri = mesh.triangles[t];
            let zz: f64 = (0..3).map(|k| b[k] * mesh.vertices[tri[k]][0]).sum();
            assert!((zz - z).abs() < 1e-12);
        }
        assert!(mesh.locate(0.5, 0.5).is_none());
    }

    #[test]
    fn half_sphere_right_nodes_right_of_junction() {
        let mesh = build_mesh(&small_spec(0.1)).unwrap();
        let c = curve(&mesh, CurveKind::HalfSphereRight(0.3), 16).unwrap();
        assert!(c.nodes.iter().all(|n| n.z > 1.0));
        assert!(curve(&mesh, CurveKind::Slice(1.5), 4).is_err());
    }
}
