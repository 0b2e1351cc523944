//! Generalized symmetric eigenproblems K u = λ M_p u on meridian meshes, solved by block
//! shift-invert subspace iteration with Rayleigh–Ritz, plus a dense oracle, the sign
//! normalization at e₁, branch tracking across channel widths and the decoupled limit spectra.

use crate::geometry::{build_half_space, DumbbellSpec, MeridianMesh, MeshKind, TAG_AXIS};
use crate::linalg::{
    cholesky, dot, jacobi_eigen, lower_inverse, norm2, Dense, SkylineLdlt, SparseSym,
};
use crate::operators::{stiffness, weighted_mass, DiscreteField, FieldExpr, SparseOperator};
use crate::weight_model::PWeight;
use crate::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Which problem a spectrum belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainDescriptor {
    Dumbbell { eps: f64 },
    HalfSpacePlus,
    HalfSpaceMinus,
    Other(String),
}

impl DomainDescriptor {
    fn of(mesh: &MeridianMesh) -> Self {
        match mesh.kind {
            MeshKind::Dumbbell { eps, .. } => DomainDescriptor::Dumbbell { eps },
            MeshKind::HalfSpacePlus { .. } => DomainDescriptor::HalfSpacePlus,
            MeshKind::HalfSpaceMinus { .. } => DomainDescriptor::HalfSpaceMinus,
            ref k => DomainDescriptor::Other(format!("{k:?}")),
        }
    }
}

/// Eigenvalues (ascending), M-orthonormal eigenfields and relative residuals
/// ‖K u − λ M u‖ / ‖K u‖.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenfields: Vec<DiscreteField>,
    pub residuals: Vec<f64>,
    pub domain: DomainDescriptor,
    pub iterations: usize,
}

/// Controls of the subspace iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub count: usize,
    pub tol: f64,
    pub shift: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SolveOptions {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            tol: 1e-9,
            shift: 0.0,
            max_iter: 400,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs of the reduced pencil (K, M) with eigenvectors as rows.
#[derive(Debug, Clone)]
pub struct PencilSolution {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Smallest `opts.count` finite eigenvalues of K x = λ M x (K SPD, M PSD, possibly singular)
/// above `opts.shift`'s neighbourhood, by subspace iteration on (K − σM)⁻¹M. The iterates lie
/// in the range of (K − σM)⁻¹M, which never contains components of the kernel of M.
pub fn solve_pencil(
    k: &SparseSym,
    m: &SparseSym,
    opts: &SolveOptions,
) -> Result<PencilSolution, Error> {
    let n = k.n;
    if opts.count == 0 || opts.count > n {
        return Err(Error::InvalidInput(format!(
            "cannot compute {} eigenpairs of a {n}-dof problem",
            opts.count
        )));
    }
    let shifted = if opts.shift != 0.0 {
        k.add_scaled(-opts.shift, m)
    } else {
        k.clone()
    };
    let fact = SkylineLdlt::factor(&shifted)?;
    let block = (opts.count + opts.count.max(4)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    let mut prev: Vec<f64> = vec![f64::NAN; opts.count];
    for iter in 1..=opts.max_iter {
        let y: Vec<Vec<f64>> = x.iter().map(|v| fact.solve(&m.matvec(v))).collect();
        let basis = m_orthonormalize(m, y);
        if basis.len() < opts.count {
            return Err(Error::Degenerate(format!(
                "weighted mass has rank below {} on this mesh (zero weight?)",
                opts.count
            )));
        }
        let kb: Vec<Vec<f64>> = basis.iter().map(|v| k.matvec(v)).collect();
        let r = basis.len();
        let mut kr: Dense = vec![vec![0.0; r]; r];
        for i in 0..r {
            for j in 0..=i {
                let v = dot(&basis[i], &kb[j]);
                kr[i][j] = v;
                kr[j][i] = v;
            }
        }
        let (theta, z) = jacobi_eigen(&kr)?;
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| {
            (theta[a] - opts.shift)
                .abs()
                .partial_cmp(&(theta[b] - opts.shift).abs())
                .unwrap()
        });
        let mut chosen: Vec<usize> = order[..opts.count].to_vec();
        chosen.sort_by(|&a, &b| theta[a].partial_cmp(&theta[b]).unwrap());
        let ritz: Vec<Vec<f64>> = (0..r)
            .map(|c| {
                let mut v = vec![0.0; n];
                for (i, b) in basis.iter().enumerate() {
                    let w = z[i][c];
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi += w * bi;
                    }
                }
                v
            })
            .collect();
        let values: Vec<f64> = chosen.iter().map(|&c| theta[c]).collect();
        let mut residuals = Vec::with_capacity(opts.count);
        for (&c, &lam) in chosen.iter().zip(&values) {
            let ku = k.matvec(&ritz[c]);
            let mu = m.matvec(&ritz[c]);
            let res: Vec<f64> = ku.iter().zip(&mu).map(|(a, b)| a - lam * b).collect();
            residuals.push(norm2(&res) / norm2(&ku).max(f64::MIN_POSITIVE));
        }
        let stalled = values
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs());
        if residuals.iter().all(|&r| r <= opts.tol)
            || (stalled && residuals.iter().all(|&r| r <= opts.tol.sqrt()))
        {
            let mut sol = PencilSolution {
                values,
                vectors: Vec::new(),
                residuals,
                iterations: iter,
            };
            for (slot, &c) in chosen.iter().enumerate() {
                let (v, lam, res) = polish(k, m, ritz[c].clone(), sol.values[slot]);
                sol.vectors.push(v);
                sol.values[slot] = lam;
                sol.residuals[slot] = res;
            }
            return Ok(sol);
        }
        prev = values;
        x = ritz;
    }
    Err(Error::NoConvergence(format!(
        "subspace iteration did not reach tolerance {} in {} steps",
        opts.tol, opts.max_iter
    )))
}

/// Inverse iteration at a shift just below the Ritz value. Each step damps the admixture of
/// every other eigenvector by (λ − σ)/(λ_j − σ), so components that are exponentially small in
/// the exact eigenvector (the far half-space in a dumbbell) are resolved relative to their own
/// size instead of the subspace tolerance.
const POLISH_STEPS: usize = 32;

fn polish(k: &SparseSym, m: &SparseSym, mut v: Vec<f64>, lambda: f64) -> (Vec<f64>, f64, f64) {
    let rayleigh = |v: &[f64]| -> (f64, f64, Vec<f64>) {
        let kv = k.matvec(v);
        let mv = m.matvec(v);
        let vm = dot(v, &mv);
        let lam = dot(v, &kv) / vm;
        let res: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - lam * b).collect();
        (lam, norm2(&res) / norm2(&kv).max(f64::MIN_POSITIVE), mv)
    };
    let (lam0, res0, _) = rayleigh(&v);
    let sigma = lambda * (1.0 - 1e-7);
    let Ok(fact) = SkylineLdlt::factor(&k.add_scaled(-sigma, m)) else {
        return (v, lam0, res0);
    };
    for _ in 0..POLISH_STEPS {
        let mut y = fact.solve(&m.matvec(&v));
        let nrm = dot(&y, &m.matvec(&y)).max(0.0).sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            break;
        }
        y.iter_mut().for_each(|x| *x /= nrm);
        v = y;
    }
    let (lam, res, mv) = rayleigh(&v);
    let nrm = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    (v, lam, res)
}

/// Modified Gram–Schmidt in the M inner product; drops vectors with negligible M-norm.
fn m_orthonormalize(m: &SparseSym, vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut mout: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let n0 = dot(&v, &m.matvec(&v)).max(0.0).sqrt();
        for _pass in 0..2 {
            for (q, mq) in out.iter().zip(&mout) {
                let c = dot(&v, mq);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let mv = m.matvec(&v);
        let nv = dot(&v, &mv).max(0.0).sqrt();
        if nv > 1e-10 * n0 && nv > 0.0 {
            let inv = 1.0 / nv;
            out.push(v.iter().map(|x| x * inv).collect());
            mout.push(mv.iter().map(|x| x * inv).collect());
        }
    }
    out
}

fn expand(mesh: &Arc<MeridianMesh>, free: &[usize], reduced: &[f64]) -> DiscreteField {
    let mut values = vec![0.0; mesh.n_vertices()];
    for (&i, &v) in free.iter().zip(reduced) {
        values[i] = v;
    }
    DiscreteField::new(mesh.clone(), values).expect("length matches")
}

/// Assembled stiffness and weighted mass of a mesh.
pub struct Pencil {
    pub stiffness: SparseOperator,
    pub mass: SparseOperator,
}

pub fn assemble_pencil(
    mesh: &MeridianMesh,
    p: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<Pencil, Error> {
    Ok(Pencil {
        stiffness: stiffness(mesh),
        mass: weighted_mass(mesh, p)?,
    })
}

/// The `opts.count` smallest eigenpairs of −Δu = λ p u with Dirichlet tags as constraints.
pub fn solve_weighted(
    mesh: &Arc<MeridianMesh>,
    p: &(dyn Fn(f64, f64) -> f64 + Sync),
    opts: &SolveOptions,
) -> Result<SpectralResult, Error> {
    let pencil = assemble_pencil(mesh, p)?;
    if pencil.mass.reduced.vals.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "weight vanishes on the free nodes".into(),
        ));
    }
    let sol = solve_pencil(&pencil.stiffness.reduced, &pencil.mass.reduced, opts)?;
    let eigenfields = sol
        .vectors
        .iter()
        .map(|v| expand(mesh, &pencil.stiffness.free, v))
        .collect();
    Ok(SpectralResult {
        eigenvalues: sol.values,
        eigenfields,
        residuals: sol.residuals,
        domain: DomainDescriptor::of(mesh),
        iterations: sol.iterations,
    })
}

/// Convenience wrapper for a bump weight.
pub fn solve_with_weight(
    mesh: &Arc<MeridianMesh>,
    p: &PWeight,
    opts: &SolveOptions,
) -> Result<SpectralResult, Error> {
    solve_weighted(mesh, &|z, s| p.eval_p(z, s), opts)
}

/// Dense oracle: all finite eigenvalues of (K, M) via Cholesky of K and Jacobi on L⁻¹ M L⁻ᵀ.
pub fn dense_eigenvalues(k: &SparseSym, m: &SparseSym) -> Result<Vec<f64>, Error> {
    let n = k.n;
    let to_dense = |a: &SparseSym| -> Dense {
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for idx in a.row_ptr[i]..a.row_ptr[i + 1] {
                d[i][a.col_idx[idx]] = a.vals[idx];
            }
        }
        d
    };
    let kd = to_dense(k);
    let md = to_dense(m);
    let l = cholesky(&kd)?;
    let linv = lower_inverse(&l);
    let mut tmp = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            tmp[i][j] = (0..=i).map(|q| linv[i][q] * md[q][j]).sum();
        }
    }
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            c[i][j] = (0..=j).map(|q| tmp[i][q] * linv[j][q]).sum();
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    let (mu, _) = jacobi_eigen(&c)?;
    let top = mu.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut lam: Vec<f64> = mu
        .iter()
        .filter(|&&v| v > 1e-12 * top)
        .map(|v| 1.0 / v)
        .collect();
    lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(lam)
}

/// Multiplies the field by ±1 so that the recovered ∂u/∂x₁ at the first axis node right of e₁
/// is positive.
pub fn sign_normalize(field: &DiscreteField) -> Result<DiscreteField, Error> {
    let mesh = &field.mesh;
    let node = (0..mesh.n_vertices())
        .filter(|&i| {
            mesh.tags[i] & TAG_AXIS != 0 && mesh.vertices[i][0] > 1.0 && !mesh.dirichlet[i]
        })
        .min_by(|&a, &b| {
            mesh.vertices[a][0]
                .partial_cmp(&mesh.vertices[b][0])
                .unwrap()
        })
        .ok_or_else(|| Error::InvalidInput("mesh has no axis node right of e1".into()))?;
    let [z, s] = mesh.vertices[node];
    let (_, g) = field
        .eval(z, s)
        .ok_or_else(|| Error::OutsideDomain("node near e1".into()))?;
    let scale = field.max_abs().max(f64::MIN_POSITIVE);
    if !(g[0].abs() > 1e-10) || field.max_abs() == 0.0 {
        return Err(Error::Degenerate(format!(
            "derivative {} at e1 too small to fix the sign (field scale {scale})",
            g[0]
        )));
    }
    Ok(if g[0] > 0.0 {
        field.clone()
    } else {
        field.scaled(-1.0)
    })
}

/// M-inner product of two nodal vectors.
pub fn m_inner(m: &SparseOperator, a: &[f64], b: &[f64]) -> f64 {
    dot(a, &m.full.matvec(b))
}

/// Index of the candidate with maximal normalized M-overlap with `previous` (interpolated onto
/// the candidates' mesh), together with the overlap.
pub fn track_branch(
    previous: &DiscreteField,
    candidates: &SpectralResult,
    mass: &SparseOperator,
) -> Result<(usize, f64), Error> {
    let mesh = candidates
        .eigenfields
        .first()
        .map(|f| f.mesh.clone())
        .ok_or_else(|| Error::InvalidInput("no candidates".into()))?;
    let interp: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|v| previous.value_at(v[0], v[1]).unwrap_or(0.0))
        .collect();
    let ni = m_inner(mass, &interp, &interp).sqrt();
    if ni == 0.0 {
        return Err(Error::Degenerate(
            "previous field has no weighted mass on the new mesh".into(),
        ));
    }
    let mut best = (0usize, -1.0f64);
    for (i, f) in candidates.eigenfields.iter().enumerate() {
        let nf = m_inner(mass, &f.values, &f.values).sqrt();
        let ov = m_inner(mass, &interp, &f.values).abs() / (ni * nf);
        if ov > best.1 {
            best = (i, ov);
        }
    }
    Ok(best)
}

/// Decoupled half-space spectra and the relative distance of λ_{k0}(D⁺) from σ(D⁻).
#[derive(Debug, Clone)]
pub struct LimitSpectra {
    pub plus: SpectralResult,
    pub minus: SpectralResult,
    /// λ_{k0}(D⁺) with k₀ = 1.
    pub lambda_k0: f64,
    /// min_j |λ_{k0}(D⁺) − λ_j(D⁻)| / λ_{k0}(D⁺).
    pub gap: f64,
    /// (λ₂ − λ₁)/λ₁ on D⁺.
    pub simplicity_gap: f64,
}

/// Spectra of the truncated half-spaces D⁺ (two pairs) and D⁻ (until past λ₁(D⁺)).
/// Errors when the relative gap falls below `min_gap`.
pub fn limit_spectra(
    spec: &DumbbellSpec,
    p: &PWeight,
    min_gap: f64,
) -> Result<LimitSpectra, Error> {
    let plus_mesh = Arc::new(build_half_space(spec, true)?);
    let minus_mesh = Arc::new(build_half_space(spec, false)?);
    let plus = solve_with_weight(&plus_mesh, p, &SolveOptions::new(2))?;
    let lambda_k0 = plus.eigenvalues[0];
    let simplicity_gap = (plus.eigenvalues[1] - plus.eigenvalues[0]) / plus.eigenvalues[0];
    let mut count = 2;
    let minus = loop {
        let res = solve_with_weight(&minus_mesh, p, &SolveOptions::new(count))?;
        if *res.eigenvalues.last().unwrap() > lambda_k0 || count >= 32 {
            break res;
        }
        count *= 2;
    };
    let gap = minus
        .eigenvalues
        .iter()
        .map(|&l| (l - lambda_k0).abs())
        .fold(f64::INFINITY, f64::min)
        / lambda_k0;
    if !(gap >= min_gap) {
        return Err(Error::Assumption(format!(
            "lambda_k0(D+) = {lambda_k0:.6} is within relative distance {gap:.3e} of the D- spectrum (threshold {min_gap})"
        )));
    }
    Ok(LimitSpectra {
        plus,
        minus,
        lambda_k0,
        gap,
        simplicity_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_cylinder_mesh;

    #[test]
    fn cylinder_ground_state() {
        let mesh = Arc::new(build_cylinder_mesh(3, 0.0, 1.0, 1.0, 40, 40).unwrap());
        let res = solve_weighted(&mesh, &|_, _| 1.0, &SolveOptions::new(2)).unwrap();
        assert!(
            (res.eigenvalues[0] - 15.653).abs() / 15.653 < 1e-2,
            "{:?}",
            res.eigenvalues
        );
        assert!(res.residuals.iter().all(|&r| r <= 1e-9));
    }

    #[test]
    fn matches_dense_oracle_with_singular_mass() {
        let mesh = Arc::new(build_cylinder_mesh(3, 0.0, 2.0, 1.0, 16, 8).unwrap());
        let p = |z: f64, _: f64| if z > 1.2 { 1.0 + z } else { 0.0 };
        let pencil = assemble_pencil(&mesh, &p).unwrap();
        let dense = dense_eigenvalues(&pencil.stiffness.reduced, &pencil.mass.reduced).unwrap();
        let res = solve_weighted(
            &mesh,
            &p,
            &SolveOptions {
                tol: 1e-12,
                ..SolveOptions::new(3)
            },
        )
        .unwrap();
        for (a, b) in res.eigenvalues.iter().zip(&dense) {
            assert!((a - b).abs() / b < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_weight_is_rejected() {
        let mesh = Arc::new(build_cylinder_mesh(3, 0.0, 1.0, 1.0, 8, 8).unwrap());
        assert!(solve_weighted(&mesh, &|_, _| 0.0, &SolveOptions::new(1)).is_err());
    }

    #[test]
    fn sign_normalization_is_idempotent() {
        let mesh = Arc::new(build_cylinder_mesh(3, 0.0, 3.0, 1.0, 30, 10).unwrap());
        let res = solve_weighted(&mesh, &|_, _| 1.0, &SolveOptions::new(1)).unwrap();
        let u = &res.eigenfields[0];
        let a = sign_normalize(u).unwrap();
        let b = sign_normalize(&u.scaled(-1.0)).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| (x - y).abs() < 1e-14));
        assert!(sign_normalize(&DiscreteField::zeros(mesh)).is_err());
    }
}
