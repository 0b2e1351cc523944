//! Sparse symmetric storage, an envelope (skyline) LDLᵀ factorization with reverse
//! Cuthill–McKee ordering, and small dense symmetric eigensolvers.

use crate::Error;
use std::collections::VecDeque;

/// Symmetric sparse matrix stored as full CSR (both triangles).
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

/// Accumulates (i, j, v) contributions; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> SparseSym {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym {
            n: self.n,
            row_ptr,
            col_idx,
            vals,
        }
    }
}

impl SparseSym {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest |a_ij − a_ji| relative to the largest entry magnitude.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self
            .vals
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.vals[k] - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// Restriction to the index subset `keep` (given in increasing order of the full indices).
    pub fn restrict(&self, keep: &[usize]) -> SparseSym {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = vec![0usize; keep.len() + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for (new, &old) in keep.iter().enumerate() {
            for k in self.row_ptr[old]..self.row_ptr[old + 1] {
                let j = map[self.col_idx[k]];
                if j != usize::MAX {
                    col_idx.push(j);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[new + 1] = col_idx.len();
        }
        // Columns stay sorted because `keep` is increasing.
        SparseSym {
            n: keep.len(),
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// A + alpha·B for matrices with arbitrary patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseSym) -> SparseSym {
        assert_eq!(self.n, other.n);
        let mut t = TripletBuilder::new(self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.add(i, self.col_idx[k], self.vals[k]);
            }
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                t.add(i, other.col_idx[k], alpha * other.vals[k]);
            }
        }
        t.build()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reverse Cuthill–McKee ordering; returns `perm` with perm[new] = old.
pub fn rcm_ordering(a: &SparseSym) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.col_idx[a.row_ptr[v]..a.row_ptr[v + 1]]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &SparseSym, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut best_ecc = 0;
    for _ in 0..4 {
        let levels = bfs_levels(a, current);
        let ecc = *levels
            .iter()
            .filter(|&&l| l != usize::MAX)
            .max()
            .unwrap_or(&0);
        if ecc <= best_ecc && best_ecc > 0 {
            break;
        }
        best_ecc = ecc;
        let far = (0..a.n)
            .filter(|&i| levels[i] == ecc)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

fn bfs_levels(a: &SparseSym, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.n];
    let mut queue = VecDeque::new();
    level[start] = 0;
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        for &w in &a.col_idx[a.row_ptr[v]..a.row_ptr[v + 1]] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    level
}

/// Envelope LDLᵀ factorization of a symmetric matrix (no pivoting) in RCM order.
#[derive(Debug, Clone)]
pub struct SkylineLdlt {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    lower: Vec<f64>,
    d: Vec<f64>,
}

impl SkylineLdlt {
    pub fn factor(a: &SparseSym) -> Result<Self, Error> {
        let n = a.n;
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0usize; n];
        for new in 0..n {
            let old = perm[new];
            let mut f = new;
            for &j in &a.col_idx[a.row_ptr[old]..a.row_ptr[old + 1]] {
                f = f.min(inv[j]);
            }
            first[new] = f;
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; offset[n]];
        let mut d = vec![0.0; n];
        for new in 0..n {
            let old = perm[new];
            for k in a.row_ptr[old]..a.row_ptr[old + 1] {
                let j = inv[a.col_idx[k]];
                if j < new {
                    lower[offset[new] + j - first[new]] += a.vals[k];
                } else if j == new {
                    d[new] += a.vals[k];
                }
            }
        }
        let scale = d
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        // Row-oriented Crout: row i first holds t_ij = a_ij − Σ_k t_ik l_jk, then l_ij = t_ij / d_j.
        for i in 0..n {
            let fi = first[i];
            let oi = offset[i];
            for j in fi..i {
                let fj = first[j];
                let oj = offset[j];
                let k0 = fi.max(fj);
                let mut acc = lower[oi + j - fi];
                for k in k0..j {
                    acc -= lower[oi + k - fi] * lower[oj + k - fj];
                }
                lower[oi + j - fi] = acc;
            }
            let mut di = d[i];
            for j in fi..i {
                let t = lower[oi + j - fi];
                let l = t / d[j];
                di -= t * l;
                lower[oi + j - fi] = l;
            }
            if di.abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
            d[i] = di;
        }
        Ok(Self {
            n,
            perm,
            first,
            offset,
            lower,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of negative pivots, i.e. the number of negative eigenvalues (Sylvester).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let mut acc = y[i];
            for j in fi..i {
                acc -= self.lower[oi + j - fi] * y[j];
            }
            y[i] = acc;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            let yi = y[i];
            for j in fi..i {
                y[j] -= self.lower[oi + j - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

/// Dense symmetric matrix helper (row-major).
pub type Dense = Vec<Vec<f64>>;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns ascending eigenvalues and
/// the matching orthonormal eigenvectors as columns of `v` (v[row][col]).
pub fn jacobi_eigen(a: &Dense) -> Result<(Vec<f64>, Dense), Error> {
    let n = a.len();
    let mut m = a.clone();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = n <= 1;
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence("Jacobi sweeps".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap());
    let evals = idx.iter().map(|&i| m[i][i]).collect();
    let mut vecs = vec![vec![0.0; n]; n];
    for (new, &old) in idx.iter().enumerate() {
        for r in 0..n {
            vecs[r][new] = v[r][old];
        }
    }
    Ok((evals, vecs))
}

/// Dense Cholesky factor L (lower) of an SPD matrix.
pub fn cholesky(a: &Dense) -> Result<Dense, Error> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Singular(format!(
                        "matrix not positive definite at {i}"
                    )));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Dense generalized symmetric-definite eigenproblem A x = θ B x (B SPD).
/// Returns ascending θ and B-orthonormal eigenvectors as columns.
pub fn generalized_eigen(a: &Dense, b: &Dense) -> Result<(Vec<f64>, Dense), Error> {
    let n = a.len();
    let l = cholesky(b)?;
    // C = L⁻¹ A L⁻ᵀ
    let linv = lower_inverse(&l);
    let mut tmp = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += linv[i][k] * a[k][j];
            }
            tmp[i][j] = s;
        }
    }
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..=j {
                s += tmp[i][k] * linv[j][k];
            }
            c[i][j] = s;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = m;
            c[j][i] = m;
        }
    }
    let (evals, y) = jacobi_eigen(&c)?;
    let mut x = vec![vec![0.0; n]; n];
    for col in 0..n {
        for i in 0..n {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k][i] * y[k][col];
            }
            x[i][col] = s;
        }
    }
    Ok((evals, x))
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &Dense) -> Dense {
    let n = l.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        inv[j][j] = 1.0 / l[j][j];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i][k] * inv[k][j];
            }
            inv[i][j] = s / l[i][i];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> SparseSym {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.add(i, i, 2.0 - shift);
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
                t.add(i + 1, i, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn skyline_solves_spd_system() {
        let a = laplace_1d(50, 0.0);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        let f = SkylineLdlt::factor(&a).unwrap();
        let y = f.solve(&b);
        let err: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert_eq!(f.negative_pivots(), 0);
    }

    #[test]
    fn skyline_counts_negative_eigenvalues() {
        // eigenvalues 2 - 2cos(kπ/(n+1)); shift 0.9 leaves those below 0.9 negative.
        let n = 20;
        let a = laplace_1d(n, 0.9);
        let f = SkylineLdlt::factor(&a).unwrap();
        let expected = (1..=n)
            .filter(|&k| {
                2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos() < 0.9
            })
            .count();
        assert_eq!(f.negative_pivots(), expected);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let n = 8;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0;
            if i + 1 < n {
                a[i][i + 1] = -1.0;
                a[i + 1][i] = -1.0;
            }
        }
        let (ev, _) = jacobi_eigen(&a).unwrap();
        for (k, e) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 9.0).cos();
            assert!((e - exact).abs() < 1e-12);
        }
    }
}
