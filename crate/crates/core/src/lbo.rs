//! Discrete Laplace–Beltrami operator and its generalized eigenmodes.
//!
//! The operator is the linear finite-element discretisation on a triangle
//! mesh: a cotangent stiffness matrix `S` and a lumped (barycentric) mass
//! matrix `M`. Eigenmodes solve `S ψ = λ M ψ` and are returned
//! `M`-orthonormal, so `ψᵀ M ψ = I`.
//!
//! Small meshes are solved densely through the symmetric matrix
//! `M^{-1/2} S M^{-1/2}`. Larger meshes use a shift-invert block Krylov
//! method: the Krylov space of `(S − σM)^{-1} M` is built with full
//! `M`-orthogonalisation and Rayleigh–Ritz is applied to `S` on that space.
//! Blocks keep degenerate eigenspaces (e.g. on spheres) resolvable.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::{total_cmp, Real};

/// Cotangents above this magnitude mean a sliver triangle got through
/// mesh validation.
pub const MAX_COTANGENT: f64 = 1e8;

/// Cotangent stiffness and lumped mass of a mesh.
#[derive(Clone, Debug)]
pub struct DiscreteLbo<T: Real> {
    stiffness: CsrMatrix<T>,
    mass: DVector<T>,
}

impl<T: Real> DiscreteLbo<T> {
    /// Symmetric positive semi-definite stiffness; constants are in its kernel.
    pub fn stiffness(&self) -> &CsrMatrix<T> {
        &self.stiffness
    }

    /// Diagonal of the lumped mass matrix (vertex areas, mm²).
    pub fn mass(&self) -> &DVector<T> {
        &self.mass
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn stiffness_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.n(), self.n());
        for (i, j, v) in self.stiffness.triplet_iter() {
            d[(i, j)] = *v;
        }
        d
    }

    pub fn apply_stiffness(&self, x: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.n());
        for (i, row) in self.stiffness.row_iter().enumerate() {
            let mut acc = T::zero();
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                acc += v * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Stiffness entry `(i, j)`, zero when not stored.
    pub fn stiffness_entry(&self, i: usize, j: usize) -> T {
        let row = self.stiffness.row(i);
        match row.col_indices().binary_search(&j) {
            Ok(k) => row.values()[k],
            Err(_) => T::zero(),
        }
    }
}

/// Assembles the cotangent stiffness and barycentric lumped mass.
///
/// Edge `(i, j)` gets `−(cot α + cot β)/2` from the angles opposite it in the
/// one or two incident triangles; the diagonal is minus the off-diagonal row
/// sum. Vertex mass is a third of the area of the incident triangles.
pub fn assemble_lbo<T: Real>(mesh: &TriMesh<T>) -> Result<DiscreteLbo<T>> {
    let n = mesh.n_vertices();
    let verts = mesh.vertices();
    let half = T::lit(0.5);
    let third = T::lit(1.0 / 3.0);
    let max_cot = T::lit(MAX_COTANGENT);

    // Accumulated per undirected edge so (i, j) and (j, i) get the same bits.
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    let mut mass = DVector::zeros(n);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let area = crate::mesh::triangle_area(&verts[f[0]], &verts[f[1]], &verts[f[2]]);
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let a = verts[i] - verts[o];
            let b = verts[j] - verts[o];
            let cot = a.dot(&b) / a.cross(&b).norm();
            if !cot.is_finite_value() || cot.abs() > max_cot {
                return Err(Error::Numerical(format!(
                    "cotangent {cot:e} at vertex {o} of face {fi} exceeds {MAX_COTANGENT:e}"
                )));
            }
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            match rows[lo].iter_mut().find(|(c, _)| *c == hi) {
                Some(entry) => entry.1 += cot * half,
                None => rows[lo].push((hi, cot * half)),
            }
            mass[i] += area * third;
        }
    }

    let mut full: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for (lo, list) in rows.iter().enumerate() {
        for &(hi, w) in list {
            full[lo].push((hi, -w));
            full[hi].push((lo, -w));
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for (i, mut row) in full.into_iter().enumerate() {
        let diag = row.iter().fold(T::zero(), |acc, &(_, v)| acc - v);
        row.push((i, diag));
        row.sort_by_key(|&(j, _)| j);
        for (j, v) in row {
            indices.push(j);
            values.push(v);
        }
        offsets.push(indices.len());
    }
    let stiffness = CsrMatrix::try_from_csr_data(n, n, offsets, indices, values)
        .map_err(|e| Error::Numerical(format!("stiffness assembly: {e}")))?;
    Ok(DiscreteLbo { stiffness, mass })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenStrategy {
    /// Dense below [`EigenOptions::dense_limit`] vertices, Krylov above.
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub strategy: EigenStrategy,
    pub dense_limit: usize,
    /// Shift σ of the factorised matrix `S − σM`; negative keeps it definite.
    pub shift: f64,
    /// Relative residual target for the Krylov path.
    pub tolerance: f64,
    /// Cap on the Krylov subspace dimension.
    pub max_iterations: usize,
    pub block_size: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            strategy: EigenStrategy::Auto,
            dense_limit: 2000,
            shift: -1e-8,
            tolerance: 1e-9,
            max_iterations: 5000,
            block_size: 16,
            seed: 0x9bf1_e5ee_d000_0001,
        }
    }
}

/// The `S` smallest generalized eigenpairs of a [`DiscreteLbo`].
#[derive(Clone, Debug)]
pub struct EigenmodeResult<T: Real> {
    /// Ascending, in 1/mm². Zero modes come out as tiny values, not exact 0.
    pub eigenvalues: DVector<T>,
    /// N×S, one mode per column; each column's largest-magnitude entry is positive.
    pub eigenvectors: DMatrix<T>,
    /// Whether `ψᵀMψ = I` was verified to 1e-7 per entry.
    pub mass_orthonormal: bool,
    /// Largest relative residual `‖Sψ − λMψ‖ / scale` over returned modes.
    pub max_relative_residual: f64,
    /// Operator applications on the Krylov path, 0 for the dense path.
    pub iterations: usize,
}

impl<T: Real> EigenmodeResult<T> {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn eigenmodes<T: Real>(lbo: &DiscreteLbo<T>, count: usize) -> Result<EigenmodeResult<T>> {
    eigenmodes_with(lbo, count, &EigenOptions::default())
}

pub fn eigenmodes_with<T: Real>(
    lbo: &DiscreteLbo<T>,
    count: usize,
    opts: &EigenOptions,
) -> Result<EigenmodeResult<T>> {
    let n = lbo.n();
    if count == 0 || count > n {
        return Err(Error::Dimension(format!(
            "requested {count} eigenmodes of a {n}-vertex operator"
        )));
    }
    if lbo.mass.iter().any(|&m| !(m > T::zero())) {
        return Err(Error::Numerical(
            "mass matrix has a non-positive entry".into(),
        ));
    }
    let dense = match opts.strategy {
        EigenStrategy::Dense => true,
        EigenStrategy::ShiftInvert => false,
        EigenStrategy::Auto => n <= opts.dense_limit,
    };
    let (values, mut vectors, iterations) = if dense {
        let (v, w) = dense_eigen(lbo, count);
        (v, w, 0)
    } else {
        krylov_eigen(lbo, count, opts)?
    };
    fix_signs(&mut vectors);
    let eigenvalues = DVector::from_vec(values);
    let max_relative_residual = relative_residuals(lbo, &eigenvalues, &vectors)
        .into_iter()
        .fold(0.0, f64::max);
    let mass_orthonormal = mass_gram_error(lbo, &vectors) <= 1e-7;
    Ok(EigenmodeResult {
        eigenvalues,
        eigenvectors: vectors,
        mass_orthonormal,
        max_relative_residual,
        iterations,
    })
}

fn dense_eigen<T: Real>(lbo: &DiscreteLbo<T>, count: usize) -> (Vec<T>, DMatrix<T>) {
    let n = lbo.n();
    let inv_sqrt: Vec<T> = lbo.mass.iter().map(|&m| T::one() / m.sqrt()).collect();
    let mut b = DMatrix::zeros(n, n);
    for (i, j, v) in lbo.stiffness.triplet_iter() {
        b[(i, j)] = *v * inv_sqrt[i] * inv_sqrt[j];
    }
    let eig = SymmetricEigen::new(b);
    let order = ascending_order(eig.eigenvalues.as_slice());
    let values = order[..count].iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, count, |i, c| {
        eig.eigenvectors[(i, order[c])] * inv_sqrt[i]
    });
    (values, vectors)
}

fn ascending_order<T: Real>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&values[a], &values[b]).then(a.cmp(&b)));
    order
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
fn fix_signs<T: Real>(vectors: &mut DMatrix<T>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < T::zero() {
            col.neg_mut();
        }
    }
}

/// Eigenvalue scale used to make residuals relative: the largest returned
/// |λ|, floored by 1e-6 × the mean of diag(S)/diag(M) so zero modes are
/// measured against the operator's own scale.
fn residual_scale<T: Real>(lbo: &DiscreteLbo<T>, largest: T) -> f64 {
    let n = lbo.n();
    let mut ratio = 0.0;
    for i in 0..n {
        ratio += lbo.stiffness_entry(i, i).as_f64() / lbo.mass[i].as_f64();
    }
    let floor = 1e-6 * ratio / n as f64;
    largest.abs().as_f64().max(floor).max(f64::MIN_POSITIVE)
}

/// `‖Sψ − λMψ‖_{M⁻¹} / scale` for every column.
fn relative_residuals<T: Real>(
    lbo: &DiscreteLbo<T>,
    values: &DVector<T>,
    vectors: &DMatrix<T>,
) -> Vec<f64> {
    let largest = values
        .iter()
        .fold(T::zero(), |a, &b| if b.abs() > a { b.abs() } else { a });
    let scale = residual_scale(lbo, largest);
    (0..vectors.ncols())
        .map(|c| {
            let psi = vectors.column(c).into_owned();
            let s_psi = lbo.apply_stiffness(&psi);
            let mut acc = 0.0;
            for i in 0..lbo.n() {
                let r = (s_psi[i] - values[c] * lbo.mass[i] * psi[i]).as_f64();
                acc += r * r / lbo.mass[i].as_f64();
            }
            acc.sqrt() / scale
        })
        .collect()
}

fn mass_gram_error<T: Real>(lbo: &DiscreteLbo<T>, vectors: &DMatrix<T>) -> f64 {
    let mut weighted = vectors.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= lbo.mass[i];
    }
    let gram = vectors.transpose() * weighted;
    let mut worst = 0.0f64;
    for ((i, j), v) in gram
        .iter()
        .enumerate()
        .map(|(k, v)| ((k % gram.nrows(), k / gram.nrows()), v))
    {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v.as_f64() - target).abs());
    }
    worst
}

/// Reverse Cuthill–McKee ordering of the stiffness graph; returns new→old.
fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).nnz()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let head = order.len();
        order.push(start);
        let mut cursor = head;
        while cursor < order.len() {
            let v = order[cursor];
            cursor += 1;
            let mut next: Vec<usize> = a
                .row(v)
                .col_indices()
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Membership masks of the connected components of the stiffness graph.
fn component_indicators<T: Real>(a: &CsrMatrix<T>) -> Vec<Vec<bool>> {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut mask = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            mask[v] = true;
            for &w in a.row(v).col_indices() {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        out.push(mask);
    }
    out
}

struct ShiftInvert<T: Real> {
    chol: CscCholesky<T>,
    new_to_old: Vec<usize>,
    mass: DVector<T>,
}

impl<T: Real> ShiftInvert<T> {
    fn new(lbo: &DiscreteLbo<T>, shift: T) -> Result<Self> {
        let n = lbo.n();
        let new_to_old = reverse_cuthill_mckee(&lbo.stiffness);
        let mut old_to_new = vec![0; n];
        for (new, &old) in new_to_old.iter().enumerate() {
            old_to_new[old] = new;
        }
        let mut coo = CooMatrix::new(n, n);
        for (i, j, &v) in lbo.stiffness.triplet_iter() {
            let v = if i == j { v - shift * lbo.mass[i] } else { v };
            coo.push(old_to_new[i], old_to_new[j], v);
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc)
            .map_err(|e| Error::LinAlg(format!("Cholesky of shifted stiffness failed: {e:?}")))?;
        Ok(Self {
            chol,
            new_to_old,
            mass: lbo.mass.clone(),
        })
    }

    /// Columns of `(S − σM)^{-1} M X`.
    fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let n = x.nrows();
        let mut rhs = DMatrix::zeros(n, x.ncols());
        for (new, &old) in self.new_to_old.iter().enumerate() {
            for c in 0..x.ncols() {
                rhs[(new, c)] = self.mass[old] * x[(old, c)];
            }
        }
        let sol = self.chol.solve(&rhs);
        let mut out = DMatrix::zeros(n, x.ncols());
        for (new, &old) in self.new_to_old.iter().enumerate() {
            for c in 0..x.ncols() {
                out[(old, c)] = sol[(new, c)];
            }
        }
        out
    }
}

fn mass_dot<T: Real>(mass: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> T {
    let mut acc = T::zero();
    for i in 0..a.len() {
        acc += a[i] * mass[i] * b[i];
    }
    acc
}

fn krylov_eigen<T: Real>(
    lbo: &DiscreteLbo<T>,
    count: usize,
    opts: &EigenOptions,
) -> Result<(Vec<T>, DMatrix<T>, usize)> {
    let n = lbo.n();
    let mass = &lbo.mass;
    let cap = opts.max_iterations.min(n).max(count);
    let block = opts.block_size.clamp(1, n);
    let op = ShiftInvert::new(lbo, T::lit(opts.shift))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_block =
        |cols: usize| DMatrix::from_fn(n, cols, |_, _| T::lit(rng.random::<f64>() - 0.5));

    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut s_basis: Vec<DVector<T>> = Vec::new();
    let mut projected: Vec<Vec<T>> = Vec::new();
    // Per-component constants span the exact kernel. Seeding them keeps the
    // ~1/σ amplification of the kernel direction out of later Krylov vectors.
    for indicator in component_indicators(&lbo.stiffness) {
        let mut w = DVector::from_iterator(
            n,
            indicator
                .iter()
                .map(|&on| if on { T::one() } else { T::zero() }),
        );
        let norm = mass_dot(mass, &w, &w).sqrt();
        w /= norm;
        let sw = lbo.apply_stiffness(&w);
        let row: Vec<T> = basis.iter().map(|v: &DVector<T>| v.dot(&sw)).collect();
        for (i, &h) in row.iter().enumerate() {
            projected[i].push(h);
        }
        let mut own = row;
        own.push(w.dot(&sw));
        projected.push(own);
        basis.push(w);
        s_basis.push(sw);
    }
    let mut applications = 0usize;
    let mut pending = op.apply(&random_block(block));
    applications += 1;
    let mut last_check = 0usize;
    let mut worst = f64::INFINITY;
    let largest_scale = |vals: &[T]| {
        vals.iter()
            .fold(T::zero(), |a, &b| if b.abs() > a { b.abs() } else { a })
    };

    loop {
        let mut added = Vec::new();
        for c in 0..pending.ncols() {
            if basis.len() >= cap {
                break;
            }
            let mut w = pending.column(c).into_owned();
            let before = mass_dot(mass, &w, &w).sqrt();
            if !(before > T::zero()) {
                continue;
            }
            for _ in 0..2 {
                for v in &basis {
                    let coef = mass_dot(mass, v, &w);
                    w.axpy(-coef, v, T::one());
                }
            }
            let after = mass_dot(mass, &w, &w).sqrt();
            if !(after > before * T::lit(1e-8)) {
                continue;
            }
            w /= after;
            let sw = lbo.apply_stiffness(&w);
            let row: Vec<T> = basis.iter().map(|v| v.dot(&sw)).collect();
            for (i, &h) in row.iter().enumerate() {
                projected[i].push(h);
            }
            let mut own = row;
            own.push(w.dot(&sw));
            projected.push(own);
            basis.push(w);
            s_basis.push(sw);
            added.push(basis.len() - 1);
        }

        let k = basis.len();
        let exhausted = k >= cap;
        let due = k >= count + block && (k - last_check >= block.max(count / 4) || exhausted);
        if due || (exhausted && k >= count) {
            last_check = k;
            let h = DMatrix::from_fn(k, k, |i, j| projected[i][j]);
            let eig = SymmetricEigen::new(h);
            let order = ascending_order(eig.eigenvalues.as_slice());
            let values: Vec<T> = order[..count].iter().map(|&o| eig.eigenvalues[o]).collect();
            let scale = residual_scale(lbo, largest_scale(&values));
            let mut vectors = DMatrix::zeros(n, count);
            worst = 0.0;
            for (c, &o) in order[..count].iter().enumerate() {
                let y = eig.eigenvectors.column(o);
                let mut psi = DVector::zeros(n);
                let mut s_psi = DVector::zeros(n);
                for (i, coef) in y.iter().enumerate() {
                    psi.axpy(*coef, &basis[i], T::one());
                    s_psi.axpy(*coef, &s_basis[i], T::one());
                }
                let mut acc = 0.0;
                for i in 0..n {
                    let r = (s_psi[i] - values[c] * mass[i] * psi[i]).as_f64();
                    acc += r * r / mass[i].as_f64();
                }
                worst = worst.max(acc.sqrt() / scale);
                vectors.set_column(c, &psi);
            }
            log::debug!("krylov dim {k}: worst relative residual {worst:e}");
            if worst <= opts.tolerance || k == n {
                return Ok((values, vectors, applications));
            }
        }
        if exhausted {
            return Err(Error::Convergence {
                what: "shift-invert eigensolver",
                iterations: applications,
                measure: "relative residual",
                value: worst,
            });
        }

        let next = if added.is_empty() {
            random_block(block)
        } else {
            DMatrix::from_fn(n, added.len(), |i, c| basis[added[c]][i])
        };
        pending = op.apply(&next);
        applications += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_icosphere, TriMesh};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn flat(vertices: &[[f64; 3]], faces: Vec<[usize; 3]>) -> TriMesh<f64> {
        TriMesh::new(
            vertices
                .iter()
                .map(|p| Vector3::new(p[0], p[1], p[2]))
                .collect(),
            faces,
        )
        .unwrap()
    }

    #[test]
    fn unit_square_weights() {
        // Diagonal (0,2) is opposite two right angles; sides see one 45° angle.
        let m = flat(
            &[[0., 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., 1., 0.]],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        let l = assemble_lbo(&m).unwrap();
        assert!(l.stiffness_entry(0, 2).abs() < 1e-15);
        assert_relative_eq!(l.stiffness_entry(0, 1), -0.5, max_relative = 1e-14);
        assert_relative_eq!(l.stiffness_entry(2, 3), -0.5, max_relative = 1e-14);
        assert_eq!(l.stiffness_entry(1, 3), 0.0);
    }

    #[test]
    fn shared_edge_between_two_45_degree_angles() {
        // Edge (0,1) is opposite a 45° angle in both triangles.
        let m = flat(
            &[[0., 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., -1., 0.]],
            vec![[0, 1, 2], [1, 0, 3]],
        );
        let l = assemble_lbo(&m).unwrap();
        assert_relative_eq!(l.stiffness_entry(0, 1), -1.0, max_relative = 1e-14);
    }

    #[test]
    fn kernel_symmetry_and_mass() {
        let m: TriMesh<f64> = make_icosphere(2, 3.0).unwrap();
        let l = assemble_lbo(&m).unwrap();
        let ones = DVector::from_element(m.n_vertices(), 1.0);
        let s1 = l.apply_stiffness(&ones);
        for (i, row) in l.stiffness().row_iter().enumerate() {
            let abs: f64 = row.values().iter().map(|v| v.abs()).sum();
            assert!(s1[i].abs() <= 1e-9 * abs);
        }
        for (i, j, v) in l.stiffness().triplet_iter() {
            assert_eq!(v.to_bits(), l.stiffness_entry(j, i).to_bits());
        }
        assert!(l.mass().iter().all(|&x| x > 0.0));
        assert_relative_eq!(l.mass().sum(), m.total_area(), max_relative = 1e-12);
    }

    #[test]
    fn icosahedron_mass_trace() {
        let m: TriMesh<f64> = make_icosphere(0, 1.0).unwrap();
        let e = 4.0 / (10.0 + 2.0 * 5f64.sqrt()).sqrt();
        let l = assemble_lbo(&m).unwrap();
        assert_relative_eq!(
            l.mass().sum(),
            5.0 * 3f64.sqrt() * e * e,
            max_relative = 1e-12
        );
    }

    #[test]
    fn dimension_errors() {
        let m: TriMesh<f64> = make_icosphere(0, 1.0).unwrap();
        let l = assemble_lbo(&m).unwrap();
        assert!(matches!(eigenmodes(&l, 0), Err(Error::Dimension(_))));
        assert!(matches!(eigenmodes(&l, 13), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_mode_is_normalised_constant() {
        let m: TriMesh<f64> = make_icosphere(2, 1.0).unwrap();
        let l = assemble_lbo(&m).unwrap();
        let r = eigenmodes(&l, 1).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-10);
        let c = 1.0 / l.mass().sum().sqrt();
        for v in r.eigenvectors.column(0).iter() {
            assert_relative_eq!(*v, c, max_relative = 1e-8);
        }
        assert!(r.mass_orthonormal);
    }

    #[test]
    fn krylov_matches_dense() {
        let m: TriMesh<f64> = make_icosphere(3, 1.0).unwrap();
        let l = assemble_lbo(&m).unwrap();
        let dense = eigenmodes_with(
            &l,
            20,
            &EigenOptions {
                strategy: EigenStrategy::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        let krylov = eigenmodes_with(
            &l,
            20,
            &EigenOptions {
                strategy: EigenStrategy::ShiftInvert,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(krylov.iterations > 0);
        assert!(
            krylov.max_relative_residual <= 1e-9,
            "{}",
            krylov.max_relative_residual
        );
        assert!(krylov.mass_orthonormal);
        for (a, b) in dense.eigenvalues.iter().zip(krylov.eigenvalues.iter()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
