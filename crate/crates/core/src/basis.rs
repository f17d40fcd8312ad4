//! Spatial basis families. A source map is modelled as `x = A θ` with the
//! columns of `A` drawn from one of:
//!
//! * GBF: Laplace–Beltrami eigenmodes of the cortical mesh, weighted by
//!   their eigenvalues;
//! * Harmonic: real spherical harmonics on each component projected onto
//!   a sphere about its centroid, weighted by `l(l + 1)`;
//! * MSP: leading right singular vectors of the noise-whitened lead field.
//!
//! Per-component bases are block-diagonal: every column lives on exactly one
//! connected component and is zero elsewhere. Columns are stably ordered by
//! weight so that the weights are ascending.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::formats::{read_matrix, write_matrix, Manifest, MatrixFormat};
use crate::forward::ForwardModel;
use crate::harmonics::{harmonic_count, real_harmonics};
use crate::lbo::{assemble_lbo, eigenmodes_with, EigenOptions};
use crate::mesh::TriMesh;
use crate::scalar::{total_cmp, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisFamily {
    Gbf,
    Harmonic,
    Msp,
    /// Identity or user-supplied columns.
    Custom,
}

impl BasisFamily {
    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Gbf => "GBF",
            BasisFamily::Harmonic => "Harmonic",
            BasisFamily::Msp => "MSP",
            BasisFamily::Custom => "Custom",
        }
    }

    fn requires_ascending_weights(self) -> bool {
        matches!(self, BasisFamily::Gbf | BasisFamily::Harmonic)
    }
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gbf" => Ok(Self::Gbf),
            "harmonic" => Ok(Self::Harmonic),
            "msp" => Ok(Self::Msp),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Format(format!("unknown basis family `{other}`"))),
        }
    }
}

/// `A` (N vertices × S functions) with one prior weight per column.
#[derive(Clone, Debug)]
pub struct BasisSet<T: Real> {
    functions: DMatrix<T>,
    weights: DVector<T>,
    family: BasisFamily,
    mesh_fingerprint: Option<String>,
}

impl<T: Real> BasisSet<T> {
    pub fn new(
        functions: DMatrix<T>,
        weights: DVector<T>,
        family: BasisFamily,
        mesh_fingerprint: Option<String>,
    ) -> Result<Self> {
        let (n, s) = functions.shape();
        if s == 0 {
            return Err(Error::Dimension("basis has no columns".into()));
        }
        if s > n {
            return Err(Error::Dimension(format!(
                "{s} basis functions for {n} vertices"
            )));
        }
        if weights.len() != s {
            return Err(Error::Shape(format!(
                "{} weights for {s} basis functions",
                weights.len()
            )));
        }
        if functions.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::Numerical(
                "basis functions contain non-finite values".into(),
            ));
        }
        if let Some(j) = (0..s).find(|&j| functions.column(j).iter().all(|v| *v == T::zero())) {
            return Err(Error::Degenerate(format!(
                "basis column {j} is identically zero"
            )));
        }
        if let Some(w) = weights
            .iter()
            .find(|w| !w.is_finite_value() || **w < T::zero())
        {
            return Err(Error::Numerical(format!(
                "basis weight {w} is negative or non-finite"
            )));
        }
        if family.requires_ascending_weights() && weights.as_slice().windows(2).any(|p| p[1] < p[0])
        {
            return Err(Error::Schema(format!("{family} weights must be ascending")));
        }
        Ok(Self {
            functions,
            weights,
            family,
            mesh_fingerprint,
        })
    }

    /// The `n × n` identity with unit weights.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n),
            DVector::from_element(n, T::one()),
            BasisFamily::Custom,
            None,
        )
    }

    pub fn functions(&self) -> &DMatrix<T> {
        &self.functions
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn mesh_fingerprint(&self) -> Option<&str> {
        self.mesh_fingerprint.as_deref()
    }

    pub fn n_vertices(&self) -> usize {
        self.functions.nrows()
    }

    pub fn count(&self) -> usize {
        self.functions.ncols()
    }

    /// Fails unless the basis was built on (a mesh identical to) `mesh`.
    pub fn check_mesh(&self, mesh: &TriMesh<T>) -> Result<()> {
        if self.n_vertices() != mesh.n_vertices() {
            return Err(Error::Shape(format!(
                "basis has {} rows, mesh has {} vertices",
                self.n_vertices(),
                mesh.n_vertices()
            )));
        }
        match &self.mesh_fingerprint {
            Some(fp) if *fp != mesh.fingerprint() => Err(Error::Schema(format!(
                "basis was built on mesh {fp}, not {}",
                mesh.fingerprint()
            ))),
            _ => Ok(()),
        }
    }

    /// Ratio of smallest to largest singular value of `A`.
    pub fn rank_ratio(&self) -> T {
        let sv = self.functions.clone().svd(false, false).singular_values;
        let max = sv.max();
        if max > T::zero() {
            sv.min() / max
        } else {
            T::zero()
        }
    }

    /// `A θ`.
    pub fn expand(&self, coefficients: &DVector<T>) -> Result<DVector<T>> {
        if coefficients.len() != self.count() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} basis functions",
                coefficients.len(),
                self.count()
            )));
        }
        Ok(&self.functions * coefficients)
    }

    /// Writes `A` to `path` and the metadata to `<path>.meta`.
    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        write_matrix(path, &self.functions, format)?;
        let weights: Vec<String> = self
            .weights
            .iter()
            .map(|w| format!("{}", w.as_f64()))
            .collect();
        let mut m = Manifest::new();
        m.set("family", self.family)
            .set("count", self.count())
            .set("rows", self.n_vertices())
            .set(
                "mesh_fingerprint",
                self.mesh_fingerprint.as_deref().unwrap_or("none"),
            )
            .set("weights", weights.join(","));
        m.write(&sidecar_path(path))
    }

    /// Reads a basis written by [`BasisSet::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let functions = read_matrix::<T>(path)?;
        let meta = Manifest::read(&sidecar_path(path))?;
        let field = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Schema(format!("basis sidecar is missing `{k}`")))
        };
        let family: BasisFamily = field("family")?.parse()?;
        let count: usize = field("count")?
            .parse()
            .map_err(|_| Error::Schema("basis sidecar `count` is not an integer".into()))?;
        if count != functions.ncols() {
            return Err(Error::Schema(format!(
                "sidecar says {count} columns, matrix has {}",
                functions.ncols()
            )));
        }
        let weights = field("weights")?
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::Schema(format!("invalid basis weight `{w}`")))
            })
            .collect::<Result<Vec<T>>>()?;
        let fingerprint = match field("mesh_fingerprint")? {
            "none" => None,
            fp => Some(fp.to_string()),
        };
        Self::new(functions, DVector::from_vec(weights), family, fingerprint)
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Stably reorders the blocks' columns by ascending weight.
fn assemble_sorted<T: Real>(
    n: usize,
    blocks: Vec<(Vec<usize>, DMatrix<T>, Vec<T>)>,
) -> (DMatrix<T>, DVector<T>) {
    let mut cols: Vec<(T, usize, usize)> = Vec::new();
    for (b, (_, _, w)) in blocks.iter().enumerate() {
        cols.extend(w.iter().enumerate().map(|(j, &wj)| (wj, b, j)));
    }
    cols.sort_by(|a, b| total_cmp(&a.0, &b.0));
    let mut a = DMatrix::zeros(n, cols.len());
    let mut weights = DVector::zeros(cols.len());
    for (out, &(w, b, j)) in cols.iter().enumerate() {
        let (rows, block, _) = &blocks[b];
        for (local, &global) in rows.iter().enumerate() {
            a[(global, out)] = block[(local, j)];
        }
        weights[out] = w;
    }
    (a, weights)
}

/// GBF basis with default eigensolver options.
pub fn gbf_basis<T: Real>(
    mesh: &TriMesh<T>,
    count: usize,
    per_hemisphere: bool,
) -> Result<BasisSet<T>> {
    gbf_basis_with(mesh, count, per_hemisphere, &EigenOptions::default())
}

/// The `count` lowest eigenmodes of the mesh, or of each connected
/// component when `per_hemisphere` is set (giving `count` columns per
/// component).
pub fn gbf_basis_with<T: Real>(
    mesh: &TriMesh<T>,
    count: usize,
    per_hemisphere: bool,
    options: &EigenOptions,
) -> Result<BasisSet<T>> {
    let n = mesh.n_vertices();
    let blocks = if per_hemisphere {
        let mut blocks = Vec::with_capacity(mesh.n_components());
        for c in 0..mesh.n_components() {
            let (sub, map) = mesh.component_submesh(c)?;
            if count > sub.n_vertices() {
                return Err(Error::Dimension(format!(
                    "{count} modes requested but component {c} has {} vertices",
                    sub.n_vertices()
                )));
            }
            let modes = eigenmodes_with(&assemble_lbo(&sub)?, count, options)?;
            log::debug!(
                "component {c}: {count} modes, max relative residual {:e}",
                modes.max_relative_residual
            );
            blocks.push((
                map,
                modes.eigenvectors,
                modes.eigenvalues.iter().copied().collect(),
            ));
        }
        blocks
    } else {
        let modes = eigenmodes_with(&assemble_lbo(mesh)?, count, options)?;
        log::debug!(
            "{count} modes, max relative residual {:e}",
            modes.max_relative_residual
        );
        vec![(
            (0..n).collect(),
            modes.eigenvectors,
            modes.eigenvalues.iter().copied().collect(),
        )]
    };
    // Eigenvalues within machine precision of zero come back slightly
    // negative; the prior needs non-negative weights.
    let blocks = blocks
        .into_iter()
        .map(|(rows, a, w): (Vec<usize>, DMatrix<T>, Vec<T>)| {
            (rows, a, w.into_iter().map(|v| v.max(T::zero())).collect())
        })
        .collect();
    let (a, weights) = assemble_sorted(n, blocks);
    BasisSet::new(a, weights, BasisFamily::Gbf, Some(mesh.fingerprint()))
}

/// Real spherical harmonics of degree `0..=max_degree`, evaluated per
/// connected component at the vertex directions about the component
/// centroid (or about the global centroid when `joint`).
pub fn harmonic_basis<T: Real>(
    mesh: &TriMesh<T>,
    max_degree: usize,
    joint: bool,
) -> Result<BasisSet<T>> {
    let n = mesh.n_vertices();
    let groups: Vec<Vec<usize>> = if joint {
        vec![(0..n).collect()]
    } else {
        mesh.components()
    };
    let k = harmonic_count(max_degree);
    if k * groups.len() > n {
        return Err(Error::Dimension(format!(
            "{} harmonic functions for {n} vertices",
            k * groups.len()
        )));
    }
    let (_, radius) = mesh.bounding_sphere();
    let tiny = T::lit(1e-12) * radius.max(T::one());
    let weights: Vec<T> = (0..=max_degree)
        .flat_map(|l| std::iter::repeat_n(T::of_usize(l * (l + 1)), 2 * l + 1))
        .collect();
    let mut blocks = Vec::with_capacity(groups.len());
    for rows in groups {
        let centroid = rows.iter().fold(nalgebra::Vector3::zeros(), |acc, &v| {
            acc + mesh.vertices()[v]
        }) / T::of_usize(rows.len());
        let mut block = DMatrix::zeros(rows.len(), k);
        for (local, &v) in rows.iter().enumerate() {
            let d = mesh.vertices()[v] - centroid;
            let norm = d.norm();
            if norm <= tiny {
                return Err(Error::Geometry(format!(
                    "vertex {v} coincides with its component centroid"
                )));
            }
            for (j, y) in real_harmonics(max_degree, &(d / norm))
                .into_iter()
                .enumerate()
            {
                block[(local, j)] = y;
            }
        }
        blocks.push((rows, block, weights.clone()));
    }
    let (a, w) = assemble_sorted(n, blocks);
    BasisSet::new(a, w, BasisFamily::Harmonic, Some(mesh.fingerprint()))
}

/// Prior weights attached to MSP columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MspWeightMode {
    /// All ones: an identity prior.
    #[default]
    Uniform,
    /// `σ₁² / σᵢ²`, so the strongest component has weight 1.
    InverseSvSquared,
}

impl FromStr for MspWeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "inverse-sv-squared" | "inverse_sv_squared" => Ok(Self::InverseSvSquared),
            other => Err(Error::Format(format!(
                "unknown MSP weight mode `{other}` (uniform, inverse-sv-squared)"
            ))),
        }
    }
}

/// `C^{-1/2}` by symmetric eigendecomposition; fails unless `C` is SPD.
pub fn inverse_sqrt_spd<T: Real>(cov: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !cov.is_square() {
        return Err(Error::Shape(format!(
            "covariance is {}×{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if !(min > T::zero()) {
        return Err(Error::LinAlg(format!(
            "noise covariance is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let inv_sqrt = eig.eigenvalues.map(|v| T::one() / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose())
}

/// The `count` leading right singular vectors of `C^{-1/2} K`.
pub fn msp_basis<T: Real>(
    fm: &ForwardModel<T>,
    noise_cov: &DMatrix<T>,
    count: usize,
    mode: MspWeightMode,
) -> Result<BasisSet<T>> {
    let (m, n) = fm.leadfield().shape();
    if noise_cov.shape() != (m, m) {
        return Err(Error::Shape(format!(
            "noise covariance is {}×{} for {m} sensors",
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    if count == 0 || count > m.min(n) {
        return Err(Error::Dimension(format!(
            "MSP count must be in 1..={}, got {count}",
            m.min(n)
        )));
    }
    let kw = inverse_sqrt_spd(noise_cov)? * fm.leadfield();
    let svd = kw.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::LinAlg("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&svd.singular_values[b], &svd.singular_values[a]));
    let mut a = DMatrix::zeros(n, count);
    for (j, &src) in order.iter().take(count).enumerate() {
        let mut col = v_t.row(src).transpose();
        let lead = col.iter().enumerate().fold((0, T::zero()), |best, (i, v)| {
            if v.abs() > best.1 {
                (i, v.abs())
            } else {
                best
            }
        });
        if col[lead.0] < T::zero() {
            col.neg_mut();
        }
        a.set_column(j, &col);
    }
    let sigma: Vec<T> = order
        .iter()
        .take(count)
        .map(|&i| svd.singular_values[i])
        .collect();
    let weights = match mode {
        MspWeightMode::Uniform => DVector::from_element(count, T::one()),
        MspWeightMode::InverseSvSquared => {
            let s1 = sigma[0];
            if let Some((i, s)) = sigma
                .iter()
                .enumerate()
                .find(|(_, s)| !(**s > T::lit(1e-12) * s1))
            {
                return Err(Error::LinAlg(format!(
                    "singular value {i} of the whitened lead field is {s:e}; cannot invert"
                )));
            }
            DVector::from_iterator(count, sigma.iter().map(|&s| (s1 / s) * (s1 / s)))
        }
    };
    BasisSet::new(a, weights, BasisFamily::Msp, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{analytic_leadfield, fibonacci_sensors, Sensor};
    use crate::mesh::make_icosphere;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use std::f64::consts::PI;

    fn sensors(m: usize) -> Vec<Sensor<f64>> {
        (0..m)
            .map(|i| Sensor {
                name: format!("s{i}"),
                position: Vector3::new(i as f64, 0.0, 0.0),
            })
            .collect()
    }

    fn two_spheres() -> TriMesh<f64> {
        let a = make_icosphere::<f64>(2, 30.0).unwrap();
        let left = a
            .map_vertices(|v| v - Vector3::new(40.0, 0.0, 0.0))
            .unwrap();
        let right = a
            .map_vertices(|v| v + Vector3::new(40.0, 0.0, 0.0))
            .unwrap();
        left.union(&right).unwrap()
    }

    #[test]
    fn gbf_single_mode_is_constant() {
        let mesh = make_icosphere::<f64>(2, 1.0).unwrap();
        let b = gbf_basis(&mesh, 1, false).unwrap();
        assert_eq!(b.count(), 1);
        assert!(b.weights()[0].abs() < 1e-9);
        let c = b.functions().column(0);
        assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-12 && *v > 0.0));
    }

    #[test]
    fn gbf_weights_follow_sphere_spectrum() {
        let mesh = make_icosphere::<f64>(3, 1.0).unwrap();
        let b = gbf_basis(&mesh, 16, false).unwrap();
        assert_eq!(b.family(), BasisFamily::Gbf);
        assert_eq!(b.mesh_fingerprint(), Some(mesh.fingerprint().as_str()));
        let mut idx = 0;
        for l in 0..4usize {
            for _ in 0..(2 * l + 1) {
                let expect = (l * (l + 1)) as f64;
                let got = b.weights()[idx];
                assert!(
                    (got - expect).abs() <= 0.02 * expect.max(1e-9) + 1e-9,
                    "{got} vs {expect}"
                );
                idx += 1;
            }
        }
        assert!(b.rank_ratio() > 1e-10);
    }

    #[test]
    fn gbf_is_deterministic() {
        let mesh = make_icosphere::<f64>(2, 1.0).unwrap();
        let a = gbf_basis(&mesh, 9, false).unwrap();
        let b = gbf_basis(&mesh, 9, false).unwrap();
        assert_eq!(a.functions(), b.functions());
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn per_hemisphere_blocks() {
        let mesh = two_spheres();
        let b = gbf_basis(&mesh, 10, true).unwrap();
        assert_eq!(b.count(), 20);
        let comp = mesh.component_ids();
        for j in 0..20 {
            let support: std::collections::BTreeSet<usize> = (0..mesh.n_vertices())
                .filter(|&i| b.functions()[(i, j)] != 0.0)
                .map(|i| comp[i])
                .collect();
            assert_eq!(support.len(), 1, "column {j}");
        }
        assert!(b.weights().as_slice().windows(2).all(|p| p[0] <= p[1]));
        // Both constant modes come first.
        assert!(b.weights()[1].abs() < 1e-9);
        assert!(matches!(
            gbf_basis(&mesh, 200, true),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn harmonic_counts_and_constant() {
        let mesh = make_icosphere::<f64>(2, 10.0).unwrap();
        let b0 = harmonic_basis(&mesh, 0, false).unwrap();
        assert_eq!(b0.count(), 1);
        for v in b0.functions().iter() {
            assert_relative_eq!(*v, 1.0 / (4.0 * PI).sqrt(), max_relative = 1e-14);
        }
        let b6 = harmonic_basis(&mesh, 6, false).unwrap();
        assert_eq!(b6.count(), 49);
        assert_eq!(b6.weights()[48], 42.0);
        let two = harmonic_basis(&two_spheres(), 6, false).unwrap();
        assert_eq!(two.count(), 98);
        assert_eq!(harmonic_basis(&two_spheres(), 6, true).unwrap().count(), 49);
    }

    #[test]
    fn harmonic_columns_nearly_orthogonal_on_sphere() {
        let mesh = make_icosphere::<f64>(4, 1.0).unwrap();
        let b = harmonic_basis(&mesh, 3, false).unwrap();
        let g = b.functions().transpose() * b.functions() / mesh.n_vertices() as f64;
        let diag = 1.0 / (4.0 * PI);
        for i in 0..g.nrows() {
            assert!(
                (g[(i, i)] - diag).abs() < 0.05 * diag,
                "diag {i}: {}",
                g[(i, i)]
            );
            for j in 0..i {
                assert!(g[(i, j)].abs() < 0.05 * diag, "({i},{j}) {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn msp_identity_gives_signed_permutation() {
        let n = 5;
        let fm = ForwardModel::new(DMatrix::<f64>::identity(n, n), sensors(n), Vec::new()).unwrap();
        let b = msp_basis(
            &fm,
            &DMatrix::identity(n, n),
            n,
            MspWeightMode::InverseSvSquared,
        )
        .unwrap();
        let p = b.functions();
        let ptp = p.transpose() * p;
        assert!((ptp - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        assert!(b.weights().iter().all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn msp_recovers_constructed_right_vectors() {
        // K = U Σ Vᵀ with chosen orthogonal factors.
        let u = DMatrix::<f64>::from_fn(5, 5, |i, j| ((i * 7 + j * 3) as f64).sin())
            .qr()
            .q();
        let v = DMatrix::<f64>::from_fn(8, 8, |i, j| ((i * 5 + j * 11 + 1) as f64).cos())
            .qr()
            .q();
        let sig = [9.0, 5.0, 3.0, 2.0, 1.0];
        let mut s = DMatrix::<f64>::zeros(5, 8);
        for (i, &x) in sig.iter().enumerate() {
            s[(i, i)] = x;
        }
        let k = &u * s * v.transpose();
        let fm = ForwardModel::new(k, sensors(5), Vec::new()).unwrap();
        let b = msp_basis(
            &fm,
            &DMatrix::identity(5, 5),
            4,
            MspWeightMode::InverseSvSquared,
        )
        .unwrap();
        for (j, &sj) in sig.iter().enumerate().take(4) {
            let dot = b.functions().column(j).dot(&v.column(j));
            assert!((dot.abs() - 1.0).abs() < 1e-9, "column {j}: {dot}");
            assert_relative_eq!(b.weights()[j], (9.0 / sj).powi(2), max_relative = 1e-9);
        }
        // Scalar scaling of the covariance leaves the basis unchanged.
        let scaled = msp_basis(
            &fm,
            &(DMatrix::identity(5, 5) * 4.0),
            4,
            MspWeightMode::InverseSvSquared,
        )
        .unwrap();
        assert!((scaled.functions() - b.functions()).amax() < 1e-9);
        assert!((scaled.weights() - b.weights()).amax() < 1e-9);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0, 1.0]));
        assert!(matches!(
            msp_basis(&fm, &bad, 2, MspWeightMode::Uniform),
            Err(Error::LinAlg(_))
        ));
        assert!(matches!(
            msp_basis(&fm, &DMatrix::identity(5, 5), 6, MspWeightMode::Uniform),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn msp_on_analytic_leadfield() {
        let mesh = make_icosphere::<f64>(2, 70.0).unwrap();
        let fm = analytic_leadfield(
            &mesh,
            fibonacci_sensors(32, &Vector3::zeros(), 90.0, true),
            3.3e-4,
        )
        .unwrap();
        let b = msp_basis(&fm, &DMatrix::identity(32, 32), 20, MspWeightMode::Uniform).unwrap();
        let g = b.functions().transpose() * b.functions();
        assert!((g - DMatrix::<f64>::identity(20, 20)).amax() < 1e-10);
    }

    #[test]
    fn invariants_enforced() {
        let z = DMatrix::<f64>::zeros(3, 2);
        assert!(matches!(
            BasisSet::new(z, DVector::zeros(2), BasisFamily::Custom, None),
            Err(Error::Degenerate(_))
        ));
        let a = DMatrix::<f64>::identity(3, 2);
        assert!(matches!(
            BasisSet::new(
                a.clone(),
                DVector::from_vec(vec![2.0, 1.0]),
                BasisFamily::Gbf,
                None
            ),
            Err(Error::Schema(_))
        ));
        assert!(BasisSet::new(
            a.clone(),
            DVector::from_vec(vec![2.0, 1.0]),
            BasisFamily::Msp,
            None
        )
        .is_ok());
        assert!(matches!(
            BasisSet::new(
                a.clone(),
                DVector::from_vec(vec![-1.0, 1.0]),
                BasisFamily::Custom,
                None
            ),
            Err(Error::Numerical(_))
        ));
        assert!(matches!(
            BasisSet::new(
                DMatrix::<f64>::identity(2, 3),
                DVector::zeros(3),
                BasisFamily::Custom,
                None
            ),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = make_icosphere::<f64>(1, 1.0).unwrap();
        let b = gbf_basis(&mesh, 6, false).unwrap();
        for (name, fmt) in [("a.csv", MatrixFormat::Csv), ("a.bin", MatrixFormat::Bin)] {
            let p = dir.path().join(name);
            b.save(&p, fmt).unwrap();
            let back = BasisSet::<f64>::load(&p).unwrap();
            assert_eq!(back.functions(), b.functions());
            assert_eq!(back.weights(), b.weights());
            assert_eq!(back.family(), BasisFamily::Gbf);
            back.check_mesh(&mesh).unwrap();
        }
        let other = make_icosphere::<f64>(1, 2.0).unwrap();
        assert!(matches!(b.check_mesh(&other), Err(Error::Schema(_))));
    }
}
