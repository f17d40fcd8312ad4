//! Synthetic trials: ground-truth sources, sensor noise, and mixing at an
//! exact signal-to-noise ratio.
//!
//! Power is the mean squared amplitude over sensors at the single analysed
//! time sample, and `SNR_dB = 10 log10(P_signal / P_noise)`. Every random
//! draw comes from a ChaCha20 stream seeded by an explicit `u64`, so a trial
//! is a pure function of its inputs.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::formats::{read_vector, write_vector, Manifest, MatrixFormat};
use crate::forward::ForwardModel;
use crate::mesh::TriMesh;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    PatchSynthetic,
    FileImport,
    Solver(String),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::PatchSynthetic => f.write_str("patch-synthetic"),
            Provenance::FileImport => f.write_str("file-import"),
            Provenance::Solver(name) => write!(f, "solver:{name}"),
        }
    }
}

/// Per-vertex source amplitudes with a record of where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceEstimate<T: Real> {
    values: DVector<T>,
    provenance: Provenance,
}

impl<T: Real> SourceEstimate<T> {
    pub fn new(values: DVector<T>, provenance: Provenance) -> Self {
        Self { values, provenance }
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite_value())
    }

    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        write_vector(path, &self.values, format)
    }
}

/// Gaussian patch centred on a vertex:
/// `amplitude · exp(−4 ln 2 · d² / fwhm²)` with `d` the edge-graph geodesic
/// distance. Vertices unreachable from the centre get 0.
pub fn patch_source<T: Real>(
    mesh: &TriMesh<T>,
    center_vertex: usize,
    fwhm_mm: T,
    amplitude: T,
) -> Result<SourceEstimate<T>> {
    if !(fwhm_mm > T::zero()) {
        return Err(Error::Geometry(format!(
            "fwhm must be positive, got {fwhm_mm}"
        )));
    }
    let dist = mesh.geodesic_distances(center_vertex)?;
    let k = T::lit(-4.0 * std::f64::consts::LN_2) / (fwhm_mm * fwhm_mm);
    let values = DVector::from_iterator(
        dist.len(),
        dist.iter().map(|&d| {
            if d.is_finite_value() {
                amplitude * (k * d * d).exp()
            } else {
                T::zero()
            }
        }),
    );
    Ok(SourceEstimate::new(values, Provenance::PatchSynthetic))
}

/// Reads an externally produced per-vertex map (VEC format).
pub fn import_source_map<T: Real>(path: &Path, mesh: &TriMesh<T>) -> Result<SourceEstimate<T>> {
    let values = read_vector::<T>(path)?;
    if values.len() != mesh.n_vertices() {
        return Err(Error::Shape(format!(
            "source map has {} rows, mesh has {} vertices",
            values.len(),
            mesh.n_vertices()
        )));
    }
    if values.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::Numerical("source map has non-finite values".into()));
    }
    Ok(SourceEstimate::new(values, Provenance::FileImport))
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-trial seed from a base seed and a trial index.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    mix64(base_seed ^ mix64(index))
}

/// Distinct random vertex indices (fewer if the mesh is smaller).
pub fn random_patch_centers<T: Real>(mesh: &TriMesh<T>, count: usize, seed: u64) -> Vec<usize> {
    let n = mesh.n_vertices();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(count.min(n));
    let mut taken = vec![false; n];
    while picked.len() < count.min(n) {
        let v = rng.random_range(0..n);
        if !taken[v] {
            taken[v] = true;
            picked.push(v);
        }
    }
    picked
}

/// `m` i.i.d. standard normal samples.
pub fn gaussian_noise<T: Real>(m: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    DVector::from_iterator(
        m,
        (0..m).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CovarianceNormalization {
    /// Unit diagonal: `C_ij / √(C_ii C_jj)`.
    #[default]
    Correlation,
    /// `C / trace(C)`.
    TraceOne,
    None,
}

impl std::str::FromStr for CovarianceNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "correlation" => Ok(Self::Correlation),
            "trace-one" | "trace_one" | "traceone" => Ok(Self::TraceOne),
            "none" => Ok(Self::None),
            other => Err(Error::Format(format!(
                "unknown covariance normalization `{other}` (correlation, trace-one, none)"
            ))),
        }
    }
}

pub fn normalize_covariance<T: Real>(
    cov: &DMatrix<T>,
    mode: CovarianceNormalization,
) -> Result<DMatrix<T>> {
    if !cov.is_square() {
        return Err(Error::Shape(format!(
            "covariance is {}×{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    match mode {
        CovarianceNormalization::None => Ok(cov.clone()),
        CovarianceNormalization::TraceOne => {
            let tr = cov.trace();
            if !(tr > T::zero()) {
                return Err(Error::LinAlg("covariance trace is not positive".into()));
            }
            Ok(cov / tr)
        }
        CovarianceNormalization::Correlation => {
            let d: Vec<T> = cov.diagonal().iter().map(|&v| v.sqrt()).collect();
            if d.iter().any(|&v| !(v > T::zero())) {
                return Err(Error::LinAlg(
                    "covariance has a non-positive variance; cannot form correlations".into(),
                ));
            }
            Ok(DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
                cov[(i, j)] / (d[i] * d[j])
            }))
        }
    }
}

/// Sampler for `N(0, C)` with `C` the normalised covariance: draws are
/// `E √diag(V) R` where `C = E diag(V) Eᵀ` and `R` is standard normal.
#[derive(Clone, Debug)]
pub struct CovarianceFactor<T: Real> {
    factor: DMatrix<T>,
    normalized: DMatrix<T>,
}

impl<T: Real> CovarianceFactor<T> {
    pub fn new(cov: &DMatrix<T>, normalization: CovarianceNormalization) -> Result<Self> {
        let c = normalize_covariance(cov, normalization)?;
        let m = c.nrows();
        let max_abs = c.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        for i in 0..m {
            for j in 0..i {
                if (c[(i, j)] - c[(j, i)]).abs() > T::lit(1e-10) * max_abs {
                    return Err(Error::LinAlg(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let trace = c.trace();
        let floor = -T::lit(1e-10) * trace.abs();
        let diagonal = (0..m).all(|i| (0..m).all(|j| i == j || c[(i, j)] == T::zero()));
        let factor = if diagonal {
            // Exact path: keeps identity covariance bit-identical to gaussian_noise.
            let mut f = DMatrix::zeros(m, m);
            for i in 0..m {
                let v = c[(i, i)];
                if v < floor {
                    return Err(Error::LinAlg(format!("negative variance {v:e} at {i}")));
                }
                f[(i, i)] = v.max(T::zero()).sqrt();
            }
            f
        } else {
            let eig = SymmetricEigen::new(c.clone());
            let mut f = eig.eigenvectors.clone();
            for (k, &v) in eig.eigenvalues.iter().enumerate() {
                if v < floor {
                    return Err(Error::LinAlg(format!(
                        "covariance has eigenvalue {v:e} below −1e-10·trace"
                    )));
                }
                let s = v.max(T::zero()).sqrt();
                f.column_mut(k).scale_mut(s);
            }
            f
        };
        Ok(Self {
            factor,
            normalized: c,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn normalized(&self) -> &DMatrix<T> {
        &self.normalized
    }

    pub fn sample(&self, seed: u64) -> DVector<T> {
        &self.factor * gaussian_noise::<T>(self.dim(), seed)
    }
}

/// One realistic-noise draw; see [`CovarianceFactor`].
pub fn realistic_noise<T: Real>(
    cov: &DMatrix<T>,
    normalization: CovarianceNormalization,
    seed: u64,
) -> Result<DVector<T>> {
    Ok(CovarianceFactor::new(cov, normalization)?.sample(seed))
}

/// Spatially smooth sensor covariance `exp(−‖sᵢ − sⱼ‖² / 2ρ²)`, for use when
/// no recorded noise covariance is available.
pub fn gaussian_kernel_covariance<T: Real>(sensors: &[Vector3<T>], rho_mm: T) -> DMatrix<T> {
    let two_rho2 = T::lit(2.0) * rho_mm * rho_mm;
    DMatrix::from_fn(sensors.len(), sensors.len(), |i, j| {
        (-(sensors[i] - sensors[j]).norm_squared() / two_rho2).exp()
    })
}

/// Mean squared amplitude.
pub fn signal_power<T: Real>(x: &DVector<T>) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.norm_squared() / T::of_usize(x.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedSignal<T: Real> {
    pub noisy: DVector<T>,
    pub achieved_snr_db: f64,
    /// Power of the rescaled noise actually added.
    pub noise_power: T,
    /// Factor applied to the raw noise.
    pub noise_scale: T,
}

/// Rescales `noise` so the mixture has exactly `snr_db` and returns
/// `clean + α·noise`.
pub fn mix_at_snr<T: Real>(
    clean: &DVector<T>,
    noise: &DVector<T>,
    snr_db: f64,
) -> Result<MixedSignal<T>> {
    if clean.len() != noise.len() {
        return Err(Error::Shape(format!(
            "clean signal has {} samples, noise has {}",
            clean.len(),
            noise.len()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Degenerate(format!(
            "SNR must be finite, got {snr_db}"
        )));
    }
    let ps = signal_power(clean);
    let pn = signal_power(noise);
    if !(ps > T::zero()) {
        return Err(Error::Degenerate("clean signal is zero".into()));
    }
    if !(pn > T::zero()) {
        return Err(Error::Degenerate("noise is zero".into()));
    }
    let ratio = T::lit(10f64.powf(snr_db / 10.0));
    let alpha = (ps / (pn * ratio)).sqrt();
    let scaled = noise * alpha;
    let noise_power = signal_power(&scaled);
    let achieved_snr_db = 10.0 * (ps.as_f64() / noise_power.as_f64()).log10();
    Ok(MixedSignal {
        noisy: clean + scaled,
        achieved_snr_db,
        noise_power,
        noise_scale: alpha,
    })
}

#[derive(Clone, Debug)]
pub enum NoiseKind<T: Real> {
    GaussianIid,
    RealisticCovariance(CovarianceFactor<T>),
}

impl<T: Real> NoiseKind<T> {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::GaussianIid => "gaussian",
            NoiseKind::RealisticCovariance(_) => "realistic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoiseSpec<T: Real> {
    pub kind: NoiseKind<T>,
    pub snr_db: f64,
    pub seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn draw(&self, m: usize) -> Result<DVector<T>> {
        match &self.kind {
            NoiseKind::GaussianIid => Ok(gaussian_noise(m, self.seed)),
            NoiseKind::RealisticCovariance(f) => {
                if f.dim() != m {
                    return Err(Error::Shape(format!(
                        "noise covariance is {0}×{0} for {m} sensors",
                        f.dim()
                    )));
                }
                Ok(f.sample(self.seed))
            }
        }
    }
}

/// One synthetic observation and everything needed to score it.
#[derive(Clone, Debug)]
pub struct TrialRecord<T: Real> {
    pub true_source: SourceEstimate<T>,
    pub clean_sensors: DVector<T>,
    pub noisy_sensors: DVector<T>,
    pub noise_spec: NoiseSpec<T>,
    pub achieved_snr_db: f64,
    /// Mean squared amplitude of the added noise.
    pub noise_power: T,
}

/// `y = K x + ε` with ε drawn per `spec` and scaled to `spec.snr_db`.
pub fn make_trial<T: Real>(
    fm: &ForwardModel<T>,
    source: &SourceEstimate<T>,
    spec: &NoiseSpec<T>,
) -> Result<TrialRecord<T>> {
    let clean = fm.project(source)?;
    let noise = spec.draw(fm.n_sensors())?;
    let mixed = mix_at_snr(&clean, &noise, spec.snr_db)?;
    Ok(TrialRecord {
        true_source: source.clone(),
        clean_sensors: clean,
        noisy_sensors: mixed.noisy,
        noise_spec: spec.clone(),
        achieved_snr_db: mixed.achieved_snr_db,
        noise_power: mixed.noise_power,
    })
}

impl<T: Real> TrialRecord<T> {
    /// Writes `source.vec`, `clean.vec`, `noisy.vec` and `manifest.txt`.
    pub fn write_archive(&self, dir: &Path, format: MatrixFormat) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.true_source.save(&dir.join("source.vec"), format)?;
        write_vector(&dir.join("clean.vec"), &self.clean_sensors, format)?;
        write_vector(&dir.join("noisy.vec"), &self.noisy_sensors, format)?;
        let mut m = Manifest::new();
        m.set("noise_kind", self.noise_spec.kind.label())
            .set("snr_db", self.noise_spec.snr_db)
            .set("seed", self.noise_spec.seed)
            .set("achieved_snr_db", self.achieved_snr_db)
            .set("noise_power", self.noise_power.as_f64())
            .set("source_provenance", self.true_source.provenance())
            .set("n_sensors", self.clean_sensors.len())
            .set("n_sources", self.true_source.len());
        m.write(&dir.join("manifest.txt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{analytic_leadfield, fibonacci_sensors};
    use crate::mesh::make_icosphere;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn patch_center_and_half_width() {
        let mesh = make_icosphere::<f64>(3, 70.0).unwrap();
        let src = patch_source(&mesh, 5, 20.0, 3.0).unwrap();
        assert_eq!(src.values()[5], 3.0);
        let d = mesh.geodesic_distances(5).unwrap();
        for (v, &di) in src.values().iter().zip(&d) {
            let expect = 3.0 * (-4.0 * std::f64::consts::LN_2 * di * di / 400.0).exp();
            assert_relative_eq!(*v, expect, max_relative = 1e-12);
        }
        // FWHM definition, evaluated through the same kernel at d = fwhm/2.
        let k = -4.0 * std::f64::consts::LN_2 / 400.0;
        assert_relative_eq!((k * 100.0f64).exp(), 0.5, max_relative = 1e-15);
        assert!(matches!(
            patch_source(&mesh, 5, 0.0, 1.0),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            patch_source(&mesh, 10_000, 1.0, 1.0),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn wider_patches_carry_more_mass() {
        let mesh = make_icosphere::<f64>(3, 1.0).unwrap();
        let narrow: f64 = patch_source(&mesh, 0, 0.3, 1.0).unwrap().values().sum();
        let wide: f64 = patch_source(&mesh, 0, 0.6, 1.0).unwrap().values().sum();
        assert!(wide > narrow);
    }

    #[test]
    fn unreachable_vertices_get_zero() {
        let a = make_icosphere::<f64>(1, 1.0).unwrap();
        let b = a.map_vertices(|v| v + Vector3::new(5.0, 0.0, 0.0)).unwrap();
        let both = a.union(&b).unwrap();
        let src = patch_source(&both, 0, 100.0, 1.0).unwrap();
        assert!(src.values().rows(42, 42).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn source_map_import() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = make_icosphere::<f64>(0, 1.0).unwrap();
        let path = dir.path().join("map.vec");
        std::fs::write(&path, "0\n".repeat(12)).unwrap();
        let s = import_source_map(&path, &mesh).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert_eq!(s.provenance(), &Provenance::FileImport);
        std::fs::write(&path, "0\n".repeat(11)).unwrap();
        assert!(matches!(
            import_source_map(&path, &mesh),
            Err(Error::Shape(_))
        ));
        let patch = patch_source(&mesh, 3, 1.0, 2.0).unwrap();
        patch.save(&path, MatrixFormat::Csv).unwrap();
        let back = import_source_map(&path, &mesh).unwrap();
        assert_eq!(back.values(), patch.values());
    }

    #[test]
    fn gaussian_noise_is_deterministic_and_standard() {
        assert_eq!(gaussian_noise::<f64>(8, 7), gaussian_noise::<f64>(8, 7));
        assert_ne!(gaussian_noise::<f64>(8, 7), gaussian_noise::<f64>(8, 8));
        let n = 1_000_000;
        let x = gaussian_noise::<f64>(n, 2024);
        let mean = x.sum() / n as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        // 3σ Monte Carlo bounds are ≈0.003 and ≈0.0042.
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn identity_covariance_reproduces_gaussian_noise() {
        let eye = DMatrix::<f64>::identity(6, 6);
        for norm in [
            CovarianceNormalization::Correlation,
            CovarianceNormalization::None,
        ] {
            assert_eq!(
                realistic_noise(&eye, norm, 11).unwrap(),
                gaussian_noise::<f64>(6, 11)
            );
        }
    }

    #[test]
    fn diagonal_covariance_after_correlation_is_identity() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let f = CovarianceFactor::new(&cov, CovarianceNormalization::Correlation).unwrap();
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for s in 0..n {
            let x = f.sample(s);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc[(0, 0)] - 1.0).abs() < 0.05);
        assert!((acc[(1, 1)] - 1.0).abs() < 0.05);
        assert!(acc[(0, 1)].abs() < 0.05);
        // Without normalisation the variances are kept.
        let raw = CovarianceFactor::new(&cov, CovarianceNormalization::None).unwrap();
        let mut v0 = 0.0;
        for s in 0..n {
            v0 += raw.sample(s)[0].powi(2);
        }
        assert!((v0 / n as f64 - 4.0).abs() < 0.2);
    }

    #[test]
    fn rank_one_covariance_samples_are_parallel() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let cov = &v * v.transpose();
        let f = CovarianceFactor::new(&cov, CovarianceNormalization::None).unwrap();
        for s in 0..20 {
            let x = f.sample(s);
            let cos: f64 = x.dot(&v) / (x.norm() * v.norm());
            assert_relative_eq!(cos.abs(), 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            CovarianceFactor::new(&cov, CovarianceNormalization::None),
            Err(Error::LinAlg(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(
            CovarianceFactor::new(&asym, CovarianceNormalization::None),
            Err(Error::LinAlg(_))
        ));
    }

    #[test]
    fn snr_examples() {
        let clean = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let noise = gaussian_noise::<f64>(4, 3);
        let ps = signal_power(&clean);
        let zero_db = mix_at_snr(&clean, &noise, 0.0).unwrap();
        assert_relative_eq!(zero_db.noise_power, ps, max_relative = 1e-12);
        let plus20 = mix_at_snr(&clean, &noise, 20.0).unwrap();
        assert_relative_eq!(plus20.noise_power, ps / 100.0, max_relative = 1e-12);
        let minus20 = mix_at_snr(&clean, &noise, -20.0).unwrap();
        assert_relative_eq!(minus20.noise_power, 100.0 * ps, max_relative = 1e-12);
        let diff = &minus20.noisy - &clean;
        assert_relative_eq!(signal_power(&diff), 100.0 * ps, max_relative = 1e-12);
        assert!(matches!(
            mix_at_snr(&DVector::zeros(4), &noise, 0.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            mix_at_snr(&clean, &DVector::zeros(4), 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn trials_are_deterministic() {
        let mesh = make_icosphere::<f64>(2, 70.0).unwrap();
        let fm = analytic_leadfield(
            &mesh,
            fibonacci_sensors(32, &Vector3::zeros(), 90.0, false),
            3.3e-4,
        )
        .unwrap();
        let src = patch_source(&mesh, 10, 25.0, 1.0).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::GaussianIid,
            snr_db: 5.0,
            seed: 99,
        };
        let a = make_trial(&fm, &src, &spec).unwrap();
        let b = make_trial(&fm, &src, &spec).unwrap();
        assert_eq!(a.noisy_sensors, b.noisy_sensors);
        assert_eq!(a.achieved_snr_db.to_bits(), b.achieved_snr_db.to_bits());
        let zero = SourceEstimate::new(
            DVector::zeros(mesh.n_vertices()),
            Provenance::PatchSynthetic,
        );
        assert!(matches!(
            make_trial(&fm, &zero, &spec),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }

    proptest! {
        #[test]
        fn achieved_snr_matches_request(snr in -20.0f64..20.0, seed in any::<u64>()) {
            let clean = gaussian_noise::<f64>(16, seed ^ 1) * 3.0;
            let noise = gaussian_noise::<f64>(16, seed);
            let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
            prop_assert!((mixed.achieved_snr_db - snr).abs() < 1e-6);
        }
    }
}
