//! Turns a validated [`BenchmarkConfig`] into the numerical objects a run
//! needs, and fixes how every trial is seeded.

use std::collections::BTreeMap;

use esi_core::basis::{gbf_basis, harmonic_basis, msp_basis, BasisFamily, BasisSet};
use esi_core::formats::read_matrix;
use esi_core::forward::{analytic_leadfield, fibonacci_sensors, load_leadfield, ForwardModel};
use esi_core::inverse::{Method, SolverConfig};
use esi_core::mesh::{load_mesh_with_sidecar, make_icosphere, MeshFormat, TriMesh};
use esi_core::simulate::{
    derive_seed, gaussian_kernel_covariance, import_source_map, make_trial, patch_source,
    random_patch_centers, CovarianceFactor, NoiseKind, NoiseSpec, SourceEstimate, TrialRecord,
};
use log::info;
use nalgebra::{DMatrix, Vector3};

use crate::config::{
    BenchmarkConfig, LeadfieldSource, MeshSource, NoiseKindName, PatchCenters, SourceSpec,
};
use crate::error::{CliError, CliResult};

/// Seed index reserved for drawing random patch centres; trial noise uses
/// indices `0..trials`.
const SOURCE_STREAM: u64 = u64::MAX;

pub fn load_mesh(source: &MeshSource) -> CliResult<TriMesh<f64>> {
    Ok(match source {
        MeshSource::File { path, hemispheres } => {
            load_mesh_with_sidecar(path, MeshFormat::from_path(path)?, hemispheres.as_deref())?
        }
        MeshSource::Icosphere {
            subdivisions,
            radius_mm,
        } => make_icosphere(*subdivisions, *radius_mm)?,
    })
}

pub fn load_forward(source: &LeadfieldSource, mesh: &TriMesh<f64>) -> CliResult<ForwardModel<f64>> {
    Ok(match source {
        LeadfieldSource::File { path, sensors } => {
            load_leadfield(path, sensors)?.paired_with(mesh)?
        }
        LeadfieldSource::Analytic {
            n_sensors,
            sensor_radius_mm,
            upper_only,
            conductivity,
        } => {
            // The icosphere is centred at the origin by construction; a file
            // mesh gets its sensors around its bounding sphere.
            let (center, _) = mesh.bounding_sphere();
            let center = if center.norm() < 1e-9 {
                Vector3::zeros()
            } else {
                center
            };
            let sensors = fibonacci_sensors(*n_sensors, &center, *sensor_radius_mm, *upper_only);
            analytic_leadfield(mesh, sensors, *conductivity)?
        }
    })
}

/// Everything shared by all cells of a run.
pub struct Setup {
    pub config: BenchmarkConfig,
    pub mesh: TriMesh<f64>,
    pub forward: ForwardModel<f64>,
    pub bases: BTreeMap<Method, BasisSet<f64>>,
    pub solvers: Vec<SolverConfig<f64>>,
    pub noise_kinds: Vec<(NoiseKindName, NoiseKind<f64>)>,
    /// One source per trial index.
    pub sources: Vec<SourceEstimate<f64>>,
    pub centers: Option<Vec<usize>>,
}

impl Setup {
    /// Builds the geometry and bases. `with_sources` is false for `solve`,
    /// which needs no synthetic sources.
    pub fn build(config: BenchmarkConfig, with_sources: bool) -> CliResult<Self> {
        let mesh = load_mesh(&config.mesh)?;
        let forward = load_forward(&config.leadfield, &mesh)?;
        for w in forward.warnings() {
            log::warn!("lead field: {w:?}");
        }
        info!(
            "mesh: {} vertices, {} faces, {} component(s); {} sensors",
            mesh.n_vertices(),
            mesh.n_faces(),
            mesh.n_components(),
            forward.n_sensors()
        );
        let m = forward.n_sensors();
        let solver_cov = match &config.methods.noise_cov {
            Some(p) => Some(square(read_matrix::<f64>(p)?, m, "noise_cov")?),
            None => None,
        };

        let mut bases = BTreeMap::new();
        let b = &config.basis;
        for &method in &config.methods.methods {
            let basis = match method.basis_family() {
                Some(BasisFamily::Gbf) => gbf_basis(&mesh, b.gbf_count, b.gbf_per_hemisphere)?,
                Some(BasisFamily::Harmonic) => {
                    harmonic_basis(&mesh, b.harmonic_degree, b.harmonic_joint)?
                }
                Some(BasisFamily::Msp) => {
                    let cov = solver_cov
                        .clone()
                        .unwrap_or_else(|| DMatrix::identity(m, m));
                    msp_basis(&forward, &cov, b.msp_count, b.msp_weights)?
                }
                _ => continue,
            };
            info!("{method}: {} basis functions", basis.count());
            bases.insert(method, basis);
        }

        let mc = &config.methods;
        let solvers = mc
            .methods
            .iter()
            .map(|&method| SolverConfig {
                noise_cov: solver_cov.clone(),
                whiten: mc.whiten,
                epsilon_frac: mc.epsilon_frac,
                eloreta_tol: mc.eloreta_tol,
                eloreta_max_iter: mc.eloreta_max_iter,
                ..SolverConfig::new(method, mc.beta)
            })
            .collect();

        let mut noise_kinds = Vec::new();
        for &name in &config.noise.kinds {
            let kind = match name {
                NoiseKindName::Gaussian => NoiseKind::GaussianIid,
                NoiseKindName::Realistic => {
                    let cov = match &config.noise.covariance {
                        Some(p) => square(read_matrix::<f64>(p)?, m, "noise covariance")?,
                        None => gaussian_kernel_covariance(
                            &forward.sensor_positions(),
                            config.noise.kernel_rho_mm,
                        ),
                    };
                    NoiseKind::RealisticCovariance(CovarianceFactor::new(
                        &cov,
                        config.noise.normalization,
                    )?)
                }
            };
            noise_kinds.push((name, kind));
        }

        let (sources, centers) = if with_sources {
            build_sources(&config, &mesh)?
        } else {
            (Vec::new(), None)
        };
        Ok(Self {
            config,
            mesh,
            forward,
            bases,
            solvers,
            noise_kinds,
            sources,
            centers,
        })
    }

    /// Noise seed of trial `t`. It does not depend on SNR or noise kind, so
    /// every condition sees the same underlying draws (paired design).
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.config.benchmark.seed, trial as u64)
    }

    pub fn trial(&self, noise: usize, snr_db: f64, trial: usize) -> CliResult<TrialRecord<f64>> {
        let spec = NoiseSpec {
            kind: self.noise_kinds[noise].1.clone(),
            snr_db,
            seed: self.trial_seed(trial),
        };
        Ok(make_trial(&self.forward, &self.sources[trial], &spec)?)
    }

    pub fn basis_for(&self, method: Method) -> Option<&BasisSet<f64>> {
        self.bases.get(&method)
    }
}

fn square(c: DMatrix<f64>, m: usize, what: &str) -> CliResult<DMatrix<f64>> {
    if c.shape() == (m, m) {
        Ok(c)
    } else {
        Err(CliError::Data(format!(
            "{what} is {}×{} for {m} sensors",
            c.nrows(),
            c.ncols()
        )))
    }
}

type Sources = (Vec<SourceEstimate<f64>>, Option<Vec<usize>>);

/// One source per trial index: patches cycle through the configured or
/// randomly drawn centres, imported maps cycle through the file list.
fn build_sources(config: &BenchmarkConfig, mesh: &TriMesh<f64>) -> CliResult<Sources> {
    let trials = config.benchmark.trials;
    match &config.source {
        SourceSpec::Patch {
            centers,
            fwhm_mm,
            amplitude,
        } => {
            let centers = match centers {
                PatchCenters::Fixed(c) => {
                    if let Some(&bad) = c.iter().find(|&&v| v >= mesh.n_vertices()) {
                        return Err(CliError::Data(format!(
                            "patch centre {bad} out of range for {} vertices",
                            mesh.n_vertices()
                        )));
                    }
                    c.clone()
                }
                PatchCenters::Random(count) => random_patch_centers(
                    mesh,
                    *count,
                    derive_seed(config.benchmark.seed, SOURCE_STREAM),
                ),
            };
            let sources = (0..trials)
                .map(|t| patch_source(mesh, centers[t % centers.len()], *fwhm_mm, *amplitude))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((sources, Some(centers)))
        }
        SourceSpec::Import { paths } => {
            let maps = paths
                .iter()
                .map(|p| import_source_map(p, mesh))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((
                (0..trials).map(|t| maps[t % maps.len()].clone()).collect(),
                None,
            ))
        }
    }
}
