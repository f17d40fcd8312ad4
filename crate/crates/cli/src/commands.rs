//! The `eigenmodes`, `simulate` and `solve` commands.

use std::fs;
use std::path::{Path, PathBuf};

use esi_core::formats::{read_vector, write_matrix, write_vector, Manifest, MatrixFormat};
use esi_core::inverse::solve as run_solver;
use esi_core::lbo::{assemble_lbo, eigenmodes_with, EigenOptions};
use esi_core::mesh::MAX_ICOSPHERE_SUBDIVISIONS;
use log::{info, warn};

use crate::config::{resolve_path, BenchmarkConfig, MeshSource};
use crate::error::{CliError, CliResult};
use crate::setup::{load_mesh, Setup};

/// `icosphere:<subdivisions>[:<radius_mm>]` or a mesh file path.
pub fn parse_mesh_arg(arg: &str) -> CliResult<MeshSource> {
    if let Some(rest) = arg.strip_prefix("icosphere:") {
        let mut parts = rest.split(':');
        let subdivisions: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|&s| s <= MAX_ICOSPHERE_SUBDIVISIONS)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "`{arg}`: subdivisions must be 0..={MAX_ICOSPHERE_SUBDIVISIONS}"
                ))
            })?;
        let radius_mm = match parts.next() {
            Some(r) => r
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite() && *r > 0.0)
                .ok_or_else(|| {
                    CliError::Usage(format!("`{arg}`: radius must be a positive number"))
                })?,
            None => 1.0,
        };
        if parts.next().is_some() {
            return Err(CliError::Usage(format!(
                "`{arg}`: expected icosphere:<n>[:<radius>]"
            )));
        }
        return Ok(MeshSource::Icosphere {
            subdivisions,
            radius_mm,
        });
    }
    let path = resolve_path(arg, Path::new(".")).map_err(CliError::Data)?;
    Ok(MeshSource::File {
        path,
        hemispheres: None,
    })
}

#[derive(Clone, Debug)]
pub struct EigenmodesOutput {
    pub eigenvalues: PathBuf,
    pub eigenvectors: PathBuf,
    pub manifest: PathBuf,
}

/// Writes `eigenvalues.vec` (ascending, 1/mm²), `eigenvectors.mat` (N×S,
/// one mass-orthonormal mode per column) and `manifest.txt`.
pub fn cmd_eigenmodes(
    mesh: &MeshSource,
    count: usize,
    out_dir: &Path,
    format: MatrixFormat,
    seed: Option<u64>,
) -> CliResult<EigenmodesOutput> {
    if count == 0 {
        return Err(CliError::Usage(
            "the number of eigenmodes must be at least 1".into(),
        ));
    }
    let mesh = load_mesh(mesh)?;
    let lbo = assemble_lbo(&mesh)?;
    let mut options = EigenOptions::default();
    if let Some(seed) = seed {
        options.seed = seed;
    }
    let modes = eigenmodes_with(&lbo, count, &options)?;
    if !modes.mass_orthonormal {
        warn!("eigenvectors failed the mass-orthonormality check");
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let out = EigenmodesOutput {
        eigenvalues: out_dir.join("eigenvalues.vec"),
        eigenvectors: out_dir.join("eigenvectors.mat"),
        manifest: out_dir.join("manifest.txt"),
    };
    write_vector(&out.eigenvalues, &modes.eigenvalues, format)?;
    write_matrix(&out.eigenvectors, &modes.eigenvectors, format)?;
    let mut m = Manifest::new();
    m.set("n_vertices", mesh.n_vertices())
        .set("n_faces", mesh.n_faces())
        .set("n_components", mesh.n_components())
        .set("n_modes", modes.count())
        .set("mesh_fingerprint", mesh.fingerprint())
        .set("mass_orthonormal", modes.mass_orthonormal)
        .set("max_relative_residual", modes.max_relative_residual)
        .set(
            "normalization",
            "mass-orthonormal, largest-magnitude entry positive",
        )
        .set("units", "eigenvalues in 1/mm^2");
    m.write(&out.manifest)?;
    info!("wrote {} modes to {}", modes.count(), out_dir.display());
    Ok(out)
}

/// Writes the trial archive of one benchmark cell: the same source, noise
/// seed and scaling `benchmark` would use.
pub fn cmd_simulate(
    config: BenchmarkConfig,
    out_dir: &Path,
    trial: usize,
    snr_db: Option<f64>,
    noise: Option<&str>,
) -> CliResult<()> {
    if trial >= config.benchmark.trials {
        return Err(CliError::Usage(format!(
            "trial {trial} out of range (config has {} trials)",
            config.benchmark.trials
        )));
    }
    let format = config.output.format;
    let setup = Setup::build(config, true)?;
    let snr = snr_db.unwrap_or(setup.config.noise.snr_db[0]);
    let k = match noise {
        None => 0,
        Some(name) => setup
            .noise_kinds
            .iter()
            .position(|(n, _)| n.label().eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::Usage(format!("noise kind `{name}` is not in the config")))?,
    };
    let record = setup.trial(k, snr, trial)?;
    record.write_archive(out_dir, format)?;
    let mut m = Manifest::read(&out_dir.join("manifest.txt"))?;
    m.set("trial", trial)
        .set("base_seed", setup.config.benchmark.seed);
    if let Some(c) = &setup.centers {
        m.set("patch_center", c[trial % c.len()]);
    }
    m.write(&out_dir.join("manifest.txt"))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    /// Method name and either the written VEC path or the failure message.
    pub results: Vec<(String, Result<PathBuf, String>)>,
    /// Exit code of the first failure, used when nothing succeeded.
    pub first_failure_code: Option<i32>,
}

impl SolveOutcome {
    pub fn succeeded(&self) -> usize {
        self.results.iter().filter(|(_, r)| r.is_ok()).count()
    }
}

/// Accepts a VEC file or a trial archive directory (its `noisy.vec`). The
/// noise power comes from `noise_power` or a `manifest.txt` beside the data.
fn locate_data(data: &Path) -> CliResult<(PathBuf, Option<f64>)> {
    let (file, dir) = if data.is_dir() {
        (data.join("noisy.vec"), data.to_path_buf())
    } else {
        (
            data.to_path_buf(),
            data.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    };
    let manifest = dir.join("manifest.txt");
    let power = if manifest.exists() {
        Manifest::read(&manifest)?
            .get("noise_power")
            .and_then(|v| v.parse::<f64>().ok())
    } else {
        None
    };
    Ok((file, power))
}

/// Solves one measurement with every configured method. Per-method failures
/// are recorded in `solve_manifest.txt`; the call fails only if all failed.
pub fn cmd_solve(
    config: BenchmarkConfig,
    data: &Path,
    out_dir: &Path,
    noise_power: Option<f64>,
) -> CliResult<SolveOutcome> {
    let format = config.output.format;
    let setup = Setup::build(config, false)?;
    let (file, manifest_power) = locate_data(data)?;
    let y = read_vector::<f64>(&file)?;
    if y.len() != setup.forward.n_sensors() {
        return Err(CliError::Core(esi_core::Error::Shape(format!(
            "{} has {} entries for {} sensors",
            file.display(),
            y.len(),
            setup.forward.n_sensors()
        ))));
    }
    let power = noise_power.or(manifest_power);
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut manifest = Manifest::new();
    manifest
        .set("data", file.display())
        .set("n_sensors", y.len());
    if let Some(p) = power {
        manifest.set("noise_power", p);
    }
    let mut outcome = SolveOutcome {
        results: Vec::new(),
        first_failure_code: None,
    };
    for solver in &setup.solvers {
        let name = solver.method.name().to_string();
        let path = out_dir.join(format!("{name}.vec"));
        let result = run_solver(
            solver,
            &y,
            &setup.forward,
            setup.basis_for(solver.method),
            power,
        )
        .and_then(|sol| sol.save(&path, format).map(|_| sol));
        match result {
            Ok(sol) => {
                manifest
                    .set(format!("{name}.status"), "ok")
                    .set(format!("{name}.beta"), sol.beta_used);
                outcome.results.push((name, Ok(path)));
            }
            Err(e) => {
                warn!("{name}: {e}");
                let err = CliError::from(e);
                outcome.first_failure_code.get_or_insert(err.exit_code());
                manifest.set(format!("{name}.status"), format!("error: {err}"));
                outcome.results.push((name, Err(err.to_string())));
            }
        }
    }
    manifest.write(&out_dir.join("solve_manifest.txt"))?;
    Ok(outcome)
}
