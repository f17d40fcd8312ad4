//! The SNR-sweep benchmark: every (method, noise kind, SNR, trial) cell is
//! simulated, solved and scored. Cells run on a rayon pool; results are
//! written by one thread in grid order, so the long CSV depends only on the
//! configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use esi_core::formats::{write_vector, Manifest, MatrixFormat};
use esi_core::inverse::{solve, Method};
use esi_core::metrics::{evaluate, EvaluationReport};
use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{BenchmarkConfig, PatchCenters, SourceSpec};
use crate::error::{CliError, CliResult};
use crate::report::{summarize, write_summary, ConditionSummary, ResultRow, RESULT_COLUMNS};
use crate::setup::Setup;

/// One scored cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub method: Method,
    pub noise: &'static str,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub beta_used: Option<f64>,
    pub report: Option<EvaluationReport>,
    pub wall_ms: f64,
    /// `ok`, or `error: <message>`.
    pub status: String,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.report.is_some()
    }
}

#[derive(Debug)]
pub struct BenchmarkOutcome {
    /// In grid order: method, then noise kind, SNR and trial.
    pub cells: Vec<CellResult>,
    pub summary: Vec<ConditionSummary>,
    pub results_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub n_failed: usize,
}

pub fn family_and_size(setup: &Setup, method: Method) -> (String, usize) {
    match setup.basis_for(method) {
        Some(b) => (b.family().name().to_string(), b.count()),
        None => ("none".to_string(), setup.mesh.n_vertices()),
    }
}

/// The true map and, per method, the estimate (absent when the solve failed).
type SampledMaps = (DVector<f64>, Vec<Option<DVector<f64>>>);

struct TrialOutput {
    cells: Vec<CellResult>,
    maps: Option<SampledMaps>,
}

fn run_trial(
    setup: &Setup,
    noise: usize,
    snr_db: f64,
    trial: usize,
    keep_maps: bool,
) -> TrialOutput {
    let label = setup.noise_kinds[noise].0.label();
    let seed = setup.trial_seed(trial);
    let blank = |method: Method, status: String| CellResult {
        method,
        noise: label,
        snr_db,
        trial,
        seed,
        beta_used: None,
        report: None,
        wall_ms: 0.0,
        status,
    };
    let record = match setup.trial(noise, snr_db, trial) {
        Ok(r) => r,
        Err(e) => {
            return TrialOutput {
                cells: setup
                    .solvers
                    .iter()
                    .map(|s| blank(s.method, format!("error: {e}")))
                    .collect(),
                maps: None,
            }
        }
    };
    let threshold = setup.config.benchmark.threshold_frac;
    let mut cells = Vec::with_capacity(setup.solvers.len());
    let mut maps = Vec::new();
    for config in &setup.solvers {
        let method = config.method;
        let start = Instant::now();
        let solved = solve(
            config,
            &record.noisy_sensors,
            &setup.forward,
            setup.basis_for(method),
            Some(record.noise_power),
        );
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let scored = solved.and_then(|sol| {
            let report = evaluate(&sol.source, &record.true_source, &setup.mesh, threshold)?;
            Ok((sol, report))
        });
        match scored {
            Ok((sol, report)) => {
                if keep_maps {
                    maps.push(Some(sol.source.values().clone()));
                }
                cells.push(CellResult {
                    beta_used: Some(sol.beta_used),
                    report: Some(report),
                    wall_ms,
                    status: "ok".into(),
                    ..blank(method, String::new())
                });
            }
            Err(e) => {
                warn!("{method}, {label}, {snr_db} dB, trial {trial}: {e}");
                if keep_maps {
                    maps.push(None);
                }
                cells.push(CellResult {
                    wall_ms,
                    ..blank(method, format!("error: {e}"))
                });
            }
        }
    }
    TrialOutput {
        cells,
        maps: keep_maps.then(|| (record.true_source.values().clone(), maps)),
    }
}

/// Runs every cell. `jobs = 0` uses rayon's default thread count.
pub fn run_cells(setup: &Setup, jobs: usize) -> CliResult<(Vec<CellResult>, Vec<TrialMaps>)> {
    let cfg = &setup.config;
    let grid: Vec<(usize, usize, usize)> = (0..setup.noise_kinds.len())
        .flat_map(|k| {
            (0..cfg.noise.snr_db.len())
                .flat_map(move |s| (0..cfg.benchmark.trials).map(move |t| (k, s, t)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Data(format!("cannot start worker pool: {e}")))?;
    info!(
        "{} trials × {} methods on {} thread(s)",
        grid.len(),
        setup.solvers.len(),
        pool.current_num_threads()
    );
    let outputs: Vec<TrialOutput> = pool.install(|| {
        grid.par_iter()
            .map(|&(k, s, t)| {
                run_trial(
                    setup,
                    k,
                    cfg.noise.snr_db[s],
                    t,
                    t < cfg.benchmark.sample_maps,
                )
            })
            .collect()
    });

    let n_methods = setup.solvers.len();
    let mut cells = Vec::with_capacity(grid.len() * n_methods);
    for m in 0..n_methods {
        cells.extend(outputs.iter().map(|o| o.cells[m].clone()));
    }
    let maps = grid
        .iter()
        .zip(outputs)
        .filter_map(|(&(k, s, t), o)| {
            o.maps.map(|(truth, estimates)| TrialMaps {
                noise: setup.noise_kinds[k].0.label(),
                snr_db: cfg.noise.snr_db[s],
                trial: t,
                truth,
                estimates: setup
                    .solvers
                    .iter()
                    .map(|c| c.method)
                    .zip(estimates)
                    .collect(),
            })
        })
        .collect();
    Ok((cells, maps))
}

/// Per-vertex maps of one sampled trial.
pub struct TrialMaps {
    pub noise: &'static str,
    pub snr_db: f64,
    pub trial: usize,
    pub truth: DVector<f64>,
    pub estimates: Vec<(Method, Option<DVector<f64>>)>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results(path: &Path, setup: &Setup, cells: &[CellResult]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    let record_time = setup.config.benchmark.record_wall_time;
    for c in cells {
        let (family, s) = family_and_size(setup, c.method);
        let r = c.report.as_ref();
        w.write_record([
            c.method.name().to_string(),
            family,
            s.to_string(),
            c.noise.to_string(),
            c.snr_db.to_string(),
            c.trial.to_string(),
            c.seed.to_string(),
            opt(c.beta_used),
            opt(r.map(|r| r.se)),
            opt(r.map(|r| r.mcc)),
            opt(r.map(|r| r.le_mm)),
            opt(r.map(|r| r.sd_mm)),
            if record_time {
                c.wall_ms.to_string()
            } else {
                String::new()
            },
            c.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn result_rows(setup: &Setup, cells: &[CellResult]) -> Vec<ResultRow> {
    cells
        .iter()
        .map(|c| {
            let (family, s) = family_and_size(setup, c.method);
            ResultRow {
                method: c.method.name().to_string(),
                family,
                s: s.to_string(),
                noise: c.noise.to_string(),
                snr_db: c.snr_db,
                metrics: c.report.as_ref().map(|r| [r.se, r.mcc, r.le_mm, r.sd_mm]),
            }
        })
        .collect()
}

fn write_timings(path: &Path, setup: &Setup, cells: &[CellResult]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "solves", "mean_wall_ms", "total_wall_ms"])?;
    for config in &setup.solvers {
        let times: Vec<f64> = cells
            .iter()
            .filter(|c| c.method == config.method)
            .map(|c| c.wall_ms)
            .collect();
        let total: f64 = times.iter().sum();
        w.write_record([
            config.method.name().to_string(),
            times.len().to_string(),
            (total / times.len().max(1) as f64).to_string(),
            total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn write_maps(dir: &Path, maps: &[TrialMaps], format: MatrixFormat) -> CliResult<()> {
    for m in maps {
        let d = dir
            .join(m.noise)
            .join(format!("snr_{}", m.snr_db))
            .join(format!("trial_{}", m.trial));
        fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        write_vector(&d.join("truth.vec"), &m.truth, format)?;
        for (method, est) in &m.estimates {
            if let Some(v) = est {
                write_vector(&d.join(format!("{}.vec", method.name())), v, format)?;
            }
        }
    }
    Ok(())
}

/// Run description written next to the results; `report` copies it into
/// the header of every data file.
pub fn run_manifest(setup: &Setup) -> Manifest {
    let c: &BenchmarkConfig = &setup.config;
    let mut m = Manifest::new();
    m.set("n_vertices", setup.mesh.n_vertices())
        .set("n_sensors", setup.forward.n_sensors())
        .set("mesh_fingerprint", setup.mesh.fingerprint())
        .set(
            "methods",
            c.methods
                .methods
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
        )
        .set("beta_rule", format!("{:?}", c.methods.beta))
        .set("epsilon_frac", c.methods.epsilon_frac)
        .set("whiten", c.methods.whiten)
        .set(
            "noise_kinds",
            c.noise
                .kinds
                .iter()
                .map(|k| k.label())
                .collect::<Vec<_>>()
                .join(","),
        )
        .set(
            "snr_db",
            c.noise
                .snr_db
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        )
        .set("trials_per_condition", c.benchmark.trials)
        .set("base_seed", c.benchmark.seed)
        .set("threshold_frac", c.benchmark.threshold_frac)
        .set(
            "assumption_noise_seed",
            "trial t uses seed derive_seed(base_seed, t) for every SNR and noise kind",
        );
    for (method, b) in &setup.bases {
        m.set(
            format!("basis_{}", method.name()),
            format!("{} x {}", b.family(), b.count()),
        );
    }
    match &c.source {
        SourceSpec::Patch {
            centers,
            fwhm_mm,
            amplitude,
        } => {
            m.set("source", "gaussian patch")
                .set("fwhm_mm", fwhm_mm)
                .set("amplitude", amplitude);
            let how = match centers {
                PatchCenters::Fixed(_) => "configured centres, cycled over trials",
                PatchCenters::Random(_) => "distinct random centres, cycled over trials",
            };
            m.set("assumption_patch_centers", how);
            if let Some(list) = &setup.centers {
                m.set(
                    "patch_centers",
                    list.iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(","),
                );
            }
        }
        SourceSpec::Import { paths } => {
            m.set("source", "imported maps, cycled over trials")
                .set("n_source_maps", paths.len());
        }
    }
    if c.noise
        .kinds
        .iter()
        .any(|k| matches!(k, crate::config::NoiseKindName::Realistic))
    {
        m.set(
            "noise_normalization",
            format!("{:?}", c.noise.normalization),
        );
        match &c.noise.covariance {
            Some(p) => m.set("noise_covariance", p.display()),
            None => m.set(
                "noise_covariance",
                format!("gaussian kernel, rho = {} mm", c.noise.kernel_rho_mm),
            ),
        };
    }
    m
}

/// Runs the benchmark and writes `results.csv`, `summary.csv`,
/// `timings.csv`, `manifest.txt` and, when requested, `maps/`.
///
/// Fails only when every cell failed.
pub fn run_benchmark(setup: &Setup, out_dir: &Path, jobs: usize) -> CliResult<BenchmarkOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let (cells, maps) = run_cells(setup, jobs)?;
    let results_csv = out_dir.join("results.csv");
    let summary_csv = out_dir.join("summary.csv");
    write_results(&results_csv, setup, &cells)?;
    let summary = summarize(&result_rows(setup, &cells));
    write_summary(&summary_csv, &summary)?;
    write_timings(&out_dir.join("timings.csv"), setup, &cells)?;
    run_manifest(setup).write(&out_dir.join("manifest.txt"))?;
    if !maps.is_empty() {
        write_maps(&out_dir.join("maps"), &maps, setup.config.output.format)?;
    }
    let n_failed = cells.iter().filter(|c| !c.is_ok()).count();
    if n_failed > 0 {
        warn!("{n_failed} of {} cells failed", cells.len());
    }
    if n_failed == cells.len() {
        return Err(CliError::Numeric(format!(
            "all {} benchmark cells failed",
            cells.len()
        )));
    }
    Ok(BenchmarkOutcome {
        cells,
        summary,
        results_csv,
        summary_csv,
        n_failed,
    })
}
