//! Reconstruction quality metrics.
//!
//! * Shape error: total-variation distance between the L1-normalised
//!   absolute maps, in `[0, 1]`.
//! * Correlation: Pearson correlation over vertices.
//! * Localisation error: geodesic distance between the peaks of `|x|`.
//! * Source divergence: mean geodesic distance from each vertex active in
//!   the estimate to the nearest vertex active in the truth, where a vertex
//!   is active when `|xᵢ| ≥ threshold · max |x|`.
//!
//! Distances are along mesh edges, in mesh units (mm for cortical meshes).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::simulate::SourceEstimate;

pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluationReport {
    pub se: f64,
    pub mcc: f64,
    pub le_mm: f64,
    pub sd_mm: f64,
    pub threshold_frac: f64,
}

fn check_pair<T: Real>(est: &DVector<T>, truth: &DVector<T>) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::Shape(format!(
            "estimate has {} values, truth has {}",
            est.len(),
            truth.len()
        )));
    }
    for (name, v) in [("estimate", est), ("truth", truth)] {
        if v.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::Numerical(format!("{name} has non-finite values")));
        }
        if v.iter().all(|x| *x == T::zero()) {
            return Err(Error::Degenerate(format!("{name} is identically zero")));
        }
    }
    Ok(())
}

/// Index of the largest `|xᵢ|`, lowest index on ties.
pub fn peak_index<T: Real>(x: &DVector<T>) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

pub fn shape_error<T: Real>(est: &SourceEstimate<T>, truth: &SourceEstimate<T>) -> Result<f64> {
    shape_error_values(est.values(), truth.values())
}

pub fn shape_error_values<T: Real>(est: &DVector<T>, truth: &DVector<T>) -> Result<f64> {
    check_pair(est, truth)?;
    let se: f64 = est.iter().map(|v| v.as_f64().abs()).sum();
    let st: f64 = truth.iter().map(|v| v.as_f64().abs()).sum();
    let tv: f64 = est
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (e.as_f64().abs() / se - t.as_f64().abs() / st).abs())
        .sum();
    Ok((0.5 * tv).clamp(0.0, 1.0))
}

pub fn mean_corr<T: Real>(est: &SourceEstimate<T>, truth: &SourceEstimate<T>) -> Result<f64> {
    mean_corr_values(est.values(), truth.values())
}

pub fn mean_corr_values<T: Real>(est: &DVector<T>, truth: &DVector<T>) -> Result<f64> {
    check_pair(est, truth)?;
    let n = est.len() as f64;
    let me = est.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let mt = truth.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let (mut cov, mut ve, mut vt) = (0.0, 0.0, 0.0);
    for (e, t) in est.iter().zip(truth.iter()) {
        let de = e.as_f64() - me;
        let dt = t.as_f64() - mt;
        cov += de * dt;
        ve += de * de;
        vt += dt * dt;
    }
    if !(ve > 0.0) || !(vt > 0.0) {
        return Err(Error::Degenerate("correlation of a constant map".into()));
    }
    Ok((cov / (ve.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

fn check_mesh<T: Real>(x: &DVector<T>, mesh: &TriMesh<T>) -> Result<()> {
    if x.len() != mesh.n_vertices() {
        return Err(Error::Shape(format!(
            "map has {} values, mesh has {} vertices",
            x.len(),
            mesh.n_vertices()
        )));
    }
    Ok(())
}

pub fn localization_error<T: Real>(
    est: &SourceEstimate<T>,
    truth: &SourceEstimate<T>,
    mesh: &TriMesh<T>,
) -> Result<f64> {
    localization_error_values(est.values(), truth.values(), mesh)
}

/// Infinite when the two peaks lie on different connected components.
pub fn localization_error_values<T: Real>(
    est: &DVector<T>,
    truth: &DVector<T>,
    mesh: &TriMesh<T>,
) -> Result<f64> {
    check_pair(est, truth)?;
    check_mesh(est, mesh)?;
    let (pe, pt) = (peak_index(est), peak_index(truth));
    if pe == pt {
        return Ok(0.0);
    }
    Ok(mesh.geodesic_distances(pt)?[pe].as_f64())
}

/// Vertices with `|xᵢ| ≥ threshold_frac · max |x|`.
pub fn active_set<T: Real>(x: &DVector<T>, threshold_frac: f64) -> Vec<usize> {
    let cut = x[peak_index(x)].as_f64().abs() * threshold_frac;
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.as_f64().abs() >= cut)
        .map(|(i, _)| i)
        .collect()
}

pub fn source_divergence<T: Real>(
    est: &SourceEstimate<T>,
    truth: &SourceEstimate<T>,
    mesh: &TriMesh<T>,
    threshold_frac: f64,
) -> Result<f64> {
    source_divergence_values(est.values(), truth.values(), mesh, threshold_frac)
}

pub fn source_divergence_values<T: Real>(
    est: &DVector<T>,
    truth: &DVector<T>,
    mesh: &TriMesh<T>,
    threshold_frac: f64,
) -> Result<f64> {
    check_pair(est, truth)?;
    check_mesh(est, mesh)?;
    if !(threshold_frac > 0.0 && threshold_frac <= 1.0) {
        return Err(Error::Numerical(format!(
            "activation threshold must be in (0, 1], got {threshold_frac}"
        )));
    }
    let dist = mesh.geodesic_distances_from(&active_set(truth, threshold_frac))?;
    let est_active = active_set(est, threshold_frac);
    let total: f64 = est_active.iter().map(|&i| dist[i].as_f64()).sum();
    Ok(total / est_active.len() as f64)
}

/// All four metrics for one reconstruction.
pub fn evaluate<T: Real>(
    est: &SourceEstimate<T>,
    truth: &SourceEstimate<T>,
    mesh: &TriMesh<T>,
    threshold_frac: f64,
) -> Result<EvaluationReport> {
    Ok(EvaluationReport {
        se: shape_error(est, truth)?,
        mcc: mean_corr(est, truth)?,
        le_mm: localization_error(est, truth, mesh)?,
        sd_mm: source_divergence(est, truth, mesh, threshold_frac)?,
        threshold_frac,
    })
}
