//! Lead fields: file ingestion, an analytic dipole model, and projection.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::formats::read_matrix;
use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::simulate::SourceEstimate;

/// Brain-tissue order conductivity in S/mm.
pub const DEFAULT_CONDUCTIVITY: f64 = 3.3e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrientationMode {
    /// One dipole per vertex along the surface normal.
    FixedNormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sensor<T: Real> {
    pub name: String,
    pub position: Vector3<T>,
}

/// Lead-field matrix `K` (M sensors × N sources) with its geometry.
#[derive(Clone, Debug)]
pub struct ForwardModel<T: Real> {
    leadfield: DMatrix<T>,
    sensors: Vec<Sensor<T>>,
    source_positions: Vec<Vector3<T>>,
    orientation: OrientationMode,
}

/// Structural oddities in a lead field that are worth a warning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeadfieldWarning {
    DeadSensor(usize),
    InvisibleSource(usize),
}

impl<T: Real> ForwardModel<T> {
    /// Wraps an existing lead field. `source_positions` may be empty when the
    /// source geometry is unknown; see [`ForwardModel::paired_with`].
    pub fn new(
        leadfield: DMatrix<T>,
        sensors: Vec<Sensor<T>>,
        source_positions: Vec<Vector3<T>>,
    ) -> Result<Self> {
        if sensors.len() != leadfield.nrows() {
            return Err(Error::Shape(format!(
                "{} sensors for a lead field with {} rows",
                sensors.len(),
                leadfield.nrows()
            )));
        }
        if !source_positions.is_empty() && source_positions.len() != leadfield.ncols() {
            return Err(Error::Shape(format!(
                "{} source positions for a lead field with {} columns",
                source_positions.len(),
                leadfield.ncols()
            )));
        }
        if leadfield.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::Numerical("lead field has non-finite entries".into()));
        }
        let fm = Self {
            leadfield,
            sensors,
            source_positions,
            orientation: OrientationMode::FixedNormal,
        };
        for w in fm.warnings() {
            log::warn!("lead field: {w:?}");
        }
        Ok(fm)
    }

    pub fn leadfield(&self) -> &DMatrix<T> {
        &self.leadfield
    }

    pub fn sensors(&self) -> &[Sensor<T>] {
        &self.sensors
    }

    pub fn sensor_positions(&self) -> Vec<Vector3<T>> {
        self.sensors.iter().map(|s| s.position).collect()
    }

    pub fn source_positions(&self) -> &[Vector3<T>] {
        &self.source_positions
    }

    pub fn orientation(&self) -> OrientationMode {
        self.orientation
    }

    pub fn n_sensors(&self) -> usize {
        self.leadfield.nrows()
    }

    pub fn n_sources(&self) -> usize {
        self.leadfield.ncols()
    }

    /// Checks the source count against a mesh and records its vertices as
    /// source positions.
    pub fn paired_with(mut self, mesh: &TriMesh<T>) -> Result<Self> {
        if mesh.n_vertices() != self.n_sources() {
            return Err(Error::Shape(format!(
                "lead field has {} sources but the mesh has {} vertices",
                self.n_sources(),
                mesh.n_vertices()
            )));
        }
        self.source_positions = mesh.vertices().to_vec();
        Ok(self)
    }

    pub fn warnings(&self) -> Vec<LeadfieldWarning> {
        let mut out = Vec::new();
        for (i, row) in self.leadfield.row_iter().enumerate() {
            if row.iter().all(|v| *v == T::zero()) {
                out.push(LeadfieldWarning::DeadSensor(i));
            }
        }
        for (j, col) in self.leadfield.column_iter().enumerate() {
            if col.iter().all(|v| *v == T::zero()) {
                out.push(LeadfieldWarning::InvisibleSource(j));
            }
        }
        out
    }

    /// `K x`.
    pub fn project(&self, x: &SourceEstimate<T>) -> Result<DVector<T>> {
        self.project_values(x.values())
    }

    pub fn project_values(&self, x: &DVector<T>) -> Result<DVector<T>> {
        if x.len() != self.n_sources() {
            return Err(Error::Shape(format!(
                "source vector of length {} for {} sources",
                x.len(),
                self.n_sources()
            )));
        }
        Ok(&self.leadfield * x)
    }
}

/// Parses sensor metadata: one `name x y z` line per sensor.
pub fn parse_sensor_meta<T: Real>(text: &str) -> Result<Vec<Sensor<T>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(Error::parse(i + 1, "sensor line must be `name x y z`"));
        }
        let mut c = [T::zero(); 3];
        for k in 0..3 {
            c[k] =
                T::lit(t[k + 1].parse::<f64>().map_err(|_| {
                    Error::parse(i + 1, format!("invalid coordinate `{}`", t[k + 1]))
                })?);
        }
        out.push(Sensor {
            name: t[0].to_string(),
            position: Vector3::new(c[0], c[1], c[2]),
        });
    }
    Ok(out)
}

pub fn format_sensor_meta<T: Real>(sensors: &[Sensor<T>]) -> String {
    sensors
        .iter()
        .map(|s| {
            format!(
                "{} {} {} {}\n",
                s.name,
                s.position.x.as_f64(),
                s.position.y.as_f64(),
                s.position.z.as_f64()
            )
        })
        .collect()
}

/// Reads a lead field (MAT-CSV or MAT-BIN, rows = sensors) and its sensor
/// metadata. Values are used verbatim.
pub fn load_leadfield<T: Real>(path: &Path, sensor_meta_path: &Path) -> Result<ForwardModel<T>> {
    let k = read_matrix::<T>(path)?;
    let text = fs::read_to_string(sensor_meta_path).map_err(|e| Error::io(sensor_meta_path, e))?;
    let sensors = parse_sensor_meta(&text)?;
    ForwardModel::new(k, sensors, Vec::new())
}

/// Potential of a unit current dipole at every vertex, oriented along the
/// vertex normal, in an infinite homogeneous conductor:
/// `K[m, i] = pᵢ·(r_m − r_i) / (4πσ ‖r_m − r_i‖³)`.
///
/// Sensors must lie strictly outside the mesh's bounding sphere.
pub fn analytic_leadfield<T: Real>(
    mesh: &TriMesh<T>,
    sensors: Vec<Sensor<T>>,
    conductivity: T,
) -> Result<ForwardModel<T>> {
    if !(conductivity > T::zero()) {
        return Err(Error::Geometry(format!(
            "conductivity must be positive, got {conductivity}"
        )));
    }
    let (center, radius) = mesh.bounding_sphere();
    let eps = T::lit(1e-6);
    for s in &sensors {
        if (s.position - center).norm() <= radius {
            return Err(Error::Geometry(format!(
                "sensor `{}` lies inside the mesh bounding sphere",
                s.name
            )));
        }
    }
    let normals = mesh.vertex_normals();
    let coef = T::one() / (T::lit(4.0 * PI) * conductivity);
    let mut k = DMatrix::zeros(sensors.len(), mesh.n_vertices());
    for (i, (r, p)) in mesh.vertices().iter().zip(&normals).enumerate() {
        for (m, s) in sensors.iter().enumerate() {
            let d = s.position - r;
            let dist = d.norm();
            if dist <= eps {
                return Err(Error::Geometry(format!(
                    "sensor `{}` coincides with source {i}",
                    s.name
                )));
            }
            k[(m, i)] = coef * p.dot(&d) / (dist * dist * dist);
        }
    }
    ForwardModel::new(k, sensors, mesh.vertices().to_vec())
}

/// Dipole potential of a single source, exposed for testing layouts.
pub fn dipole_potential<T: Real>(
    moment: &Vector3<T>,
    source: &Vector3<T>,
    sensor: &Vector3<T>,
    conductivity: T,
) -> T {
    let d = sensor - source;
    let dist = d.norm();
    moment.dot(&d) / (T::lit(4.0 * PI) * conductivity * dist * dist * dist)
}

/// `count` sensors spread over a sphere of `radius` about `center` on a
/// Fibonacci lattice, named `E001`, `E002`, ...
///
/// With `upper_only`, only the z ≥ 0 cap is covered, like a scalp montage.
pub fn fibonacci_sensors<T: Real>(
    count: usize,
    center: &Vector3<T>,
    radius: T,
    upper_only: bool,
) -> Vec<Sensor<T>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let frac = (i as f64 + 0.5) / count as f64;
            let z = if upper_only {
                1.0 - frac
            } else {
                1.0 - 2.0 * frac
            };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = golden * i as f64;
            let dir = Vector3::new(T::lit(r * theta.cos()), T::lit(r * theta.sin()), T::lit(z));
            Sensor {
                name: format!("E{:03}", i + 1),
                position: center + dir * radius,
            }
        })
        .collect()
}
