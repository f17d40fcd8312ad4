//! A spherical head phantom: an icosphere cortex inside a concentric
//! sensor shell, with the analytic dipole lead field. Used as the default
//! geometry when no mesh or lead field files are supplied.

use nalgebra::Vector3;

use crate::error::Result;
use crate::forward::{analytic_leadfield, fibonacci_sensors, ForwardModel, DEFAULT_CONDUCTIVITY};
use crate::mesh::{make_icosphere, TriMesh};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPhantom {
    pub subdivisions: u32,
    pub cortex_radius_mm: f64,
    pub sensor_radius_mm: f64,
    pub n_sensors: usize,
    /// Cover only the upper half of the shell, like a scalp cap.
    pub upper_only: bool,
    pub conductivity: f64,
}

impl Default for SphericalPhantom {
    /// 642 vertices at 70 mm, 64 sensors at 95 mm all round.
    fn default() -> Self {
        Self {
            subdivisions: 3,
            cortex_radius_mm: 70.0,
            sensor_radius_mm: 95.0,
            n_sensors: 64,
            upper_only: false,
            conductivity: DEFAULT_CONDUCTIVITY,
        }
    }
}

impl SphericalPhantom {
    pub fn with_subdivisions(subdivisions: u32) -> Self {
        Self {
            subdivisions,
            ..Self::default()
        }
    }

    pub fn mesh<T: Real>(&self) -> Result<TriMesh<T>> {
        make_icosphere(self.subdivisions, T::lit(self.cortex_radius_mm))
    }

    pub fn forward<T: Real>(&self, mesh: &TriMesh<T>) -> Result<ForwardModel<T>> {
        let sensors = fibonacci_sensors(
            self.n_sensors,
            &Vector3::zeros(),
            T::lit(self.sensor_radius_mm),
            self.upper_only,
        );
        analytic_leadfield(mesh, sensors, T::lit(self.conductivity))
    }

    pub fn build<T: Real>(&self) -> Result<(TriMesh<T>, ForwardModel<T>)> {
        let mesh = self.mesh()?;
        let fm = self.forward(&mesh)?;
        Ok((mesh, fm))
    }
}
