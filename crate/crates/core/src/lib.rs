//! Geometric eigenmode basis functions for EEG/MEG source imaging.
//!
//! The crate covers the whole synthetic pipeline: triangle meshes and their
//! Laplace–Beltrami eigenmodes ([`mesh`], [`lbo`]), spatial basis families
//! ([`basis`]), lead fields ([`forward`]), trial simulation at controlled SNR
//! ([`simulate`]), the basis-coefficient MAP estimator and minimum-norm
//! baselines ([`inverse`]), and reconstruction metrics ([`metrics`]).
//!
//! All numerical types are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the precision for the common case.

// Guards are written `!(x > 0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod formats;
pub mod forward;
pub mod harmonics;
pub mod inverse;
pub mod lbo;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TriMesh64 = mesh::TriMesh<f64>;
pub type TriMesh32 = mesh::TriMesh<f32>;
pub type BasisSet64 = basis::BasisSet<f64>;
pub type BasisSet32 = basis::BasisSet<f32>;
pub type ForwardModel64 = forward::ForwardModel<f64>;
pub type ForwardModel32 = forward::ForwardModel<f32>;
pub type SourceEstimate64 = simulate::SourceEstimate<f64>;
pub type SourceEstimate32 = simulate::SourceEstimate<f32>;
pub type InverseSolution64 = inverse::InverseSolution<f64>;
pub type InverseSolution32 = inverse::InverseSolution<f32>;
