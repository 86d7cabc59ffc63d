//! Models for a fiber-based Fabry-Perot microcavity coupled to solid-state
//! emitters: planar coating optics, cavity mode geometry, dipole emission in
//! layered media, slab confinement in nanocrystals, and photon statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod dipole_ldos;
pub mod error;
pub mod fit;
pub mod material;
pub mod multilayer;
pub mod photostats;
pub mod quadrature;
pub mod reproduce;
pub mod roots;
pub mod waveguide;

pub use error::{Error, Result};
