//! Noncanonical Hamiltonian systems with degenerate Poisson operators:
//! Casimir invariants, singular leaves and phantom fields, checked numerically
//! on finite-dimensional, 2D vortex and 1D ion acoustic / KdV models.

pub mod dynamics;
pub mod error;
pub mod field;
pub mod finitedim;
pub mod ion_kdv;
pub mod poisson;
pub mod vortex;

pub use error::{Error, Result};
