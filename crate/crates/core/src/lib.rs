//! Stationary transport of weakly interacting bosons through a disordered
//! slab: a nonlinear Boltzmann (ladder) solver for the incoherent density
//! and a linear crossed solver for the coherent-backscattering signal on top
//! of it.
//!
//! Units throughout: energies in E_i (the incident energy), lengths in the
//! disorder mean free path, densities in the incident density.

pub mod crossed;
pub mod exec;
pub mod grid;
pub mod kernels;
pub mod ladder;
pub mod linalg;
pub mod quadrature;
pub mod special;

mod error;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use grid::{EnergyGrid, SpatialGrid, SpectralField};
pub use kernels::InteractionParams;
