//! Quantum hydrodynamics with built-in holonomy.
//!
//! The library propagates Schrodinger and Pauli wavefunctions minimally coupled
//! to an internal gauge potential Lambda, evolves closed vortex filaments that
//! source Lambda through a regularized Biot-Savart law, extracts Madelung
//! hydrodynamic diagnostics (density, velocity, quantum potential, circulation,
//! holonomy, helicity, spin density), and integrates regularized
//! Born-Oppenheimer nuclear trajectories on Gaussian-smoothed surfaces.
//!
//! Modules:
//! - [`fields`]: periodic grids, spectral operators, interpolation, loops, snapshots.
//! - [`gauge`]: Biot-Savart construction of Lambda, Helmholtz decomposition,
//!   curvature, and Stokes-flux holonomy.
//! - [`madelung`]: hydrodynamic variables and scalar diagnostics.
//! - [`propagator`]: RK4 time integration of the minimally coupled Schrodinger
//!   and Pauli equations.
//! - [`filament`]: closed discrete curves and the coupled filament/wavefunction
//!   dynamics.
//! - [`born_oppenheimer`]: two-level electronic structure, smoothed surfaces,
//!   and nuclear trajectories.
//! - [`cli`]: scenario configs, deterministic batch runs, and output management.

pub mod born_oppenheimer;
pub mod cli;
pub mod error;
pub mod fields;
pub mod filament;
pub mod gauge;
pub mod madelung;
pub mod propagator;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
