//! Pseudo-spectral solver and verification harness for a diffuse-interface
//! vesicle membrane coupled to incompressible flow on a periodic box.
//!
//! The model couples the Navier-Stokes equations to a fourth-order relaxation
//! of a penalized bending energy:
//!
//!   u_t + (u . grad) u + grad P = mu lap u + dE/dphi * grad phi
//!   div u = 0
//!   phi_t + u . grad phi = -gamma dE/dphi
//!
//! where `E` is a bending energy of the phase field `phi` with quadratic
//! penalties keeping its enclosed volume and interfacial area near target
//! values. The crate provides the spectral substrate (`grid`, `field`, `fft`,
//! `ops`, `norms`), the energy model (`energy`), IMEX time steppers and a
//! stationary-state solver (`dynamics`), structural diagnostics
//! (`diagnostics`), scripted verification experiments (`experiments`), and
//! config / checkpoint / CSV plumbing for the `vesiflow` binary (`config`,
//! `checkpoint`, `csvio`, `report`).

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod diagnostics;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod grid;
pub mod initial;
pub mod norms;
pub mod ops;
pub mod report;

pub use error::{Error, Result};
pub use field::{ScalarField, SpectralField, VectorField};
pub use grid::Grid;
