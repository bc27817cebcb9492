//! Simulation and diagnostics for parabolic gradient systems
//!
//! ```text
//! u_t = −∇V(u) + Δu,   u(x,t) ∈ R^n,  x ∈ R^d
//! ```
//!
//! on radial or Cartesian grids, together with the energies, firewall
//! functionals, comparison profiles and invasion diagnostics that go with
//! them.

pub mod comparison;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod field;
pub mod firewall;
pub mod potential;
pub mod sampling;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
