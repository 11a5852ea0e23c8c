//! Spectral solvers for first-order elliptic boundary value problems of
//! Dirac type on a cylinder `Y x [0, delta]` and on flat tori, together with
//! numerical checks of the constants in their a priori estimates.

pub mod bvp;
pub mod error;
pub mod fredholm;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mode_ode;
pub mod poincare;
pub mod spectral;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
