//! Adapted multipliers and propagation estimates for discretized
//! Schrödinger operators `H = -Δ + V + W(t)`.
//!
//! The crate is organized bottom-up: [`grid`] fixes the discretization,
//! [`operators`] assembles position-basis matrices, [`spectral`]
//! diagonalizes, [`adaptor`] builds the adaptor operator `B_V`,
//! [`propagator`] evolves states and [`estimates`] evaluates identities and
//! decay estimates along trajectories. [`scenario`] wires everything to
//! configuration files and the command line.

use nalgebra::DVector;
use num_complex::Complex64;

pub mod adaptor;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod potential;
pub mod propagator;
pub mod scenario;
pub mod series;
pub mod spectral;

pub use error::{LabError, Result};
pub use grid::{Grid, GridId, GridKind, NormKind, WeightProfile};
pub use operators::HermitianOperator;
pub use spectral::{SpectralData, SpectralTag};
pub use potential::{PotentialModel, PotentialTerm, StaticPotential, TimeDependentPotential};

/// Complex amplitudes on a grid. For radial grids these are the reduced
/// amplitudes `u = r ψ`.
pub type State = DVector<Complex64>;
