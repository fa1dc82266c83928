//! Least-squares Lax-Friedrichs solvers for Hamilton-Jacobi equations.
//!
//! A network `Φ(x; θ)` is trained by stochastic gradient descent on the
//! squared residual of a monotone finite-difference scheme, plus boundary,
//! supervised and initial-data misfits. A dense grid oracle validates the
//! critical-point theory on small grids, and feedback rollouts turn a
//! trained value function into controls.

pub mod cli;
pub mod control;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod grid_oracle;
pub mod hamiltonian;
pub mod loss;
pub mod network;
pub mod scheme;
pub mod trainer;

pub use error::{Error, Result};
