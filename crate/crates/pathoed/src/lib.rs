//! Optimal mobile-sensor trajectory design for Bayesian linear inverse
//! problems governed by time-dependent advection-diffusion dynamics.
//!
//! The library assembles the full pipeline: a P1 finite-element
//! discretization of the unit square ([`mesh`]), weighted inner-product
//! spaces and a Lanczos eigensolver ([`linops`]), an elliptic Gaussian
//! prior ([`prior`]), an implicit-Euler solution operator with its adjoint
//! ([`forward`]), parameterized sensor paths ([`paths`]), the discretized
//! observation operator ([`observation`]), the goal-oriented design
//! criterion with adjoint gradients ([`oed`]), and bound-constrained
//! multi-start minimization ([`optimize`]). Experiment configuration and
//! the file-emitting runners behind the CLI live in [`config`] and
//! [`experiment`].

pub mod config;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod linalg;
pub mod linops;
pub mod mesh;
pub mod observation;
pub mod oed;
pub mod optimize;
pub mod paths;
pub mod prior;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
