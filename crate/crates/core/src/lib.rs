//! Two-time propagation of lesser/greater Green's functions for a two-band
//! Hubbard model.
//!
//! The crate is organised bottom-up:
//!
//! * [`kgrid`]: uniform k sampling and closed-form momentum index arithmetic.
//! * [`model`]: band structure, interaction protocol, pulse, and h(k;t).
//! * [`state`]: two-time storage of G≷ and Σ≷, symmetry fill, observables.
//! * [`engine`]: sharding, chunked kernel execution and tree reduction.
//! * [`selfenergy`]: second-Born self-energy (polarizability route and the
//!   direct triple contraction).
//! * [`collision`]: collision integrals over the time history.
//! * [`propagator`]: predictor/corrector time stepping.

pub mod collision;
pub mod engine;
pub mod kgrid;
pub mod linalg;
pub mod model;
pub mod propagator;
pub mod selfenergy;
pub mod state;

mod error;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
