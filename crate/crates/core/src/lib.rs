//! Routh reduction for Lagrangian systems with symmetry.
//!
//! The crate builds Routhians, reduces dynamics to coordinates on quotient
//! spaces, integrates full and reduced equations, reconstructs full motions and
//! checks the identities that tie them together. Everything runs in single
//! coordinate charts and local trivializations.

pub mod calculus;
pub mod connection;
pub mod error;
pub mod lagrangian;
pub mod presymplectic;
pub mod reconstruction;
pub mod routh;
pub mod symmetry;
pub mod systems;

pub use error::{Error, Result};
