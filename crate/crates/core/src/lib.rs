//! Dissipative (Herglotz) Lagrangian mechanics on Lie algebroids.
//!
//! The crate assembles and integrates the Euler–Lagrange–Herglotz equations
//! for a Lagrangian `L(x, y, z)` on a local algebroid chart, and provides the
//! diagnostics that go with them: energy balance, Noether–Herglotz momenta,
//! the connection-based intrinsic residual and the Hamilton–Pontryagin–Herglotz
//! residuals.

pub mod algebroid;
pub mod connections;
pub mod dynamics;
pub mod error;
pub mod fd;
pub mod invariants;
pub mod lagrangian;
pub mod scenarios;

pub use error::{HerglotzError, Result};
