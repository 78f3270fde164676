//! Poisson envelopes of upper semicontinuous functions on model complex
//! spaces, computed by searching over polynomial analytic discs.
//!
//! The envelope of `u` at `x` is the infimum of the boundary averages
//! `P_u(f)` over analytic discs `f` centered at `x`. This crate evaluates
//! that functional, searches the disc family with random restarts, local
//! descent and Riemann-Hilbert composition, certifies hull membership with
//! explicit discs, and ships brute-force one-variable oracles to check the
//! results against.

pub mod disc;
pub mod field;
pub mod functional;
pub mod hull;
pub mod oracle;
pub mod poly;
pub mod rng;
pub mod space;

pub mod envelope;

pub mod cli;
pub mod config;

pub use disc::{AnalyticDisc, BoundaryFamily, LaurentFamily};
pub use envelope::{envelope_at, envelope_grid, EnvelopeEstimate, SearchBudget};
pub use field::ScalarField;
pub use functional::{arc_functional, poisson_functional, QuadratureSpec};
pub use space::{BranchMap, ComplexPoint, SpaceModel};
