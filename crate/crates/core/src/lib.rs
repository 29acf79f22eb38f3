//! Spectral statistics of heat-kernel random matrices on the unitary group
//! `U(N)` and the general linear group `GL(N)`.
//!
//! The crate has two independent routes to the same numbers:
//!
//! * an exact one, which represents the Laplacian on holomorphic trace
//!   polynomials as a finite matrix ([`flow`]) and exponentiates it, giving
//!   finite-`N` expectations and their `N → ∞` limits;
//! * a Monte-Carlo one ([`simulate`]), which runs geometric Brownian motion
//!   on the group and measures empirical spectra.
//!
//! [`moments`] and [`density`] provide closed forms for the limit laws.

pub mod density;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod moments;
pub mod parse;
pub mod simulate;
pub mod trace_poly;

pub use error::{Error, Result};
pub use trace_poly::{Letter, Monomial, TracePoly, WordPoly};
