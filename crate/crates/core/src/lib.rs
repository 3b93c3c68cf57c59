//! Simulation and verification toolkit for random tournament matrices.
//!
//! The Hermitian matrix `H = iS` built from a tournament's sign matrix `S`
//! is sampled from two ensembles: all tournaments (ITE) and regular
//! tournaments (RITE). The modules cover sampling and Markov chains
//! ([`ensemble`]), Chebyshev trace statistics ([`chebyshev`]), the
//! non-backtracking cycle expansion of those traces ([`nbcycles`]), exact
//! one-step dynamics of the statistics ([`dynamics`]), the
//! Ornstein–Uhlenbeck Stein machinery ([`stein`]), exhaustive small-N ground
//! truth ([`oracle`]) and Gaussianity diagnostics ([`stats`]).

pub mod chebyshev;
pub mod dynamics;
pub mod ensemble;
pub mod nbcycles;
pub mod error;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod stein;

pub use error::{Error, Result};
