//! Rapidly mixing Markov chains for approximate counting.
//!
//! The crate is organised around small explicit chains that can be checked
//! exhaustively, plus samplers for three counting problems whose state spaces
//! are only implicit:
//!
//! - [`chain`]: explicit finite chains, stationary distributions, laziness,
//!   the Metropolis filter, exact evolution and mixing times.
//! - [`diagnostics`]: spectrum, conductance, blocking conductance and the
//!   mixing bounds built from them.
//! - [`coupling`]: coupling and path-coupling harnesses.
//! - [`matching`]: perfect and near-perfect matchings, the permanent.
//! - [`ising`]: the Ising partition function and the subgraph-world sampler.
//! - [`geometry`]: random walks in convex bodies and volume estimation.
//!
//! L1 distances are never halved: `sum_x |p(x) - q(x)|`.

pub mod chain;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod ising;
pub mod matching;
pub mod models;
pub mod rng;

pub use chain::{check_reversible, l1_distance, relative_entropy, Distribution, FiniteChain};
pub use error::{Error, Result};
pub use rng::RandomSource;
