//! Numerical toolkit for second-order backward SDEs with jumps.
//!
//! The crate builds a family of controlled jump-diffusion measures, solves a
//! classical BSDE with jumps under each of them, and obtains the second-order
//! solution as the supremum over the family. Finite-difference solvers for
//! the matching semilinear and fully nonlinear integro-differential
//! equations serve as independent checks.
//!
//! | module | contents |
//! |---|---|
//! | [`levy`] | base measures, jump maps, separable controls |
//! | [`paths`] | reference and controlled path simulation |
//! | [`generator`] | drivers, Fenchel conjugates, regularity checks |
//! | [`bsdej`] | regression Monte Carlo and lattice BSDEJ solvers |
//! | [`pide`] | explicit monotone PIDE schemes |
//! | [`solver2`] | second-order solution, `K` extraction, norms |
//! | [`martingale`] | Doléans-Dade exponentials and moment bounds |
//! | [`experiment`] | config-driven experiment runner behind the CLI |

pub mod bsdej;
pub mod experiment;
pub mod generator;
pub mod levy;
pub mod martingale;
pub mod paths;
pub mod pide;
pub mod rng;
pub mod solver2;
pub mod stats;
