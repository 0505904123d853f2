//! Minimax-optimal data mixture weights for group distributionally robust
//! optimization (group DRO).
//!
//! Given K data distributions ("groups"), the worst-group-optimal predictor
//! over bounded functions is the Bayes-optimal predictor of a specific mixture
//! of the groups. For cross-entropy and squared error, the mixture weights
//! maximize a concave objective over the probability simplex:
//!
//! ```text
//! J(λ) = Σ_p λ_p · E_p[ ℒ(f_λ(x), y) ]        λ ∈ Δ^K
//! ```
//!
//! where `f_λ` is the Bayes-optimal predictor of the λ-mixture. This crate
//! implements the objective and its gradient estimators over finite per-group
//! datasets ([`objective`]), the entropic mirror ascent solver ([`solver`]),
//! exact synthetic families for end-to-end validation ([`synthetic`]), proxy
//! estimation pipelines ([`estimation`]), and independent verification oracles
//! (brute-force grid search, finite differences, concavity and unbiasedness
//! probes — [`verify`]).

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod losses;
pub mod mixture;
mod numeric;
pub mod objective;
pub mod seeds;
pub mod simplex;
pub mod solver;
pub mod synthetic;
pub mod verify;

pub use error::{Error, Result};
