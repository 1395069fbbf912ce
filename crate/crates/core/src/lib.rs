//! Numerical laboratory for the stochastic Allen-Cahn equation
//! `du = (Δu + f(u)/ε) dt + ε^γ dW_t^Q` driven by a Q-Wiener process that is
//! smooth in space.
//!
//! The crate is organized around the objects of the sharp-interface analysis:
//!
//! - [`reaction`]: bistable reaction terms `f` and their derived constants
//!   `(μ, p, C_f)`.
//! - [`noise`]: covariance kernels `Q(x,y)`, Q-Wiener path sampling, spatial
//!   derivative noise, and the pathwise time mollification `W^(δ)`.
//! - [`scalar`]: the comparison ODE `Y' = f(Y)`, its noisy companions
//!   `Y^ε` (SDE) and `Y^{ε,δ}` (random ODE), and the ξ-derivative quantities
//!   `Y_ξ` and `A = Y_ξξ/Y_ξ`.
//! - [`field`]: IMEX solvers for the full equation on truncated ℝ (two-phase
//!   far field) or a Neumann box in d = 2, 3.
//! - [`interface`]: standing waves, super/sub solution pairs, the interface
//!   generation predicate, zero tracking, and the limiting interface SDE.
//! - [`harness`]: experiment orchestration, stopping-time monitors τ₁–τ₇,
//!   Monte Carlo sweeps, and reproducible reporting.

pub mod error;
pub mod field;
pub mod harness;
pub mod interface;
pub mod noise;
pub mod reaction;
pub mod scalar;

pub use error::{Error, Result};
