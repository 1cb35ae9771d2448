//! Low-power estimation (LoPE) controllers for the Witsenhausen counterexample.
//!
//! The crate evaluates the power cost `P = E[U1²]` and the MMSE estimation cost
//! `S = E[(X1 - E[X1|Y1])²]` of step-function first-stage controllers in closed
//! form, cross-checks them by simulation, and traces power–estimation Pareto
//! frontiers by weighted-sum optimization.
//!
//! Module map:
//!
//! - [`gaussian`]: φ, Φ, tail-safe CDF differences and the two truncated Gaussian integrals
//! - [`strategies`]: controller families and the induced state density
//! - [`costs`]: closed-form costs, the MMSE decoder and the linear / Gaussian baselines
//! - [`montecarlo`]: reproducible simulation of the full two-stage system
//! - [`optimizer`]: constrained simplex search and ω sweeps
//! - [`firstorder`]: numerical diagnostics of the slope `S'(P)` near zero power
//! - [`cli`]: the `witsbench` command-line tool

pub mod cli;
pub mod costs;
pub mod error;
pub mod firstorder;
pub mod gaussian;
pub mod montecarlo;
pub mod optimizer;
pub mod quadrature;
pub mod strategies;

pub use costs::{CostMethod, CostPoint, QuadratureConfig};
pub use error::{Error, Result};
pub use strategies::{LopeParams, ProblemConfig, Strategy};
