//! Numerical construction and verification of complete Radner equilibria in
//! economies driven by a diffusion state.
//!
//! The pipeline runs from utilities and primitives to equilibrium prices:
//! [`utility`] aggregates agents by sup-convolution, [`negishi`] finds the
//! weights that balance every budget, [`pricing`] solves the backward PDEs
//! for the numeraire-deflated state price and the stock prices,
//! [`completeness`] tests whether the stocks span every source of risk, and
//! [`verify`] re-checks the equilibrium conditions on independent paths.
//! [`pipeline`] strings the stages together for the `radner` binary.

pub mod completeness;
pub mod diffusion;
pub mod economy;
pub mod error;
pub mod expr;
pub mod io;
pub mod negishi;
pub mod oracle;
pub mod pde;
pub mod pipeline;
pub mod presets;
pub mod pricing;
pub mod scenario;
pub mod stats;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
