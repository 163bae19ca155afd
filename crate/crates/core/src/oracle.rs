//! Closed-form surfaces of the Gaussian benchmark and their comparison with
//! the PDE solution.
//!
//! Brownian state, log utility, unit notional, zero rates, `H(x) = x` and a
//! single stock paying `x`: the numeraire state-price density is Gaussian,
//! which gives `Y = B = e^{-x+(1-t)/2}` and `S = x - (1-t)`.

use serde::{Deserialize, Serialize};

use crate::pricing::EquilibriumSolution;

pub fn benchmark_y(t: f64, x: &[f64]) -> f64 {
    (-x[0] + 0.5 * (1.0 - t)).exp()
}

pub fn benchmark_stock(t: f64, x: &[f64]) -> f64 {
    x[0] - (1.0 - t)
}

/// Fraction of the box half-width on which errors are measured.
pub const INTERIOR_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceError {
    pub surface: String,
    /// Largest `|numeric - exact| / max(|exact|, floor)` on interior nodes
    /// before maturity.
    pub max_relative_error: f64,
    pub floor: f64,
}

/// Errors of `Y`, `S` and `B` against the benchmark closed forms.
///
/// `S` changes sign, so its error is taken relative to `max(|S|, 1)`.
pub fn benchmark_errors(sol: &EquilibriumSolution) -> Vec<SurfaceError> {
    let grid = &sol.grids.space;
    let last = sol.grids.time.n_times() - 1;
    let keep = |k: usize, node: usize| k < last && grid.in_core(node, INTERIOR_FRACTION);
    let row = |name: &str, err: f64, floor: f64| SurfaceError {
        surface: name.into(),
        max_relative_error: err,
        floor,
    };
    vec![
        row(
            "y",
            sol.y.values.max_relative_error(benchmark_y, 0.0, keep),
            0.0,
        ),
        row(
            "stock[0]",
            sol.stocks[0]
                .values
                .max_relative_error(benchmark_stock, 1.0, keep),
            1.0,
        ),
        row(
            "numeraire",
            sol.numeraire.max_relative_error(benchmark_y, 0.0, keep),
            0.0,
        ),
    ]
}

/// The largest of [`benchmark_errors`].
pub fn benchmark_max_error(sol: &EquilibriumSolution) -> f64 {
    benchmark_errors(sol)
        .iter()
        .map(|e| e.max_relative_error)
        .fold(0.0, f64::max)
}
