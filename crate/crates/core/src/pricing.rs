//! Price surfaces of a Negishi candidate.
//!
//! For weights `w` the state-price density is carried by
//! `Y_t = e^{∫₀ᵗ β} v(t, X_t)` with `β = q - r` and
//!
//! ```text
//! ∂_t v + Lv + βv = 0,                 v(1,·) = K = G · U_c(e^H)
//! ∂_t m + Lm + (α+β)m + g = 0,         m(1,·) = K · F,   α = p - q,  g = f u_c(e^h)
//! ```
//!
//! Stock prices in units of the numeraire are `S_t = A_t + e^{∫₀ᵗ α} s(t, X_t)`
//! with `s = m / v` and the accrued term `A_t = ∫₀ᵗ θ_u / B_u du`. The
//! numeraire is `B_t = e^{∫₀ᵗ q} v / u_c(t, e^h)` before maturity and `Ψ` at
//! maturity. Agent `m`'s discounted net trade value is `e^{-∫q} νᵐ(t, X_t)`
//! with `νᵐ = nᵐ / v` and
//!
//! ```text
//! ∂_t n + Ln - rn + u_c (λᵐ - πᵐ) = 0,   n(1,·) = U_c (Λᵐ - Πᵐ).
//! ```

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, PathArray, PathBundle, SpatialGrid, TimeGrid, MAX_DIM};
use crate::economy::{Economy, PrimitivePaths};
use crate::error::{Error, Result};
use crate::negishi::{aggregates, Allocations, WeightVector};
use crate::pde::{solve_backward, FaceRule, GridFunction, PdeProblem, SolveOptions};
use crate::utility::Aggregate;

/// Default half-width of the PDE box in units of the largest volatility.
pub const DEFAULT_BOX_WIDTH: f64 = 8.0;

/// Largest state dimension handled by the surface solver.
pub const MAX_PDE_DIM: usize = 2;

/// Relative singular-value floor below which a dispersion matrix is treated
/// as rank deficient when solving for integrands.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub time_steps: usize,
    pub space_points: usize,
    pub box_width: f64,
    pub faces: FaceRule,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            time_steps: 200,
            space_points: 400,
            box_width: DEFAULT_BOX_WIDTH,
            faces: FaceRule::default(),
        }
    }
}

/// Space and time grids plus scheme options for every surface solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrids {
    pub space: SpatialGrid,
    pub time: TimeGrid,
    pub options: SolveOptions,
}

impl PdeGrids {
    pub fn new(diffusion: &DiffusionSpec, cfg: &GridConfig) -> Result<Self> {
        if diffusion.dimension > MAX_PDE_DIM {
            return Err(Error::Config(format!(
                "price surfaces support dimension <= {MAX_PDE_DIM}; dimension {} runs Monte Carlo only",
                diffusion.dimension
            )));
        }
        Ok(PdeGrids {
            space: SpatialGrid::around(diffusion, cfg.box_width, cfg.space_points)?,
            time: TimeGrid::uniform(cfg.time_steps)?,
            options: SolveOptions {
                faces: cfg.faces,
                ..SolveOptions::default()
            },
        })
    }
}

/// Coefficient fields of the pricing equations for fixed weights.
pub struct Kernels<'a> {
    pub econ: &'a Economy,
    pub weights: WeightVector,
    rate: Aggregate,
    terminal: Aggregate,
}

impl<'a> Kernels<'a> {
    pub fn new(econ: &'a Economy, weights: &WeightVector) -> Result<Self> {
        let (rate, terminal) = aggregates(econ, weights)?;
        Ok(Kernels {
            econ,
            weights: weights.clone(),
            rate,
            terminal,
        })
    }

    /// `u_c(t, e^{h(t,x)}, x; w)`.
    pub fn marginal(&self, t: f64, x: &[f64]) -> Result<f64> {
        let mut buf = vec![0.0; self.econ.n_agents()];
        let uc = self
            .rate
            .allocate_with_marginal(t, self.econ.h(t, x).exp(), x, &mut buf)?;
        positive_marginal(uc, t, x)
    }

    /// `U_c(e^{H(x)}, x; w)`.
    pub fn terminal_marginal(&self, x: &[f64]) -> Result<f64> {
        let mut buf = vec![0.0; self.econ.n_agents()];
        let uc =
            self.terminal
                .allocate_with_marginal(1.0, self.econ.big_h(x).exp(), x, &mut buf)?;
        positive_marginal(uc, 1.0, x)
    }

    /// `K(x) = G(x) U_c(e^{H(x)}, x; w)`.
    pub fn k(&self, x: &[f64]) -> Result<f64> {
        let v = self.econ.notional(x) * self.terminal_marginal(x)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::eval(
                format!("terminal kernel at x={x:?}"),
                format!("K = {v}"),
            ))
        }
    }

    pub fn beta(&self, t: f64, x: &[f64]) -> f64 {
        self.econ.q(t, x) - self.econ.r(t, x)
    }

    pub fn alpha(&self, j: usize, t: f64, x: &[f64]) -> f64 {
        self.econ.dividend_growth(j, t, x) - self.econ.q(t, x)
    }

    pub fn g(&self, j: usize, t: f64, x: &[f64]) -> Result<f64> {
        let f = self.econ.dividend_rate(j, t, x);
        if f == 0.0 {
            return Ok(0.0);
        }
        Ok(f * self.marginal(t, x)?)
    }

    /// `u_c (λᵐ - πᵐ)` at `(t, x)`.
    pub fn rate_excess(&self, m: usize, t: f64, x: &[f64]) -> Result<f64> {
        let n = self.econ.n_agents();
        let lam = self.econ.h(t, x).exp();
        let mut alloc = vec![0.0; n];
        let uc = self.rate.allocate_with_marginal(t, lam, x, &mut alloc)?;
        let mut income = vec![0.0; n];
        self.econ
            .rate_incomes_into(lam, t, x, &mut income)
            .map_err(|msg| Error::eval(format!("income split at t={t}, x={x:?}"), msg))?;
        Ok(uc * (income[m] - alloc[m]))
    }

    /// `U_c (Λᵐ - Πᵐ)` at `x`.
    pub fn terminal_excess(&self, m: usize, x: &[f64]) -> Result<f64> {
        let n = self.econ.n_agents();
        let lam = self.econ.big_h(x).exp();
        let mut alloc = vec![0.0; n];
        let uc = self
            .terminal
            .allocate_with_marginal(1.0, lam, x, &mut alloc)?;
        let mut income = vec![0.0; n];
        self.econ
            .terminal_incomes_into(lam, x, &mut income)
            .map_err(|msg| Error::eval(format!("endowment split at x={x:?}"), msg))?;
        Ok(uc * (income[m] - alloc[m]))
    }

    /// Evaluates `K` on every node, failing on the first nonpositive value.
    pub fn check_k(&self, grid: &SpatialGrid) -> Result<()> {
        (0..grid.n_nodes())
            .into_par_iter()
            .try_for_each(|n| self.k(&grid.node(n)).map(|_| ()))
    }
}

fn positive_marginal(uc: f64, t: f64, x: &[f64]) -> Result<f64> {
    if uc > 0.0 && uc.is_finite() {
        Ok(uc)
    } else {
        Err(Error::eval(
            format!("aggregate marginal at t={t}, x={x:?}"),
            format!("u_c = {uc}"),
        ))
    }
}

/// `v`, the state-price surface.
pub fn solve_y(kernels: &Kernels, grids: &PdeGrids) -> Result<GridFunction> {
    kernels.check_k(&grids.space)?;
    let terminal = |x: &[f64]| kernels.k(x);
    let beta = |t: f64, x: &[f64]| Ok(kernels.beta(t, x));
    solve_backward(
        &PdeProblem {
            diffusion: &kernels.econ.spec.diffusion,
            grid: &grids.space,
            times: &grids.time,
            terminal: &terminal,
            potential: Some(&beta),
            source: None,
        },
        SolveOptions {
            positive: true,
            ..grids.options
        },
    )
}

fn ratio(m: &GridFunction, y: &GridFunction) -> Result<GridFunction> {
    if let Some(i) = y.values().iter().position(|&v| !(v > 0.0)) {
        let n = y.grid.n_nodes();
        return Err(Error::Solver(format!(
            "state-price surface is nonpositive at t={}, x={:?}",
            y.times[i / n],
            y.grid.node(i % n)
        )));
    }
    Ok(m.zip_with(y, |a, b| a / b))
}

/// `sʲ = mʲ / v`.
pub fn solve_stock(
    kernels: &Kernels,
    j: usize,
    grids: &PdeGrids,
    y: &GridFunction,
) -> Result<GridFunction> {
    let econ = kernels.econ;
    let terminal = |x: &[f64]| Ok(kernels.k(x)? * econ.terminal_factor(j, x));
    let potential = |t: f64, x: &[f64]| Ok(kernels.alpha(j, t, x) + kernels.beta(t, x));
    let source = |t: f64, x: &[f64]| kernels.g(j, t, x);
    let m = solve_backward(
        &PdeProblem {
            diffusion: &econ.spec.diffusion,
            grid: &grids.space,
            times: &grids.time,
            terminal: &terminal,
            potential: Some(&potential),
            source: Some(&source),
        },
        grids.options,
    )?;
    ratio(&m, y)
}

/// Value in numeraire units of a claim paying `φ(X₁)` numeraire units at
/// maturity: `E^Q[φ(X₁) | X_t = x]`.
pub fn solve_claim(
    kernels: &Kernels,
    grids: &PdeGrids,
    y: &GridFunction,
    payoff: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
) -> Result<GridFunction> {
    let terminal = |x: &[f64]| Ok(kernels.k(x)? * payoff(x)?);
    let beta = |t: f64, x: &[f64]| Ok(kernels.beta(t, x));
    let m = solve_backward(
        &PdeProblem {
            diffusion: &kernels.econ.spec.diffusion,
            grid: &grids.space,
            times: &grids.time,
            terminal: &terminal,
            potential: Some(&beta),
            source: None,
        },
        grids.options,
    )?;
    ratio(&m, y)
}

/// `νᵐ = nᵐ / v`.
pub fn solve_agent_value(
    kernels: &Kernels,
    m: usize,
    grids: &PdeGrids,
    y: &GridFunction,
) -> Result<GridFunction> {
    let econ = kernels.econ;
    let terminal = |x: &[f64]| kernels.terminal_excess(m, x);
    let potential = |t: f64, x: &[f64]| Ok(-econ.r(t, x));
    let source = |t: f64, x: &[f64]| kernels.rate_excess(m, t, x);
    let n = solve_backward(
        &PdeProblem {
            diffusion: &econ.spec.diffusion,
            grid: &grids.space,
            times: &grids.time,
            terminal: &terminal,
            potential: Some(&potential),
            source: Some(&source),
        },
        SolveOptions {
            growth_slack: None,
            ..grids.options
        },
    )?;
    ratio(&n, y)
}

/// `b = v / u_c(t, e^h)` before maturity and `G` at maturity, so that the
/// numeraire is `B_t = e^{∫₀ᵗ q} b(t, X_t)`.
pub fn numeraire_surface(kernels: &Kernels, y: &GridFunction) -> Result<GridFunction> {
    let g = &y.grid;
    let n = g.n_nodes();
    let last = y.n_times() - 1;
    let values: Vec<f64> = (0..y.values().len())
        .into_par_iter()
        .map(|i| {
            let (k, node) = (i / n, i % n);
            let x = g.node(node);
            if k == last {
                Ok(kernels.econ.notional(&x))
            } else {
                Ok(y.value(k, node) / kernels.marginal(y.times[k], &x)?)
            }
        })
        .collect::<Result<_>>()?;
    Ok(GridFunction::from_slices(
        g.clone(),
        y.times.clone(),
        values,
    ))
}

/// `gʲ / v` on the grid.
pub fn accrual_surface(kernels: &Kernels, j: usize, y: &GridFunction) -> Result<GridFunction> {
    let g = &y.grid;
    let n = g.n_nodes();
    let values: Vec<f64> = (0..y.values().len())
        .into_par_iter()
        .map(|i| {
            let (k, node) = (i / n, i % n);
            Ok(kernels.g(j, y.times[k], &g.node(node))? / y.value(k, node))
        })
        .collect::<Result<_>>()?;
    Ok(GridFunction::from_slices(
        g.clone(),
        y.times.clone(),
        values,
    ))
}

/// A surface together with its spatial gradient.
#[derive(Debug, Clone)]
pub struct Surface {
    pub values: GridFunction,
    pub gradient: Vec<GridFunction>,
}

impl Surface {
    pub fn new(values: GridFunction) -> Self {
        let gradient = (0..values.grid.dim()).map(|i| values.gradient(i)).collect();
        Surface { values, gradient }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.values.interp(t, x)
    }

    pub fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.gradient) {
            *o = g.interp(t, x);
        }
    }

    /// `(∇u σ)_k = Σ_i ∂_i u σ_ik` with `sigma` row-major.
    pub fn dispersion_into(&self, t: f64, x: &[f64], sigma: &[f64], out: &mut [f64]) {
        let d = self.gradient.len();
        let mut grad = [0.0; MAX_DIM];
        self.gradient_into(t, x, &mut grad[..d]);
        for k in 0..d {
            out[k] = (0..d).map(|i| grad[i] * sigma[i * d + k]).sum();
        }
    }

    /// Same as [`Surface::dispersion_into`] at grid node `(k, node)`.
    pub fn node_dispersion_into(&self, k: usize, node: usize, sigma: &[f64], out: &mut [f64]) {
        let d = self.gradient.len();
        for c in 0..d {
            out[c] = (0..d)
                .map(|i| self.gradient[i].value(k, node) * sigma[i * d + c])
                .sum();
        }
    }
}

/// Pseudo-inverse of `Dᵀ` for a `J × d` matrix `D`, so that `η = P rhs` is
/// the minimum-norm solution of `Dᵀ η = rhs`. Fails with the smallest
/// singular value when `D` has rank below `d`.
pub fn dispersion_pseudo_inverse(d: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let (j, dim) = d.shape();
    if j == 1 && dim == 1 {
        let a = d[(0, 0)];
        return if a != 0.0 && a.is_finite() {
            Ok(DMatrix::from_element(1, 1, 1.0 / a))
        } else {
            Err(0.0)
        };
    }
    let svd = d.transpose().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = if j >= dim { sv.min() } else { 0.0 };
    if !(smax > 0.0) || smin <= RANK_TOLERANCE * smax {
        return Err(smin);
    }
    svd.pseudo_inverse(RANK_TOLERANCE * smax).map_err(|_| smin)
}

/// Minimum-norm `η` with `Dᵀ η = rhs`.
pub fn solve_dispersion(d: &DMatrix<f64>, rhs: &[f64]) -> std::result::Result<Vec<f64>, f64> {
    let p = dispersion_pseudo_inverse(d)?;
    Ok((p * DVector::from_column_slice(rhs))
        .iter()
        .copied()
        .collect())
}

/// All surfaces of a Negishi candidate.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub weights: WeightVector,
    pub grids: PdeGrids,
    pub diffusion: DiffusionSpec,
    /// `v`.
    pub y: Surface,
    /// `sʲ`.
    pub stocks: Vec<Surface>,
    /// `b`.
    pub numeraire: GridFunction,
    /// `νᵐ`.
    pub agent_values: Vec<Surface>,
    /// `gʲ / v`, so that `dAʲ_t = e^{∫αʲ} (gʲ/v)(t, X_t) dt`.
    pub accrual: Vec<GridFunction>,
}

impl EquilibriumSolution {
    /// Solves every surface; stocks and agents are solved in parallel.
    pub fn solve(econ: &Economy, weights: &WeightVector, grids: &PdeGrids) -> Result<Self> {
        let kernels = Kernels::new(econ, weights)?;
        let y = solve_y(&kernels, grids)?;
        let stocks = (0..econ.n_stocks())
            .into_par_iter()
            .map(|j| solve_stock(&kernels, j, grids, &y).map(Surface::new))
            .collect::<Result<Vec<_>>>()?;
        let agent_values = (0..econ.n_agents())
            .into_par_iter()
            .map(|m| solve_agent_value(&kernels, m, grids, &y).map(Surface::new))
            .collect::<Result<Vec<_>>>()?;
        let numeraire = numeraire_surface(&kernels, &y)?;
        let accrual = (0..econ.n_stocks())
            .map(|j| accrual_surface(&kernels, j, &y))
            .collect::<Result<Vec<_>>>()?;
        Ok(EquilibriumSolution {
            weights: weights.clone(),
            grids: grids.clone(),
            diffusion: econ.spec.diffusion.clone(),
            y: Surface::new(y),
            stocks,
            numeraire,
            agent_values,
            accrual,
        })
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dimension
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    /// Dispersion `D_jk = e^{∫αʲ} (∇sʲ σ)_k` at `(t, x)`.
    pub fn dispersion(&self, t: f64, x: &[f64], int_alpha: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut sigma = [0.0; MAX_DIM * MAX_DIM];
        self.diffusion.volatility_into(t, x, &mut sigma[..d * d]);
        let mut row = [0.0; MAX_DIM];
        let mut out = DMatrix::zeros(self.n_stocks(), d);
        for (j, s) in self.stocks.iter().enumerate() {
            s.dispersion_into(t, x, &sigma[..d * d], &mut row[..d]);
            let scale = int_alpha[j].exp();
            for k in 0..d {
                out[(j, k)] = scale * row[k];
            }
        }
        out
    }

    /// Integrand replicating agent `m`'s net trades at `(t, x)`, given the
    /// path integrals `∫αʲ` and `∫q` accumulated so far.
    pub fn hedge_at(
        &self,
        m: usize,
        t: f64,
        x: &[f64],
        int_alpha: &[f64],
        int_q: f64,
    ) -> Result<Vec<f64>> {
        let d = self.dim();
        let dmat = self.dispersion(t, x, int_alpha);
        let mut sigma = [0.0; MAX_DIM * MAX_DIM];
        self.diffusion.volatility_into(t, x, &mut sigma[..d * d]);
        let mut rhs = [0.0; MAX_DIM];
        self.agent_values[m].dispersion_into(t, x, &sigma[..d * d], &mut rhs[..d]);
        let scale = (-int_q).exp();
        rhs[..d].iter_mut().for_each(|v| *v *= scale);
        if rhs[..d].iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; self.n_stocks()]);
        }
        solve_dispersion(&dmat, &rhs[..d]).map_err(|smin| Error::Completeness {
            t,
            x: x.to_vec(),
            message: format!(
                "dispersion matrix is rank deficient (smallest singular value {smin:e})"
            ),
        })
    }
}

/// Price processes along simulated paths.
#[derive(Debug, Clone)]
pub struct PricePaths {
    /// `Y_t`.
    pub y: PathArray,
    /// `B_t`, equal to `Ψ` at maturity.
    pub numeraire: PathArray,
    /// `Sʲ_t` in numeraire units.
    pub stocks: Vec<PathArray>,
    /// `A_t = ∫₀ᵗ θʲ / B` per stock.
    pub accrued: Vec<PathArray>,
}

pub fn price_paths(
    sol: &EquilibriumSolution,
    prim: &PrimitivePaths,
    alloc: &Allocations,
    bundle: &PathBundle,
) -> Result<PricePaths> {
    let n = prim.n_paths;
    let nt = prim.times.len();
    let j_count = sol.n_stocks();
    let mut y = PathArray::zeros(n, nt);
    let mut b = PathArray::zeros(n, nt);
    let mut stocks = vec![PathArray::zeros(n, nt); j_count];
    let mut accrued = vec![PathArray::zeros(n, nt); j_count];
    for p in 0..n {
        // continuous numeraire, used inside the accrued integral
        let mut b_cont = vec![0.0; nt];
        for k in 0..nt {
            let t = prim.times[k];
            let x = bundle.state(p, k);
            let v = sol.y.value(t, x);
            if !(v > 0.0) {
                return Err(Error::Solver(format!(
                    "interpolated state-price surface is {v} at t={t}, x={x:?}"
                )));
            }
            let iq = prim.int_q.get(p, k);
            y.row_mut(p)[k] = (iq - prim.int_r.get(p, k)).exp() * v;
            b_cont[k] = iq.exp() * v / alloc.marginal.get(p, k);
            b.row_mut(p)[k] = if k + 1 == nt {
                prim.notional[p]
            } else {
                b_cont[k]
            };
        }
        for j in 0..j_count {
            let theta = prim.dividend_rates[j].row(p);
            let acc = accrued[j].row_mut(p);
            for k in 1..nt {
                let dt = prim.times[k] - prim.times[k - 1];
                acc[k] =
                    acc[k - 1] + 0.5 * dt * (theta[k] / b_cont[k] + theta[k - 1] / b_cont[k - 1]);
            }
            let acc = accrued[j].row(p).to_vec();
            let row = stocks[j].row_mut(p);
            for k in 0..nt {
                let t = prim.times[k];
                let ia = prim.int_p[j].get(p, k) - prim.int_q.get(p, k);
                row[k] = acc[k] + ia.exp() * sol.stocks[j].value(t, bundle.state(p, k));
            }
        }
    }
    Ok(PricePaths {
        y,
        numeraire: b,
        stocks,
        accrued,
    })
}

/// Agent `m`'s integrand `Ĥᵐ` along every path, one array per stock.
pub fn hedge_ratios(
    sol: &EquilibriumSolution,
    m: usize,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
) -> Result<Vec<PathArray>> {
    let n = prim.n_paths;
    let nt = prim.times.len();
    let j_count = sol.n_stocks();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut out = vec![0.0; j_count * nt];
            let mut ia = vec![0.0; j_count];
            for k in 0..nt {
                let t = prim.times[k];
                let iq = prim.int_q.get(p, k);
                for (j, a) in ia.iter_mut().enumerate() {
                    *a = prim.int_p[j].get(p, k) - iq;
                }
                let h = sol.hedge_at(m, t, bundle.state(p, k), &ia, iq)?;
                for j in 0..j_count {
                    out[j * nt + k] = h[j];
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..j_count)
        .map(|j| {
            PathArray::from_rows(
                n,
                nt,
                rows.iter()
                    .flat_map(|r| r[j * nt..(j + 1) * nt].iter().copied())
                    .collect(),
            )
        })
        .collect())
}
