//! Endogenous completeness: rank of the stock dispersion matrix over the
//! grid, and a replication probe for test claims.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{path_rng, simulate_path_into, SpatialGrid, TimeGrid, MAX_DIM};
use crate::economy::Economy;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::pde::GridFunction;
use crate::pricing::{
    dispersion_pseudo_inverse, solve_claim, EquilibriumSolution, Kernels, Surface,
};
use crate::stats::{median, pairwise_sum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletenessConfig {
    /// Threshold on the smallest singular value relative to the price scale.
    pub rel_tol: f64,
    /// Largest tolerated fraction of failing nodes.
    pub max_failure_fraction: f64,
    /// Nodes within this fraction of the box half-width are checked.
    pub core_fraction: f64,
}

impl Default for CompletenessConfig {
    fn default() -> Self {
        CompletenessConfig {
            rel_tol: 1e-6,
            max_failure_fraction: 1e-3,
            core_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionReport {
    /// Scale of price sensitivities the threshold is relative to.
    pub scale: f64,
    pub threshold: f64,
    pub nodes_checked: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub passed: bool,
    pub min_sigma: f64,
    pub median_sigma: f64,
    pub max_sigma: f64,
    /// Location `(t, x)` of the smallest singular value.
    pub worst: (f64, Vec<f64>),
    /// Relative distance between the dispersion at the last time before
    /// maturity and `∇F σ`.
    pub terminal_consistency: f64,
    /// Smallest singular value at every node and time before maturity.
    #[serde(skip)]
    pub sigma_min: Option<GridFunction>,
}

fn node_dispersion(
    sol: &EquilibriumSolution,
    k: usize,
    node: usize,
    sigma: &[f64],
) -> DMatrix<f64> {
    let d = sol.dim();
    let mut row = [0.0; MAX_DIM];
    let mut out = DMatrix::zeros(sol.n_stocks(), d);
    for (j, s) in sol.stocks.iter().enumerate() {
        s.node_dispersion_into(k, node, sigma, &mut row[..d]);
        for c in 0..d {
            out[(j, c)] = row[c];
        }
    }
    out
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.shape() == (1, 1) {
        return vec![m[(0, 0)].abs()];
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Rank test of `D = ∇s σ` at every node before maturity.
pub fn dispersion(
    econ: &Economy,
    sol: &EquilibriumSolution,
    cfg: &CompletenessConfig,
) -> Result<DispersionReport> {
    let d = sol.dim();
    let j_count = sol.n_stocks();
    if j_count < d {
        return Err(Error::Config(format!(
            "{j_count} stocks cannot span {d} sources of risk"
        )));
    }
    let grid: &SpatialGrid = &sol.grids.space;
    let times = sol.y.values.times.clone();
    let last = times.len() - 1;
    let n = grid.n_nodes();
    let checked = |node: usize| !grid.is_boundary(node) && grid.in_core(node, cfg.core_fraction);

    // (sigma_min, sigma_max) for every node and time before maturity
    let pairs: Vec<(f64, f64)> = (0..last * n)
        .into_par_iter()
        .map(|i| {
            let (k, node) = (i / n, i % n);
            let x = grid.node(node);
            let mut sigma = [0.0; MAX_DIM * MAX_DIM];
            sol.diffusion
                .volatility_into(times[k], &x, &mut sigma[..d * d]);
            let sv = singular_values(&node_dispersion(sol, k, node, &sigma[..d * d]));
            let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = sv.iter().copied().fold(0.0, f64::max);
            (lo, hi)
        })
        .collect();

    let half_width = (0..d)
        .map(|i| 0.5 * (grid.upper[i] - grid.lower[i]))
        .fold(0.0, f64::max);
    let mut highs: Vec<f64> = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    for (i, &(_, hi)) in pairs.iter().enumerate() {
        let (k, node) = (i / n, i % n);
        if checked(node) {
            highs.push(hi);
            for s in &sol.stocks {
                levels.push(s.values.value(k, node).abs());
            }
        }
    }
    if highs.is_empty() {
        return Err(Error::Config(
            "completeness check has no interior nodes; enlarge the grid".into(),
        ));
    }
    let scale = median(&mut highs).max(median(&mut levels) / half_width);
    let threshold = cfg.rel_tol * scale;

    let mut lows = Vec::new();
    let mut failures = 0;
    let mut worst = (f64::INFINITY, 0usize);
    for (i, &(lo, _)) in pairs.iter().enumerate() {
        if !checked(i % n) {
            continue;
        }
        lows.push(lo);
        if !(lo > threshold) {
            failures += 1;
        }
        if lo < worst.0 {
            worst = (lo, i);
        }
    }
    let nodes_checked = lows.len();
    let min_sigma = lows.iter().copied().fold(f64::INFINITY, f64::min);
    let max_sigma = lows.iter().copied().fold(0.0, f64::max);
    let median_sigma = median(&mut lows);
    let failure_fraction = failures as f64 / nodes_checked as f64;

    // terminal consistency at the last slice before maturity
    let k = last - 1;
    let mut consistency = 0.0f64;
    for node in (0..n).filter(|&node| checked(node)) {
        let x = grid.node(node);
        let mut sigma = [0.0; MAX_DIM * MAX_DIM];
        sol.diffusion
            .volatility_into(times[k], &x, &mut sigma[..d * d]);
        let numeric = node_dispersion(sol, k, node, &sigma[..d * d]);
        let exact = DMatrix::from_fn(j_count, d, |j, c| {
            (0..d)
                .map(|i| econ.spec.stocks[j].terminal.d_dx(1.0, &x, i) * sigma[i * d + c])
                .sum::<f64>()
        });
        let err = (&numeric - &exact).norm() / exact.norm().max(scale);
        consistency = consistency.max(err);
    }

    let sigma_min = GridFunction::from_slices(
        grid.clone(),
        times[..last].to_vec(),
        pairs.iter().map(|p| p.0).collect(),
    );
    Ok(DispersionReport {
        scale,
        threshold,
        nodes_checked,
        failures,
        failure_fraction,
        passed: failure_fraction < cfg.max_failure_fraction,
        min_sigma,
        median_sigma,
        max_sigma,
        worst: (times[worst.1 / n], grid.node(worst.1 % n)),
        terminal_consistency: consistency,
        sigma_min: Some(sigma_min),
    })
}

/// A terminal payoff `φ(X₁)`, in numeraire units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestClaim {
    pub name: String,
    pub payoff: Expr,
}

impl TestClaim {
    pub fn new(name: &str, payoff: Expr) -> Self {
        TestClaim {
            name: name.into(),
            payoff,
        }
    }
}

/// Random quadratics and exponentials along the state axes.
pub fn random_claims(count: usize, dim: usize, seed: u64) -> Vec<TestClaim> {
    let mut rng = path_rng(seed, usize::MAX >> 1);
    (0..count)
        .map(|i| {
            let payoff = if i % 2 == 0 {
                Expr::Polynomial {
                    coeffs: (0..dim)
                        .map(|_| {
                            vec![
                                rng.random_range(-1.0..1.0),
                                rng.random_range(-1.0..1.0),
                                rng.random_range(0.1..0.5),
                            ]
                        })
                        .collect(),
                }
            } else {
                Expr::exp_affine(0.0, rng.random_range(-0.5..0.5), rng.random_range(0..dim))
            };
            TestClaim::new(&format!("random_{i}"), payoff)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub paths: usize,
    /// Rebalancing steps per unit time.
    pub steps: usize,
    pub seed: u64,
    pub random_claims: usize,
    /// Bound on the replication RMS error relative to the payoff RMS.
    pub max_relative_rms: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            paths: 10_000,
            steps: 8192,
            seed: 0,
            random_claims: 2,
            max_relative_rms: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReplication {
    pub name: String,
    pub initial_value: f64,
    pub rms_error: f64,
    pub payoff_rms: f64,
    pub relative_rms: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub paths: usize,
    pub steps: usize,
    pub claims: Vec<ClaimReplication>,
    pub worst: String,
    pub worst_relative_rms: f64,
    pub passed: bool,
}

/// Replicates each claim by trading the stocks along freshly simulated
/// paths rebalanced `cfg.steps` times, and compares the terminal wealth with
/// the payoff.
pub fn martingale_uniqueness_probe(
    econ: &Economy,
    sol: &EquilibriumSolution,
    report: &DispersionReport,
    claims: &[TestClaim],
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    let x0 = econ.spec.diffusion.initial_state.clone();
    if !report.passed {
        return Err(Error::Completeness {
            t: report.worst.0,
            x: report.worst.1.clone(),
            message: format!(
                "dispersion check failed on {:.3}% of nodes; claims cannot be replicated",
                100.0 * report.failure_fraction
            ),
        });
    }
    if claims.is_empty() || cfg.paths == 0 || cfg.steps == 0 {
        return Err(Error::Config("probe needs claims, paths and steps".into()));
    }
    let kernels = Kernels::new(econ, &sol.weights)?;
    let surfaces = claims
        .par_iter()
        .map(|c| {
            let payoff = |x: &[f64]| Ok(c.payoff.eval(1.0, x));
            solve_claim(&kernels, &sol.grids, &sol.y.values, &payoff).map(Surface::new)
        })
        .collect::<Result<Vec<_>>>()?;
    let fine = TimeGrid::uniform(cfg.steps)?;
    let d = sol.dim();
    let nt = fine.n_times();

    // per path: (errors, payoffs) for each claim
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.paths)
        .into_par_iter()
        .map_init(
            || (vec![0.0; nt * d], vec![0.0; (nt - 1) * d]),
            |(states, incs), p| {
                replicate_path(
                    econ, sol, &surfaces, claims, &fine, cfg.seed, p, states, incs,
                )
            },
        )
        .collect::<Result<_>>()?;

    let mut results = Vec::new();
    for (c, claim) in claims.iter().enumerate() {
        let err2: Vec<f64> = rows.iter().map(|r| r.0[c] * r.0[c]).collect();
        let pay2: Vec<f64> = rows.iter().map(|r| r.1[c] * r.1[c]).collect();
        let rms_error = (pairwise_sum(&err2) / cfg.paths as f64).sqrt();
        let payoff_rms = (pairwise_sum(&pay2) / cfg.paths as f64).sqrt();
        let relative_rms = rms_error / payoff_rms.max(f64::MIN_POSITIVE);
        results.push(ClaimReplication {
            name: claim.name.clone(),
            initial_value: surfaces[c].value(0.0, &x0),
            rms_error,
            payoff_rms,
            relative_rms,
            passed: relative_rms < cfg.max_relative_rms,
        });
    }
    let worst = results
        .iter()
        .max_by(|a, b| a.relative_rms.total_cmp(&b.relative_rms))
        .expect("at least one claim");
    Ok(ProbeReport {
        paths: cfg.paths,
        steps: cfg.steps,
        worst: worst.name.clone(),
        worst_relative_rms: worst.relative_rms,
        passed: results.iter().all(|r| r.passed),
        claims: results,
    })
}

#[allow(clippy::too_many_arguments)]
fn replicate_path(
    econ: &Economy,
    sol: &EquilibriumSolution,
    surfaces: &[Surface],
    claims: &[TestClaim],
    fine: &TimeGrid,
    seed: u64,
    p: usize,
    states: &mut [f64],
    incs: &mut [f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = sol.dim();
    let jn = sol.n_stocks();
    let times = fine.times();
    simulate_path_into(&sol.diffusion, fine, seed, p, states, incs);
    let x_at = |k: usize| &states[k * d..(k + 1) * d];
    let alpha = |j: usize, t: f64, x: &[f64]| econ.dividend_growth(j, t, x) - econ.q(t, x);

    let mut ia = vec![0.0; jn];
    let mut accrued = vec![0.0; jn];
    let price = |j: usize, k: usize, ia: &[f64], acc: &[f64]| {
        acc[j] + ia[j].exp() * sol.stocks[j].value(times[k], x_at(k))
    };
    let mut s_old: Vec<f64> = (0..jn).map(|j| price(j, 0, &ia, &accrued)).collect();
    let mut wealth: Vec<f64> = surfaces.iter().map(|s| s.value(0.0, x_at(0))).collect();
    let mut sigma = [0.0; MAX_DIM * MAX_DIM];
    let mut rhs = [0.0; MAX_DIM];
    let mut holdings = vec![vec![0.0; jn]; claims.len()];
    for k in 0..times.len() - 1 {
        let (t, x) = (times[k], x_at(k));
        let dmat = sol.dispersion(t, x, &ia);
        let pinv = dispersion_pseudo_inverse(&dmat).map_err(|smin| Error::Completeness {
            t,
            x: x.to_vec(),
            message: format!("dispersion matrix is rank deficient along path {p} (smallest singular value {smin:e})"),
        })?;
        sol.diffusion.volatility_into(t, x, &mut sigma[..d * d]);
        for (c, s) in surfaces.iter().enumerate() {
            s.dispersion_into(t, x, &sigma[..d * d], &mut rhs[..d]);
            for j in 0..jn {
                holdings[c][j] = (0..d).map(|i| pinv[(j, i)] * rhs[i]).sum();
            }
        }
        let (t1, x1) = (times[k + 1], x_at(k + 1));
        let dt = t1 - t;
        for j in 0..jn {
            let ia0 = ia[j];
            ia[j] += 0.5 * dt * (alpha(j, t, x) + alpha(j, t1, x1));
            let a = &sol.accrual[j];
            accrued[j] += 0.5 * dt * (ia0.exp() * a.interp(t, x) + ia[j].exp() * a.interp(t1, x1));
        }
        let s_new: Vec<f64> = (0..jn).map(|j| price(j, k + 1, &ia, &accrued)).collect();
        for (c, w) in wealth.iter_mut().enumerate() {
            *w += (0..jn)
                .map(|j| holdings[c][j] * (s_new[j] - s_old[j]))
                .sum::<f64>();
        }
        s_old = s_new;
    }
    let x1 = x_at(times.len() - 1);
    let payoffs: Vec<f64> = claims.iter().map(|c| c.payoff.eval(1.0, x1)).collect();
    let errors = wealth.iter().zip(&payoffs).map(|(w, f)| w - f).collect();
    Ok((errors, payoffs))
}
