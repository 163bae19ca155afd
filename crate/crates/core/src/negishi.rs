//! Pareto allocations, the excess-expenditure map `Φ(w)` and its root on
//! the simplex, and the Arrow–Debreu state-price process `P(w)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{PathArray, PathBundle};
use crate::economy::{Economy, PrimitivePaths};
use crate::error::{Error, Result};
use crate::stats::Estimate;
use crate::utility::{aggregate, Aggregate, UtilityFn};

/// Point of the simplex `{w ≥ 0, Σ w = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("weight vector is empty".into()));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("weights must be nonnegative: {w:?}")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Config(format!("weights sum to {s}, not 1")));
        }
        Ok(WeightVector(w))
    }

    /// Rescales a nonnegative vector onto the simplex.
    pub fn normalized(w: &[f64]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Config(
                "cannot normalize a zero weight vector".into(),
            ));
        }
        WeightVector::new(w.iter().map(|v| v / s).collect())
    }

    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

pub(crate) fn aggregates(econ: &Economy, w: &WeightVector) -> Result<(Aggregate, Aggregate)> {
    if w.len() != econ.n_agents() {
        return Err(Error::Config(format!(
            "{} weights for {} agents",
            w.len(),
            econ.n_agents()
        )));
    }
    Ok((
        aggregate(&econ.intermediate, w.as_slice(), econ.splitter)?,
        aggregate(&econ.terminal, w.as_slice(), econ.splitter)?,
    ))
}

/// Pareto split of `total` among agents with weighted utilities.
pub fn pareto_allocation(
    utilities: &[UtilityFn],
    w: &WeightVector,
    total: f64,
    t: f64,
    x: &[f64],
    splitter: crate::utility::SplitterConfig,
) -> Result<Vec<f64>> {
    aggregate(utilities, w.as_slice(), splitter)?.allocate(t, total, x)
}

/// Pathwise equilibrium allocations for a weight vector.
#[derive(Debug, Clone)]
pub struct Allocations {
    /// `πᵐ_t` per agent.
    pub consumption: Vec<PathArray>,
    /// `Πᵐ` per agent.
    pub terminal: Vec<Vec<f64>>,
    /// `u_c(t, λ_t, X_t; w)`.
    pub marginal: PathArray,
    /// `U_c(Λ, X₁; w)`.
    pub terminal_marginal: Vec<f64>,
}

struct AllocRow {
    consumption: Vec<f64>, // [time][agent]
    terminal: Vec<f64>,
    marginal: Vec<f64>,
    terminal_marginal: f64,
}

fn check_marginal(v: f64, p: usize, k: usize) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::eval(
            format!("path {p}, time index {k}"),
            format!("aggregate marginal utility is {v}"),
        ))
    }
}

pub fn allocate_paths(
    econ: &Economy,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
    w: &WeightVector,
) -> Result<Allocations> {
    let (agg_rate, agg_term) = aggregates(econ, w)?;
    let nt = prim.times.len();
    let m = econ.n_agents();
    let rows: Vec<AllocRow> = (0..prim.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut consumption = vec![0.0; nt * m];
            let mut marginal = vec![0.0; nt];
            for k in 0..nt {
                let t = prim.times[k];
                let out = &mut consumption[k * m..(k + 1) * m];
                let uc = agg_rate.allocate_with_marginal(
                    t,
                    prim.income_rate.get(p, k),
                    bundle.state(p, k),
                    out,
                )?;
                marginal[k] = check_marginal(uc, p, k)?;
            }
            let mut terminal = vec![0.0; m];
            let uc = agg_term.allocate_with_marginal(
                1.0,
                prim.endowment[p],
                bundle.terminal(p),
                &mut terminal,
            )?;
            Ok(AllocRow {
                consumption,
                terminal,
                marginal,
                terminal_marginal: check_marginal(uc, p, nt - 1)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = prim.n_paths;
    Ok(Allocations {
        consumption: (0..m)
            .map(|a| {
                PathArray::from_rows(
                    n,
                    nt,
                    rows.iter()
                        .flat_map(|r| (0..nt).map(move |k| r.consumption[k * m + a]))
                        .collect(),
                )
            })
            .collect(),
        terminal: (0..m)
            .map(|a| rows.iter().map(|r| r.terminal[a]).collect())
            .collect(),
        marginal: PathArray::from_rows(
            n,
            nt,
            rows.iter()
                .flat_map(|r| r.marginal.iter().copied())
                .collect(),
        ),
        terminal_marginal: rows.iter().map(|r| r.terminal_marginal).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessReport {
    pub phi: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n_paths: usize,
    /// `max_paths |Σ_m φᵐ_path|`, the per-path clearing residual.
    pub max_path_sum_residual: f64,
}

impl ExcessReport {
    pub fn sup_norm(&self) -> f64 {
        self.phi.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_standard_error(&self) -> f64 {
        self.standard_errors.iter().fold(0.0, |a, v| a.max(*v))
    }
}

/// Per-path contributions `φᵐ_path` for an allocation.
pub fn excess_samples(econ: &Economy, prim: &PrimitivePaths, alloc: &Allocations) -> Vec<Vec<f64>> {
    let nt = prim.times.len();
    let times = &prim.times;
    (0..econ.n_agents())
        .map(|m| {
            (0..prim.n_paths)
                .into_par_iter()
                .map(|p| {
                    let disc = |k: usize| (-prim.int_r.get(p, k)).exp();
                    let integrand = |k: usize| {
                        disc(k)
                            * alloc.marginal.get(p, k)
                            * (alloc.consumption[m].get(p, k)
                                - prim.agent_income_rates[m].get(p, k))
                    };
                    let mut running = 0.0;
                    let mut prev = integrand(0);
                    for k in 1..nt {
                        let cur = integrand(k);
                        running += 0.5 * (prev + cur) * (times[k] - times[k - 1]);
                        prev = cur;
                    }
                    running
                        + disc(nt - 1)
                            * alloc.terminal_marginal[p]
                            * (alloc.terminal[m][p] - prim.agent_endowments[m][p])
                })
                .collect()
        })
        .collect()
}

pub fn excess_map(
    econ: &Economy,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
    w: &WeightVector,
) -> Result<ExcessReport> {
    let alloc = allocate_paths(econ, prim, bundle, w)?;
    Ok(excess_from_allocations(econ, prim, &alloc))
}

pub fn excess_from_allocations(
    econ: &Economy,
    prim: &PrimitivePaths,
    alloc: &Allocations,
) -> ExcessReport {
    let samples = excess_samples(econ, prim, alloc);
    let estimates: Vec<Estimate> = samples.iter().map(|s| Estimate::from_samples(s)).collect();
    let max_path_sum_residual = (0..prim.n_paths)
        .map(|p| samples.iter().map(|s| s[p]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    ExcessReport {
        phi: estimates.iter().map(|e| e.mean).collect(),
        standard_errors: estimates.iter().map(|e| e.standard_error).collect(),
        n_paths: prim.n_paths,
        max_path_sum_residual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NegishiConfig {
    pub abs_tol: f64,
    pub max_iterations: usize,
    /// Relative step for the central-difference Jacobian.
    pub fd_step: f64,
    pub clip: f64,
    /// Consecutive clipped iterations tolerated before giving up.
    pub max_clipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for NegishiConfig {
    fn default() -> Self {
        NegishiConfig {
            abs_tol: 1e-10,
            max_iterations: 50,
            fd_step: 1e-5,
            clip: 1e-10,
            max_clipped: 3,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub weights: Vec<f64>,
    pub residual: f64,
    pub step: f64,
    pub phi_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegishiSolution {
    pub weights: WeightVector,
    pub report: ExcessReport,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub method: String,
}

/// Largest fraction of any weight a single Newton step may remove.
const BOUNDARY_FRACTION: f64 = 0.9;

struct Solver<'a> {
    econ: &'a Economy,
    prim: &'a PrimitivePaths,
    bundle: &'a PathBundle,
    cfg: &'a NegishiConfig,
    trace: Vec<TraceRow>,
}

impl Solver<'_> {
    fn eval(&self, w: &[f64]) -> Result<ExcessReport> {
        excess_map(
            self.econ,
            self.prim,
            self.bundle,
            &WeightVector::normalized(w)?,
        )
    }

    fn target(&self, r: &ExcessReport) -> f64 {
        self.cfg.abs_tol.max(3.0 * r.max_standard_error())
    }

    fn record(&mut self, w: &[f64], r: &ExcessReport, step: f64) {
        self.trace.push(TraceRow {
            iteration: self.trace.len(),
            weights: w.to_vec(),
            residual: r.sup_norm(),
            step,
            phi_sum: r.phi.iter().sum(),
        });
    }

    /// Full simplex point from the first `M-1` coordinates, clipped.
    fn complete(&self, v: &[f64]) -> (Vec<f64>, bool) {
        let mut w = v.to_vec();
        w.push(1.0 - v.iter().sum::<f64>());
        let mut clipped = false;
        for x in w.iter_mut() {
            if !(*x >= self.cfg.clip) {
                *x = self.cfg.clip;
                clipped = true;
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        (w, clipped)
    }

    fn jacobian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        let k = w.len() - 1;
        let mut jac = DMatrix::zeros(k, k);
        for j in 0..k {
            let h = self.cfg.fd_step * w[j].min(w[k]).max(1e-3);
            let mut up = w[..k].to_vec();
            let mut dn = w[..k].to_vec();
            up[j] += h;
            dn[j] -= h;
            let fu = self.eval(&self.complete(&up).0)?;
            let fd = self.eval(&self.complete(&dn).0)?;
            for i in 0..k {
                jac[(i, j)] = (fu.phi[i] - fd.phi[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    fn newton(&mut self, start: Vec<f64>) -> Result<NegishiSolution> {
        let k = start.len() - 1;
        let mut w = start;
        let mut r = self.eval(&w)?;
        self.record(&w, &r, 0.0);
        let mut best = (r.sup_norm(), w.clone());
        let mut clipped_run = 0;
        for it in 0..self.cfg.max_iterations {
            if r.sup_norm() <= self.target(&r) {
                return Ok(self.finish(w, r, it, "newton"));
            }
            let jac = self.jacobian(&w)?;
            let rhs = DVector::from_iterator(k, r.phi[..k].iter().map(|v| -v));
            let Some(delta) = jac
                .clone()
                .lu()
                .solve(&rhs)
                .filter(|d| d.iter().all(|v| v.is_finite()))
            else {
                break;
            };
            // fraction-to-boundary: no weight, the implied last one included,
            // loses more than BOUNDARY_FRACTION of its value in one step
            let last = -delta.iter().sum::<f64>();
            let mut lambda = (0..=k)
                .map(|i| {
                    let d = if i < k { delta[i] } else { last };
                    if d < 0.0 {
                        BOUNDARY_FRACTION * w[i] / -d
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(1.0, f64::min);
            let mut accepted = None;
            for _ in 0..30 {
                let v: Vec<f64> = (0..k).map(|i| w[i] + lambda * delta[i]).collect();
                let (cand, clipped) = self.complete(&v);
                let rc = self.eval(&cand)?;
                if rc.sup_norm() < (1.0 - 1e-4 * lambda) * r.sup_norm() {
                    accepted = Some((cand, rc, clipped));
                    break;
                }
                lambda *= 0.5;
            }
            let Some((cand, rc, clipped)) = accepted else {
                break;
            };
            clipped_run = if clipped { clipped_run + 1 } else { 0 };
            if clipped_run >= self.cfg.max_clipped {
                return Err(Error::Boundary { weights: cand });
            }
            let step = cand
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            w = cand;
            r = rc;
            self.record(&w, &r, step);
            if r.sup_norm() < best.0 {
                best = (r.sup_norm(), w.clone());
            }
        }
        if r.sup_norm() <= self.target(&r) {
            let n = self.trace.len();
            return Ok(self.finish(w, r, n, "newton"));
        }
        if k == 1 {
            return self.bisect();
        }
        Err(Error::NonConvergence {
            iterations: self.trace.len(),
            best: best.1,
            residual: best.0,
            residual_trace: self.trace.iter().map(|t| t.residual).collect(),
        })
    }

    /// Two agents: `Φ¹` changes sign across `(0, 1)`.
    fn bisect(&mut self) -> Result<NegishiSolution> {
        let mut lo = self.cfg.clip;
        let mut hi = 1.0 - self.cfg.clip;
        let f_lo = self.eval(&[lo, 1.0 - lo])?.phi[0];
        let f_hi = self.eval(&[hi, 1.0 - hi])?.phi[0];
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::NonConvergence {
                iterations: self.trace.len(),
                best: vec![0.5, 0.5],
                residual: f_lo.abs().min(f_hi.abs()),
                residual_trace: self.trace.iter().map(|t| t.residual).collect(),
            });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let w = vec![mid, 1.0 - mid];
            let r = self.eval(&w)?;
            self.record(&w, &r, hi - lo);
            if r.sup_norm() <= self.target(&r) || hi - lo < 1e-15 {
                let n = self.trace.len();
                return Ok(self.finish(w, r, n, "bisection"));
            }
            if r.phi[0].signum() == f_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        unreachable!("bisection interval shrinks below 1e-15 within 200 halvings")
    }

    fn finish(
        &mut self,
        w: Vec<f64>,
        report: ExcessReport,
        iterations: usize,
        method: &str,
    ) -> NegishiSolution {
        let s: f64 = w.iter().sum();
        NegishiSolution {
            weights: WeightVector(w.iter().map(|v| v / s).collect()),
            report,
            trace: std::mem::take(&mut self.trace),
            iterations,
            method: method.into(),
        }
    }
}

/// Solves `Φ(w) = 0` on the simplex with common random numbers.
pub fn solve_weights(
    econ: &Economy,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
    cfg: &NegishiConfig,
) -> Result<NegishiSolution> {
    let m = econ.n_agents();
    let mut solver = Solver {
        econ,
        prim,
        bundle,
        cfg,
        trace: Vec::new(),
    };
    if m == 1 {
        let w = vec![1.0];
        let r = solver.eval(&w)?;
        solver.record(&w, &r, 0.0);
        return Ok(solver.finish(w, r, 0, "trivial"));
    }
    let start = match &cfg.start {
        Some(s) => WeightVector::normalized(s)?.0,
        None => WeightVector::uniform(m).0,
    };
    if start.iter().any(|&v| v <= 0.0) {
        return Err(Error::Config("starting weights must be interior".into()));
    }
    solver.newton(start)
}

/// Runs the solver from each start; failures are kept alongside successes.
pub fn solve_weights_multistart(
    econ: &Economy,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
    cfg: &NegishiConfig,
    starts: &[Vec<f64>],
) -> Vec<Result<NegishiSolution>> {
    starts
        .iter()
        .map(|s| {
            let c = NegishiConfig {
                start: Some(s.clone()),
                ..cfg.clone()
            };
            solve_weights(econ, prim, bundle, &c)
        })
        .collect()
}

/// Arrow–Debreu state prices along paths.
#[derive(Debug, Clone)]
pub struct StatePrices {
    /// `e^{-∫₀ᵗ r} u_c(t, λ_t, X_t; w)` at every grid time.
    pub rate: PathArray,
    /// `P₁ = e^{-∫₀¹ r} U_c(Λ, X₁; w)`.
    pub terminal: Vec<f64>,
    /// `E[P₁ Ψ]`.
    pub normalization: Estimate,
}

impl StatePrices {
    /// `P_t`: the rate price before maturity, the terminal price at `t = 1`.
    pub fn at(&self, p: usize, k: usize) -> f64 {
        if k + 1 == self.rate.n_times {
            self.terminal[p]
        } else {
            self.rate.get(p, k)
        }
    }
}

pub fn state_prices(prim: &PrimitivePaths, alloc: &Allocations) -> StatePrices {
    let nt = prim.times.len();
    let n = prim.n_paths;
    let mut rate = PathArray::zeros(n, nt);
    for p in 0..n {
        let row = rate.row_mut(p);
        for (k, v) in row.iter_mut().enumerate() {
            *v = (-prim.int_r.get(p, k)).exp() * alloc.marginal.get(p, k);
        }
    }
    let terminal: Vec<f64> = (0..n)
        .map(|p| (-prim.int_r.last(p)).exp() * alloc.terminal_marginal[p])
        .collect();
    let weighted: Vec<f64> = (0..n).map(|p| terminal[p] * prim.notional[p]).collect();
    StatePrices {
        rate,
        terminal,
        normalization: Estimate::from_samples(&weighted),
    }
}

pub fn state_price(
    econ: &Economy,
    prim: &PrimitivePaths,
    bundle: &PathBundle,
    w: &WeightVector,
) -> Result<StatePrices> {
    let alloc = allocate_paths(econ, prim, bundle, w)?;
    Ok(state_prices(prim, &alloc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{simulate_paths, DiffusionSpec, TimeGrid};
    use crate::economy::{evaluate_primitives, AgentSpec, EconomySpec, LogIncomeRate, StockSpec};
    use crate::expr::Expr;
    use crate::utility::{SplitterConfig, UtilitySpec};

    fn agent(name: &str, u: UtilitySpec, share: f64) -> AgentSpec {
        AgentSpec {
            name: name.into(),
            intermediate: u.clone(),
            terminal: u,
            terminal_share: Expr::constant(share),
            rate_share: Expr::constant(share),
        }
    }

    fn economy(agents: Vec<AgentSpec>, r: f64) -> Economy {
        let spec = EconomySpec {
            diffusion: DiffusionSpec::brownian(0.0),
            notional: Expr::constant(1.0),
            notional_rate: Expr::constant(0.0),
            impatience_rate: Expr::constant(r),
            log_endowment: Expr::affine(0.0, 1.0, 0),
            log_income_rate: LogIncomeRate {
                time_part: Expr::constant(0.0),
                state_part: Expr::affine(0.0, 0.5, 0),
            },
            stocks: vec![StockSpec {
                terminal: Expr::affine(0.0, 1.0, 0),
                dividend_rate: Expr::constant(0.0),
                dividend_growth: Expr::constant(0.0),
            }],
            agents,
        };
        Economy::new(spec, SplitterConfig::default()).unwrap()
    }

    fn setup(econ: &Economy, n: usize, seed: u64) -> (PathBundle, PrimitivePaths) {
        let b = simulate_paths(
            &econ.spec.diffusion,
            &TimeGrid::uniform(10).unwrap(),
            n,
            seed,
        )
        .unwrap();
        let p = evaluate_primitives(econ, &b).unwrap();
        (b, p)
    }

    fn w(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert_eq!(
            WeightVector::normalized(&[1.0, 3.0]).unwrap().as_slice(),
            &[0.25, 0.75]
        );
    }

    #[test]
    fn pareto_allocation_examples() {
        let logs = vec![UtilityFn::log(), UtilityFn::log()];
        let cfg = SplitterConfig::default();
        assert_eq!(
            pareto_allocation(&logs[..1], &w(&[1.0]), 3.0, 0.0, &[0.0], cfg).unwrap(),
            vec![3.0]
        );
        assert_eq!(
            pareto_allocation(&logs, &w(&[0.5, 0.5]), 2.0, 0.0, &[0.0], cfg).unwrap(),
            vec![1.0, 1.0]
        );
        let a = pareto_allocation(&logs, &w(&[0.25, 0.75]), 4.0, 0.0, &[0.0], cfg).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-14 && (a[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_agent_has_zero_excess() {
        let econ = economy(vec![agent("a", UtilitySpec::crra(2.0), 1.0)], 0.1);
        let (b, p) = setup(&econ, 200, 1);
        let r = excess_map(&econ, &p, &b, &w(&[1.0])).unwrap();
        assert!(r.phi[0].abs() < 1e-12);
        let s = solve_weights(&econ, &p, &b, &NegishiConfig::default()).unwrap();
        assert_eq!(s.weights.as_slice(), &[1.0]);
    }

    #[test]
    fn symmetric_agents_have_zero_excess_at_half() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::crra(2.0), 0.5),
                agent("b", UtilitySpec::crra(2.0), 0.5),
            ],
            0.0,
        );
        let (b, p) = setup(&econ, 500, 2);
        let r = excess_map(&econ, &p, &b, &w(&[0.5, 0.5])).unwrap();
        for m in 0..2 {
            assert!(r.phi[m].abs() <= 3.0 * r.standard_errors[m] + 1e-14);
        }
    }

    #[test]
    fn excess_sums_to_zero_per_path() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::crra(0.5), 0.2),
                agent("b", UtilitySpec::crra(3.0), 0.5),
                agent("c", UtilitySpec::log(), 0.3),
            ],
            0.05,
        );
        let (b, p) = setup(&econ, 300, 3);
        let r = excess_map(&econ, &p, &b, &w(&[0.1, 0.6, 0.3])).unwrap();
        assert!(r.max_path_sum_residual < 1e-10);
        assert!(r.phi.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn excess_of_an_agent_grows_with_its_weight() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::crra(0.5), 0.4),
                agent("b", UtilitySpec::crra(3.0), 0.6),
            ],
            0.0,
        );
        let (b, p) = setup(&econ, 300, 4);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..10 {
            let w1 = k as f64 / 10.0;
            let phi = excess_map(&econ, &p, &b, &w(&[w1, 1.0 - w1])).unwrap().phi[0];
            assert!(phi > prev);
            prev = phi;
        }
    }

    #[test]
    fn log_agents_solve_at_their_income_shares() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::log(), 0.3),
                agent("b", UtilitySpec::log(), 0.7),
            ],
            0.0,
        );
        let (b, p) = setup(&econ, 2000, 5);
        let s = solve_weights(&econ, &p, &b, &NegishiConfig::default()).unwrap();
        assert!(
            (s.weights.as_slice()[0] - 0.3).abs() < 1e-9,
            "{:?}",
            s.weights
        );
        // an independent bundle agrees that these weights clear
        let (b2, p2) = setup(&econ, 2000, 6);
        let r = excess_map(&econ, &p2, &b2, &w(&[0.3, 0.7])).unwrap();
        assert!(r.sup_norm() <= 3.0 * r.max_standard_error() + 1e-12);
    }

    #[test]
    fn symmetric_solve_from_off_center() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::crra(2.0), 0.5),
                agent("b", UtilitySpec::crra(2.0), 0.5),
            ],
            0.0,
        );
        let (b, p) = setup(&econ, 1000, 7);
        let cfg = NegishiConfig {
            start: Some(vec![0.8, 0.2]),
            ..NegishiConfig::default()
        };
        let s = solve_weights(&econ, &p, &b, &cfg).unwrap();
        assert!((s.weights.as_slice()[0] - 0.5).abs() < 1e-6);
        assert!(s.iterations <= 25);
        let again = solve_weights(&econ, &p, &b, &cfg).unwrap();
        assert_eq!(s.weights, again.weights);
    }

    #[test]
    fn state_price_examples() {
        // log aggregate with λ = 1: u_c = 1/λ = 1
        let mut econ = economy(vec![agent("a", UtilitySpec::log(), 1.0)], 0.0);
        econ.spec.log_income_rate.state_part = Expr::constant(0.0);
        let (b, p) = setup(&econ, 50, 8);
        let sp = state_price(&econ, &p, &b, &w(&[1.0])).unwrap();
        for path in 0..50 {
            for k in 0..10 {
                assert!((sp.at(path, k) - 1.0).abs() < 1e-15);
            }
        }
        let mut econ = economy(vec![agent("a", UtilitySpec::log(), 1.0)], 0.3);
        econ.spec.log_income_rate.state_part = Expr::constant(0.0);
        let (b, p) = setup(&econ, 5, 8);
        let sp = state_price(&econ, &p, &b, &w(&[1.0])).unwrap();
        for k in 0..10 {
            assert!((sp.at(0, k) - (-0.3 * k as f64 / 10.0).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn benchmark_normalization() {
        // P₁Ψ = 1/Λ = e^{-X₁}: mean e^{1/2}
        let econ = economy(vec![agent("a", UtilitySpec::log(), 1.0)], 0.0);
        let (b, p) = setup(&econ, 40_000, 9);
        let sp = state_price(&econ, &p, &b, &w(&[1.0])).unwrap();
        assert!(
            sp.normalization.within(0.5f64.exp(), 3.0),
            "{:?}",
            sp.normalization
        );
    }

    #[test]
    fn scaling_prices_keeps_roots() {
        let econ = economy(
            vec![
                agent("a", UtilitySpec::crra(0.5), 0.4),
                agent("b", UtilitySpec::crra(3.0), 0.6),
            ],
            0.0,
        );
        let (b, p) = setup(&econ, 300, 10);
        let s = solve_weights(&econ, &p, &b, &NegishiConfig::default()).unwrap();
        let mut alloc = allocate_paths(&econ, &p, &b, &s.weights).unwrap();
        let base = excess_from_allocations(&econ, &p, &alloc);
        let y = 7.5;
        alloc.marginal = alloc.marginal.map(|v| y * v);
        alloc.terminal_marginal.iter_mut().for_each(|v| *v *= y);
        let scaled = excess_from_allocations(&econ, &p, &alloc);
        for m in 0..2 {
            assert!((scaled.phi[m] - y * base.phi[m]).abs() < 1e-12 * (1.0 + scaled.phi[m].abs()));
            assert!(
                scaled.phi[m].abs()
                    <= 3.0 * scaled.standard_errors[m].max(1e-12 / 3.0) + y * econ_tol()
            );
        }
    }

    fn econ_tol() -> f64 {
        NegishiConfig::default().abs_tol
    }
}
