//! Model primitives: notional, stock dividends, impatience rate, aggregate
//! and individual incomes, and the agents' utilities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    path_integral, DiffusionSpec, PathArray, PathBundle, SpatialGrid, TimeGrid,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::stats::median;
use crate::utility::{SplitterConfig, UtilityFn, UtilitySpec};

fn zero() -> Expr {
    Expr::constant(0.0)
}

fn one() -> Expr {
    Expr::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSpec {
    /// Terminal dividend factor `F(x)`.
    pub terminal: Expr,
    /// Dividend rate `f(t,x)`.
    #[serde(default = "zero")]
    pub dividend_rate: Expr,
    /// Dividend growth rate `p(t,x)`.
    #[serde(default = "zero")]
    pub dividend_growth: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub intermediate: UtilitySpec,
    pub terminal: UtilitySpec,
    /// Unnormalized share of the terminal endowment.
    #[serde(default = "one")]
    pub terminal_share: Expr,
    /// Unnormalized share of the income rate.
    #[serde(default = "one")]
    pub rate_share: Expr,
}

/// `h(t,x) = h₁(t,x) + h₂(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogIncomeRate {
    #[serde(default = "zero")]
    pub time_part: Expr,
    #[serde(default = "zero")]
    pub state_part: Expr,
}

impl LogIncomeRate {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.time_part.eval(t, x) + self.state_part.eval(t, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomySpec {
    pub diffusion: DiffusionSpec,
    /// `G(x)`.
    pub notional: Expr,
    /// `q(t,x)`.
    #[serde(default = "zero")]
    pub notional_rate: Expr,
    /// `r(t,x)`.
    #[serde(default = "zero")]
    pub impatience_rate: Expr,
    /// `H(x)`, so that the terminal endowment is `e^H`.
    pub log_endowment: Expr,
    pub log_income_rate: LogIncomeRate,
    pub stocks: Vec<StockSpec>,
    pub agents: Vec<AgentSpec>,
}

/// Validated economy with built utilities.
#[derive(Debug, Clone)]
pub struct Economy {
    pub spec: EconomySpec,
    pub intermediate: Vec<UtilityFn>,
    pub terminal: Vec<UtilityFn>,
    pub splitter: SplitterConfig,
}

impl Economy {
    pub fn new(spec: EconomySpec, splitter: SplitterConfig) -> Result<Self> {
        spec.diffusion.check()?;
        let d = spec.diffusion.dimension;
        if spec.agents.is_empty() {
            return Err(Error::Config("economy needs at least one agent".into()));
        }
        if spec.stocks.is_empty() {
            return Err(Error::Config("economy needs at least one stock".into()));
        }
        for e in [
            &spec.notional,
            &spec.notional_rate,
            &spec.impatience_rate,
            &spec.log_endowment,
            &spec.log_income_rate.time_part,
            &spec.log_income_rate.state_part,
        ] {
            e.validate(d)?;
        }
        if spec.log_income_rate.state_part.depends_on_time() {
            return Err(Error::Config(
                "state part of the log income rate must not depend on time".into(),
            ));
        }
        for s in &spec.stocks {
            s.terminal.validate(d)?;
            s.dividend_rate.validate(d)?;
            s.dividend_growth.validate(d)?;
        }
        let mut intermediate = Vec::new();
        let mut terminal = Vec::new();
        for a in &spec.agents {
            a.terminal_share.validate(d)?;
            a.rate_share.validate(d)?;
            intermediate.push(a.intermediate.build(d, splitter)?);
            terminal.push(a.terminal.build(d, splitter)?);
        }
        Ok(Economy {
            spec,
            intermediate,
            terminal,
            splitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.diffusion.dimension
    }

    pub fn n_agents(&self) -> usize {
        self.spec.agents.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.spec.stocks.len()
    }

    pub fn notional(&self, x: &[f64]) -> f64 {
        self.spec.notional.eval(1.0, x)
    }

    pub fn q(&self, t: f64, x: &[f64]) -> f64 {
        self.spec.notional_rate.eval(t, x)
    }

    pub fn r(&self, t: f64, x: &[f64]) -> f64 {
        self.spec.impatience_rate.eval(t, x)
    }

    pub fn h(&self, t: f64, x: &[f64]) -> f64 {
        self.spec.log_income_rate.eval(t, x)
    }

    pub fn big_h(&self, x: &[f64]) -> f64 {
        self.spec.log_endowment.eval(1.0, x)
    }

    pub fn terminal_factor(&self, j: usize, x: &[f64]) -> f64 {
        self.spec.stocks[j].terminal.eval(1.0, x)
    }

    pub fn dividend_rate(&self, j: usize, t: f64, x: &[f64]) -> f64 {
        self.spec.stocks[j].dividend_rate.eval(t, x)
    }

    pub fn dividend_growth(&self, j: usize, t: f64, x: &[f64]) -> f64 {
        self.spec.stocks[j].dividend_growth.eval(t, x)
    }

    /// Splits `total` by the normalized terminal shares.
    pub fn terminal_incomes_into(
        &self,
        total: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<(), String> {
        let raw: Vec<f64> = self
            .spec
            .agents
            .iter()
            .map(|a| a.terminal_share.eval(1.0, x))
            .collect();
        split_by_shares(total, &raw, out)
    }

    /// Splits `total` by the normalized rate shares at `(t, x)`.
    pub fn rate_incomes_into(
        &self,
        total: f64,
        t: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<(), String> {
        let raw: Vec<f64> = self
            .spec
            .agents
            .iter()
            .map(|a| a.rate_share.eval(t, x))
            .collect();
        split_by_shares(total, &raw, out)
    }
}

/// Proportional split of `total` whose components add back to `total` up to
/// rounding: the agent with the largest share takes the remainder.
fn split_by_shares(total: f64, raw: &[f64], out: &mut [f64]) -> Result<(), String> {
    if let Some(bad) = raw.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(format!(
            "income share must be finite and nonnegative, got {bad}"
        ));
    }
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) {
        return Err("income shares sum to zero".into());
    }
    let largest = (0..raw.len())
        .max_by(|&a, &b| raw[a].total_cmp(&raw[b]))
        .unwrap_or(0);
    let mut rest = 0.0;
    for (m, o) in out.iter_mut().enumerate() {
        if m != largest {
            *o = total * (raw[m] / sum);
            rest += *o;
        }
    }
    out[largest] = (total - rest).max(0.0);
    Ok(())
}

/// Pathwise primitive processes.
#[derive(Debug, Clone)]
pub struct PrimitivePaths {
    pub n_paths: usize,
    pub times: Vec<f64>,
    /// `Ψ = G(X₁) e^{∫q}` per path.
    pub notional: Vec<f64>,
    pub int_q: PathArray,
    pub int_r: PathArray,
    /// `∫₀ᵗ pʲ` per stock.
    pub int_p: Vec<PathArray>,
    /// Dividend rates `θʲ_t = fʲ e^{∫pʲ}` per stock.
    pub dividend_rates: Vec<PathArray>,
    /// Terminal dividends `Θʲ = G Fʲ e^{∫pʲ}` per stock.
    pub terminal_dividends: Vec<Vec<f64>>,
    /// `λ_t = e^{h(t,X_t)}`.
    pub income_rate: PathArray,
    /// `Λ = e^{H(X₁)}` per path.
    pub endowment: Vec<f64>,
    /// `λᵐ_t` per agent.
    pub agent_income_rates: Vec<PathArray>,
    /// `Λᵐ` per agent.
    pub agent_endowments: Vec<Vec<f64>>,
}

impl PrimitivePaths {
    /// Cumulative dividends `D_t = ∫₀ᵗ θ ds`, plus `Θ` at the final time.
    pub fn cumulative_dividends(&self, j: usize) -> PathArray {
        let nt = self.times.len();
        let mut out = PathArray::zeros(self.n_paths, nt);
        for p in 0..self.n_paths {
            let theta = self.dividend_rates[j].row(p);
            let row = out.row_mut(p);
            for k in 1..nt {
                row[k] = row[k - 1]
                    + 0.5 * (theta[k] + theta[k - 1]) * (self.times[k] - self.times[k - 1]);
            }
            row[nt - 1] += self.terminal_dividends[j][p];
        }
        out
    }

    /// Fraction of paths on which each agent receives positive income.
    pub fn income_positivity(&self) -> Vec<f64> {
        self.agent_endowments
            .iter()
            .zip(&self.agent_income_rates)
            .map(|(end, rates)| {
                let n = (0..self.n_paths)
                    .filter(|&p| end[p] > 0.0 || rates.row(p).iter().any(|&v| v > 0.0))
                    .count();
                n as f64 / self.n_paths as f64
            })
            .collect()
    }
}

fn positive(v: f64, what: &str, path: usize, time_index: usize) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Primitive {
            path,
            time_index,
            message: format!("{what} must be positive and finite, got {v}"),
        })
    }
}

struct PathRow {
    notional: f64,
    endowment: f64,
    terminal: Vec<f64>,
    agent_endowments: Vec<f64>,
    // [time][agent]
    agent_rates: Vec<f64>,
    income_rate: Vec<f64>,
    dividend_rates: Vec<Vec<f64>>,
}

pub fn evaluate_primitives(econ: &Economy, bundle: &PathBundle) -> Result<PrimitivePaths> {
    let times = bundle.times.times().to_vec();
    let nt = times.len();
    let n_agents = econ.n_agents();
    let n_stocks = econ.n_stocks();
    let int_q = path_integral(bundle, |t, x| econ.q(t, x))?;
    let int_r = path_integral(bundle, |t, x| econ.r(t, x))?;
    let int_p = (0..n_stocks)
        .map(|j| path_integral(bundle, |t, x| econ.dividend_growth(j, t, x)))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<PathRow> = (0..bundle.n_paths)
        .into_par_iter()
        .map(|p| {
            let x1 = bundle.terminal(p);
            let g = positive(econ.notional(x1), "notional factor G", p, nt - 1)?;
            let notional = positive(g * int_q.last(p).exp(), "notional", p, nt - 1)?;
            let endowment = positive(econ.big_h(x1).exp(), "terminal endowment", p, nt - 1)?;
            let terminal: Vec<f64> = (0..n_stocks)
                .map(|j| g * econ.terminal_factor(j, x1) * int_p[j].last(p).exp())
                .collect();
            let mut agent_endowments = vec![0.0; n_agents];
            econ.terminal_incomes_into(endowment, x1, &mut agent_endowments)
                .map_err(|message| Error::Primitive {
                    path: p,
                    time_index: nt - 1,
                    message,
                })?;
            let mut agent_rates = vec![0.0; nt * n_agents];
            let mut income_rate = vec![0.0; nt];
            let mut dividend_rates = vec![vec![0.0; nt]; n_stocks];
            for k in 0..nt {
                let t = times[k];
                let x = bundle.state(p, k);
                let lam = positive(econ.h(t, x).exp(), "income rate", p, k)?;
                income_rate[k] = lam;
                econ.rate_incomes_into(
                    lam,
                    t,
                    x,
                    &mut agent_rates[k * n_agents..(k + 1) * n_agents],
                )
                .map_err(|message| Error::Primitive {
                    path: p,
                    time_index: k,
                    message,
                })?;
                for j in 0..n_stocks {
                    dividend_rates[j][k] = econ.dividend_rate(j, t, x) * int_p[j].get(p, k).exp();
                }
            }
            Ok(PathRow {
                notional,
                endowment,
                terminal,
                agent_endowments,
                agent_rates,
                income_rate,
                dividend_rates,
            })
        })
        .collect::<Result<_>>()?;

    let n = bundle.n_paths;
    let gather = |f: &dyn Fn(&PathRow) -> &[f64]| {
        PathArray::from_rows(
            n,
            nt,
            rows.iter().flat_map(|r| f(r).iter().copied()).collect(),
        )
    };
    Ok(PrimitivePaths {
        n_paths: n,
        notional: rows.iter().map(|r| r.notional).collect(),
        int_q,
        int_r,
        int_p,
        dividend_rates: (0..n_stocks)
            .map(|j| gather(&|r| &r.dividend_rates[j]))
            .collect(),
        terminal_dividends: (0..n_stocks)
            .map(|j| rows.iter().map(|r| r.terminal[j]).collect())
            .collect(),
        income_rate: gather(&|r| &r.income_rate),
        endowment: rows.iter().map(|r| r.endowment).collect(),
        agent_income_rates: (0..n_agents)
            .map(|m| {
                PathArray::from_rows(
                    n,
                    nt,
                    rows.iter()
                        .flat_map(|r| (0..nt).map(move |k| r.agent_rates[k * n_agents + m]))
                        .collect(),
                )
            })
            .collect(),
        agent_endowments: (0..n_agents)
            .map(|m| rows.iter().map(|r| r.agent_endowments[m]).collect())
            .collect(),
        times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyValidation {
    pub min_notional: f64,
    pub jacobian_min_singular_value: f64,
    pub jacobian_threshold: f64,
    pub jacobian_failure_fraction: f64,
    pub max_notional_log_gradient: f64,
    pub max_terminal_gradient: f64,
    pub max_log_endowment_growth: f64,
    pub max_log_income_growth: f64,
    pub max_abs_impatience_rate: f64,
    pub max_abs_notional_rate: f64,
    pub max_abs_dividend_growth: f64,
    /// `max |Σ raw shares - 1|` before normalization.
    pub max_share_sum_deviation: f64,
    pub negative_shares: usize,
    pub passed: bool,
}

/// Finite-difference Jacobian `(∂Fʲ/∂x_i)`, `J × d`.
pub fn terminal_jacobian(econ: &Economy, x: &[f64]) -> DMatrix<f64> {
    let d = econ.dim();
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    DMatrix::from_fn(econ.n_stocks(), d, |j, i| {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        let v = (econ.terminal_factor(j, &xp) - econ.terminal_factor(j, &xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
        v
    })
}

pub fn validate_assumptions(
    econ: &Economy,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<EconomyValidation> {
    let d = econ.dim();
    let n_stocks = econ.n_stocks();
    if n_stocks < d {
        return Err(Error::Config(format!(
            "{n_stocks} stocks cannot span a {d}-dimensional state"
        )));
    }
    let nodes: Vec<Vec<f64>> = (0..grid.n_nodes()).map(|n| grid.node(n)).collect();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut sv = Vec::with_capacity(nodes.len());
    let mut jac_norms = Vec::with_capacity(nodes.len());
    let mut v = EconomyValidation {
        min_notional: f64::INFINITY,
        jacobian_min_singular_value: f64::INFINITY,
        jacobian_threshold: 0.0,
        jacobian_failure_fraction: 0.0,
        max_notional_log_gradient: 0.0,
        max_terminal_gradient: 0.0,
        max_log_endowment_growth: 0.0,
        max_log_income_growth: 0.0,
        max_abs_impatience_rate: 0.0,
        max_abs_notional_rate: 0.0,
        max_abs_dividend_growth: 0.0,
        max_share_sum_deviation: 0.0,
        negative_shares: 0,
        passed: false,
    };
    for x in &nodes {
        let jac = terminal_jacobian(econ, x);
        let s = jac.clone().svd(false, false).singular_values.min();
        sv.push(s);
        jac_norms.push(jac.norm());
        v.max_terminal_gradient = v.max_terminal_gradient.max(jac.amax());
        let g = econ.notional(x);
        v.min_notional = v.min_notional.min(g);
        let gx: Vec<f64> = (0..d).map(|i| econ.spec.notional.d_dx(1.0, x, i)).collect();
        v.max_notional_log_gradient = v.max_notional_log_gradient.max(norm(&gx) / g.abs());
        v.max_log_endowment_growth = v
            .max_log_endowment_growth
            .max(econ.big_h(x).abs() / (1.0 + norm(x)));
        let share_sum: f64 = econ
            .spec
            .agents
            .iter()
            .map(|a| a.terminal_share.eval(1.0, x))
            .sum();
        v.max_share_sum_deviation = v.max_share_sum_deviation.max((share_sum - 1.0).abs());
        for &t in tgrid.times() {
            v.max_log_income_growth = v
                .max_log_income_growth
                .max(econ.h(t, x).abs() / (1.0 + norm(x)));
            v.max_abs_impatience_rate = v.max_abs_impatience_rate.max(econ.r(t, x).abs());
            v.max_abs_notional_rate = v.max_abs_notional_rate.max(econ.q(t, x).abs());
            for j in 0..n_stocks {
                v.max_abs_dividend_growth = v
                    .max_abs_dividend_growth
                    .max(econ.dividend_growth(j, t, x).abs());
            }
            let mut rate_sum = 0.0;
            for a in &econ.spec.agents {
                let s = a.rate_share.eval(t, x);
                rate_sum += s;
                v.negative_shares += usize::from(s < 0.0);
            }
            v.max_share_sum_deviation = v.max_share_sum_deviation.max((rate_sum - 1.0).abs());
        }
        v.negative_shares += econ
            .spec
            .agents
            .iter()
            .filter(|a| a.terminal_share.eval(1.0, x) < 0.0)
            .count();
    }
    v.jacobian_threshold = 1e-8 * median(&mut jac_norms);
    let failures = sv
        .iter()
        .filter(|&&s| !(s > v.jacobian_threshold && s > 0.0))
        .count();
    v.jacobian_failure_fraction = failures as f64 / sv.len() as f64;
    v.jacobian_min_singular_value = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let bounded = [
        v.max_abs_impatience_rate,
        v.max_abs_notional_rate,
        v.max_abs_dividend_growth,
    ]
    .iter()
    .all(|b| b.is_finite());
    v.passed = v.min_notional > 0.0
        && v.jacobian_failure_fraction == 0.0
        && v.negative_shares == 0
        && bounded;
    Ok(v)
}
