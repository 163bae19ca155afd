//! End-to-end equilibrium checks on simulated paths, each with a
//! bias-injection control that it must reject.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completeness::DispersionReport;
use crate::diffusion::{PathArray, PathBundle};
use crate::economy::{evaluate_primitives, Economy, PrimitivePaths};
use crate::error::Result;
use crate::negishi::{allocate_paths, state_prices, Allocations, StatePrices};
use crate::pricing::{hedge_ratios, price_paths, EquilibriumSolution, PricePaths};
use crate::stats::{pairwise_sum, Estimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub standard_error: Option<f64>,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn deterministic(name: &str, statistic: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            statistic,
            tolerance,
            standard_error: None,
            passed: statistic <= tolerance,
            note: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSuiteResult {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerificationSuiteResult {
    fn new(checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        VerificationSuiteResult { checks, passed }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Biases injected into individual checks; all zero in a normal run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    /// Extra consumption `c λ` given to the first agent, uncompensated.
    pub clearing: f64,
    /// Consumption `c λ` moved from the last agent to the first (simply
    /// added when there is one agent).
    pub budget: f64,
    /// Relative scaling of the first agent's consumption.
    pub optimality: f64,
    /// Relative scaling of the numeraire.
    pub translation: f64,
    /// `s(t,x) + c t` in every stock surface.
    pub martingale: f64,
    /// Shift of the terminal stock prices.
    pub terminal: f64,
    /// Shift of the first agent's integrand.
    pub hedge: f64,
}

impl Corruption {
    /// The documented control for one check family.
    pub fn control(family: &str) -> Option<Self> {
        let mut c = Corruption::default();
        match family {
            "clearing" => c.clearing = 1e-6,
            "budget" => c.budget = 0.05,
            "optimality" => c.optimality = 1e-6,
            "translation" => c.translation = 0.05,
            "martingale" => c.martingale = 0.1,
            "terminal" => c.terminal = 0.05,
            "hedge" => c.hedge = 1e-3,
            _ => return None,
        }
        Some(c)
    }
}

pub const CHECK_FAMILIES: [&str; 7] = [
    "clearing",
    "budget",
    "optimality",
    "translation",
    "martingale",
    "terminal",
    "hedge",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Multiples of the standard error accepted by statistical checks.
    pub sigmas: f64,
    pub martingale_bins: usize,
    /// Fraction of occupied bins that must pass.
    pub martingale_bin_fraction: f64,
    /// Relative tolerance of `P B = Y` along paths.
    pub translation_tol: f64,
    /// Tolerance of the terminal price identity relative to `max(|S₁|, 1)`.
    pub terminal_tol: f64,
    /// Relative tolerance of `Σ Ĥᵐ = 0`.
    pub hedge_tol: f64,
    /// Paths on which integrands are evaluated.
    pub hedge_paths: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sigmas: 3.0,
            martingale_bins: 10,
            martingale_bin_fraction: 0.9,
            translation_tol: 1e-2,
            terminal_tol: 1e-3,
            hedge_tol: 1e-8,
            hedge_paths: 200,
        }
    }
}

/// Everything the checks read, computed once per bundle.
pub struct Context<'a> {
    pub econ: &'a Economy,
    pub sol: &'a EquilibriumSolution,
    pub bundle: &'a PathBundle,
    pub prim: PrimitivePaths,
    pub alloc: Allocations,
    pub prices: PricePaths,
    pub state: StatePrices,
    /// Whether the dispersion matrix has full rank, so integrands exist.
    pub complete: bool,
    /// Size of the independent bundle the weights were solved on, if any.
    /// The budget residual then carries the sampling error of both bundles.
    pub weight_paths: Option<usize>,
}

impl<'a> Context<'a> {
    pub fn new(
        econ: &'a Economy,
        sol: &'a EquilibriumSolution,
        bundle: &'a PathBundle,
        dispersion: Option<&DispersionReport>,
    ) -> Result<Self> {
        let prim = evaluate_primitives(econ, bundle)?;
        let alloc = allocate_paths(econ, &prim, bundle, &sol.weights)?;
        let prices = price_paths(sol, &prim, &alloc, bundle)?;
        let state = state_prices(&prim, &alloc);
        Ok(Context {
            econ,
            sol,
            bundle,
            prim,
            alloc,
            prices,
            state,
            complete: dispersion.is_none_or(|d| d.passed),
            weight_paths: None,
        })
    }

    fn n(&self) -> usize {
        self.prim.n_paths
    }

    fn nt(&self) -> usize {
        self.prim.times.len()
    }

    fn y0(&self) -> f64 {
        self.sol
            .y
            .value(0.0, &self.econ.spec.diffusion.initial_state)
    }

    /// `πᵐ_t` with the corruption applied.
    fn consumption(&self, m: usize, p: usize, k: usize, c: &Corruption) -> f64 {
        let lam = self.prim.income_rate.get(p, k);
        let last = self.econ.n_agents() - 1;
        let mut v = self.alloc.consumption[m].get(p, k);
        if m == 0 {
            v = v * (1.0 + c.optimality) + (c.clearing + c.budget) * lam;
        }
        if m == last && m != 0 {
            v -= c.budget * lam;
        }
        v
    }

    fn terminal_consumption(&self, m: usize, p: usize, c: &Corruption) -> f64 {
        let lam = self.prim.endowment[p];
        let last = self.econ.n_agents() - 1;
        let mut v = self.alloc.terminal[m][p];
        if m == 0 {
            v = v * (1.0 + c.optimality) + (c.clearing + c.budget) * lam;
        }
        if m == last && m != 0 {
            v -= c.budget * lam;
        }
        v
    }

    /// Continuous numeraire `Y e^{∫r} / u_c`, also at maturity.
    fn numeraire_cont(&self, p: usize, k: usize) -> f64 {
        self.prices.y.get(p, k) * self.prim.int_r.get(p, k).exp() / self.alloc.marginal.get(p, k)
    }
}

fn dt(times: &[f64], k: usize) -> f64 {
    times[k + 1] - times[k]
}

pub fn check_clearing(ctx: &Context, c: &Corruption) -> Check {
    let m = ctx.econ.n_agents();
    let worst = (0..ctx.n())
        .into_par_iter()
        .map(|p| {
            let mut w = 0.0f64;
            for k in 0..ctx.nt() {
                let lam = ctx.prim.income_rate.get(p, k);
                let sum: f64 = (0..m).map(|a| ctx.consumption(a, p, k, c)).sum();
                w = w.max((sum - lam).abs() / lam);
            }
            let lam = ctx.prim.endowment[p];
            let sum: f64 = (0..m).map(|a| ctx.terminal_consumption(a, p, c)).sum();
            w.max((sum - lam).abs() / lam)
        })
        .reduce(|| 0.0, f64::max);
    Check::deterministic("clearing", worst, ctx.econ.splitter.tolerance * m as f64)
}

/// `E^Q[∫ (dĈᵐ - dIᵐ)/B]` estimated with weights `Y₁/Y₀`.
///
/// The tolerance is `sigmas` standard errors, inflated to the two-sample
/// error when the weights come from an independent bundle, and never below
/// `1e-9` of the mean size of the income leg.
pub fn check_budget(ctx: &Context, m: usize, c: &Corruption, cfg: &VerifyConfig) -> Check {
    let times = &ctx.prim.times;
    let nt = ctx.nt();
    let y0 = ctx.y0();
    let pairs: Vec<(f64, f64)> = (0..ctx.n())
        .into_par_iter()
        .map(|p| {
            let leg = |k: usize, spend: bool| {
                let v = if spend {
                    ctx.consumption(m, p, k, c) - ctx.prim.agent_income_rates[m].get(p, k)
                } else {
                    ctx.prim.agent_income_rates[m].get(p, k)
                };
                v / ctx.numeraire_cont(p, k)
            };
            let (mut net, mut income) = (0.0, 0.0);
            for k in 0..nt - 1 {
                net += 0.5 * dt(times, k) * (leg(k, true) + leg(k + 1, true));
                income += 0.5 * dt(times, k) * (leg(k, false) + leg(k + 1, false));
            }
            net += (ctx.terminal_consumption(m, p, c) - ctx.prim.agent_endowments[m][p])
                / ctx.prim.notional[p];
            income += ctx.prim.agent_endowments[m][p] / ctx.prim.notional[p];
            let q = ctx.prices.y.get(p, nt - 1) / y0;
            (q * net, (q * income).abs())
        })
        .collect();
    let samples: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let scale = pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()) / pairs.len() as f64;
    let e = Estimate::from_samples(&samples);
    let inflation = ctx
        .weight_paths
        .map_or(1.0, |nw| (1.0 + ctx.n() as f64 / nw as f64).sqrt());
    let se = e.standard_error * inflation;
    let tolerance = (cfg.sigmas * se).max(1e-9 * scale);
    Check {
        name: format!("budget[{}]", ctx.econ.spec.agents[m].name),
        statistic: e.mean.abs(),
        tolerance,
        standard_error: Some(se),
        passed: e.mean.abs() <= tolerance,
        note: format!("income leg {scale:e}"),
    }
}

/// `wᵐ uᵐ_c(πᵐ) = u_c(λ; w)` for every agent with positive consumption.
pub fn check_optimality(ctx: &Context, c: &Corruption) -> Result<Check> {
    let econ = ctx.econ;
    let w = ctx.sol.weights.as_slice();
    let worst = (0..ctx.n())
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut worst = 0.0f64;
            for k in 0..ctx.nt() {
                let t = ctx.prim.times[k];
                let x = ctx.bundle.state(p, k);
                let target = ctx.alloc.marginal.get(p, k);
                for m in 0..econ.n_agents() {
                    let pi = ctx.consumption(m, p, k, c);
                    if w[m] > 0.0 && pi > 0.0 {
                        let v = w[m] * econ.intermediate[m].marginal(t, pi, x)?;
                        worst = worst.max((v / target - 1.0).abs());
                    }
                }
            }
            let x1 = ctx.bundle.terminal(p);
            let target = ctx.alloc.terminal_marginal[p];
            for m in 0..econ.n_agents() {
                let pi = ctx.terminal_consumption(m, p, c);
                if w[m] > 0.0 && pi > 0.0 {
                    let v = w[m] * econ.terminal[m].marginal(1.0, pi, x1)?;
                    worst = worst.max((v / target - 1.0).abs());
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(Check::deterministic("optimality", worst, 1e-8))
}

/// `P_t B_t = Y_t` along paths, with `B` read from the numeraire surface,
/// and `E[P₁ Ψ] = Y₀`.
pub fn check_translation(ctx: &Context, c: &Corruption, cfg: &VerifyConfig) -> Vec<Check> {
    let nt = ctx.nt();
    let worst = (0..ctx.n())
        .into_par_iter()
        .map(|p| {
            let mut w = 0.0f64;
            for k in 0..nt {
                let t = ctx.prim.times[k];
                let b = if k + 1 == nt {
                    ctx.prim.notional[p]
                } else {
                    ctx.prim.int_q.get(p, k).exp()
                        * ctx.sol.numeraire.interp(t, ctx.bundle.state(p, k))
                };
                let pb = ctx.state.at(p, k) * b * (1.0 + c.translation);
                w = w.max((pb / ctx.prices.y.get(p, k) - 1.0).abs());
            }
            w
        })
        .reduce(|| 0.0, f64::max);
    let y0 = ctx.y0();
    let e = ctx.state.normalization;
    let scaled = Estimate {
        mean: e.mean / y0,
        standard_error: e.standard_error / y0,
        n: e.n,
    };
    vec![
        Check::deterministic("translation", worst, cfg.translation_tol),
        Check {
            name: "normalization".into(),
            statistic: (scaled.mean - 1.0).abs(),
            tolerance: cfg.sigmas * scaled.standard_error,
            standard_error: Some(scaled.standard_error),
            passed: scaled.within(1.0, cfg.sigmas),
            note: format!("E[P1 Psi] / Y0 = {}", scaled.mean),
        },
    ]
}

fn stock_path(ctx: &Context, j: usize, c: &Corruption) -> PathArray {
    let mut s = ctx.prices.stocks[j].clone();
    if c.martingale != 0.0 {
        for p in 0..ctx.n() {
            let row = s.row_mut(p);
            for (k, v) in row.iter_mut().enumerate() {
                let ia = ctx.prim.int_p[j].get(p, k) - ctx.prim.int_q.get(p, k);
                *v += ia.exp() * c.martingale * ctx.prim.times[k];
            }
        }
    }
    s
}

/// Conditional mean of `(S_{t₂} - S_{t₁}) Y_{t₂}/Y_{t₁}` in quantile bins of
/// the first state coordinate at `t₁`, plus the pooled mean over `[0, 1]`.
pub fn check_martingale(ctx: &Context, j: usize, c: &Corruption, cfg: &VerifyConfig) -> Vec<Check> {
    let nt = ctx.nt();
    let n = ctx.n();
    let s = stock_path(ctx, j, c);
    let y = &ctx.prices.y;
    let increment = |p: usize, k1: usize, k2: usize| {
        (s.get(p, k2) - s.get(p, k1)) * y.get(p, k2) / y.get(p, k1)
    };
    let pooled =
        Estimate::from_samples(&(0..n).map(|p| increment(p, 0, nt - 1)).collect::<Vec<_>>());

    let k1 = (nt - 1) / 2;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ctx.bundle.state(a, k1)[0]
            .total_cmp(&ctx.bundle.state(b, k1)[0])
            .then(a.cmp(&b))
    });
    let bins = cfg.martingale_bins.max(1).min(n);
    let mut occupied = 0;
    let mut good = 0;
    let mut worst = 0.0f64;
    for b in 0..bins {
        let chunk = &order[b * n / bins..(b + 1) * n / bins];
        if chunk.len() < 2 {
            continue;
        }
        occupied += 1;
        let e = Estimate::from_samples(
            &chunk
                .iter()
                .map(|&p| increment(p, k1, nt - 1))
                .collect::<Vec<_>>(),
        );
        let z = if e.standard_error > 0.0 {
            e.mean.abs() / e.standard_error
        } else if e.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
        if z <= cfg.sigmas {
            good += 1;
        }
    }
    let fraction = good as f64 / occupied.max(1) as f64;
    let name = |suffix: &str| format!("martingale{suffix}[{j}]");
    let pooled_ok = pooled.within(0.0, cfg.sigmas) || pooled.mean.abs() <= 1e-12;
    vec![
        Check {
            name: name(""),
            statistic: pooled.mean.abs(),
            tolerance: cfg.sigmas * pooled.standard_error,
            standard_error: Some(pooled.standard_error),
            passed: pooled_ok,
            note: "pooled increment over [0, 1]".into(),
        },
        Check {
            name: name("_bins"),
            statistic: fraction,
            tolerance: cfg.martingale_bin_fraction,
            standard_error: None,
            passed: fraction >= cfg.martingale_bin_fraction,
            note: format!(
                "{good}/{occupied} bins at t={} within {} SE; largest |z| = {worst:.2}",
                ctx.prim.times[k1], cfg.sigmas
            ),
        },
    ]
}

/// `Sʲ₁ = Θʲ/Ψ + ∫θʲ/B` with `B` read from the numeraire surface.
pub fn check_terminal(ctx: &Context, j: usize, c: &Corruption, cfg: &VerifyConfig) -> Check {
    let nt = ctx.nt();
    let times = &ctx.prim.times;
    let worst = (0..ctx.n())
        .into_par_iter()
        .map(|p| {
            let b = |k: usize| {
                if k + 1 == nt {
                    ctx.numeraire_cont(p, k)
                } else {
                    ctx.prim.int_q.get(p, k).exp()
                        * ctx.sol.numeraire.interp(times[k], ctx.bundle.state(p, k))
                }
            };
            let theta = ctx.prim.dividend_rates[j].row(p);
            let mut acc = 0.0;
            for k in 0..nt - 1 {
                acc += 0.5 * dt(times, k) * (theta[k] / b(k) + theta[k + 1] / b(k + 1));
            }
            let direct = ctx.prim.terminal_dividends[j][p] / ctx.prim.notional[p] + acc;
            let s1 = ctx.prices.stocks[j].get(p, nt - 1) + c.terminal;
            (s1 - direct).abs() / s1.abs().max(1.0)
        })
        .reduce(|| 0.0, f64::max);
    Check::deterministic(&format!("terminal[{j}]"), worst, cfg.terminal_tol)
}

/// `Σ_m Ĥᵐ = 0` on the first `cfg.hedge_paths` paths.
pub fn check_hedge_clearing(ctx: &Context, c: &Corruption, cfg: &VerifyConfig) -> Result<Check> {
    if !ctx.complete {
        return Ok(Check {
            name: "hedge_clearing".into(),
            statistic: f64::NAN,
            tolerance: cfg.hedge_tol,
            standard_error: None,
            passed: true,
            note: "skipped: dispersion is rank deficient, integrands do not exist".into(),
        });
    }
    let sub = ctx.bundle.subset(cfg.hedge_paths.min(ctx.n()));
    let prim = evaluate_primitives(ctx.econ, &sub)?;
    let hedges = (0..ctx.econ.n_agents())
        .map(|m| hedge_ratios(ctx.sol, m, &prim, &sub))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for j in 0..ctx.sol.n_stocks() {
        for p in 0..sub.n_paths {
            for k in 0..sub.n_times() - 1 {
                let vals: Vec<f64> = hedges
                    .iter()
                    .enumerate()
                    .map(|(m, h)| h[j].get(p, k) + if m == 0 { c.hedge } else { 0.0 })
                    .collect();
                let sum = pairwise_sum(&vals);
                let scale = vals.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                worst = worst.max(sum.abs() / scale);
            }
        }
    }
    Ok(Check::deterministic("hedge_clearing", worst, cfg.hedge_tol))
}

pub fn run_checks(
    ctx: &Context,
    c: &Corruption,
    cfg: &VerifyConfig,
) -> Result<VerificationSuiteResult> {
    let mut checks = vec![check_clearing(ctx, c)];
    for m in 0..ctx.econ.n_agents() {
        checks.push(check_budget(ctx, m, c, cfg));
    }
    checks.push(check_optimality(ctx, c)?);
    checks.extend(check_translation(ctx, c, cfg));
    for j in 0..ctx.sol.n_stocks() {
        checks.extend(check_martingale(ctx, j, c, cfg));
        checks.push(check_terminal(ctx, j, c, cfg));
    }
    checks.push(check_hedge_clearing(ctx, c, cfg)?);
    Ok(VerificationSuiteResult::new(checks))
}

pub fn verify(
    econ: &Economy,
    sol: &EquilibriumSolution,
    bundle: &PathBundle,
    dispersion: Option<&DispersionReport>,
    cfg: &VerifyConfig,
) -> Result<VerificationSuiteResult> {
    let ctx = Context::new(econ, sol, bundle, dispersion)?;
    run_checks(&ctx, &Corruption::default(), cfg)
}

/// Outcome of one negative control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub family: String,
    /// Names of the targeted checks that failed under the corruption.
    pub failed_checks: Vec<String>,
    pub caught: bool,
}

fn family_of(name: &str) -> &str {
    match name.split(['[', '_']).next().unwrap_or(name) {
        "normalization" => "translation",
        "hedge" => "hedge",
        other => other,
    }
}

/// Runs each documented corruption and records whether its own check
/// family rejects it. The hedge family is skipped when integrands do not
/// exist.
pub fn negative_controls(ctx: &Context, cfg: &VerifyConfig) -> Result<Vec<ControlOutcome>> {
    let mut out = Vec::new();
    for family in CHECK_FAMILIES {
        if family == "hedge" && !ctx.complete {
            continue;
        }
        let c = Corruption::control(family).expect("documented family");
        let suite = run_checks(ctx, &c, cfg)?;
        let failed: Vec<String> = suite
            .checks
            .iter()
            .filter(|ch| family_of(&ch.name) == family && !ch.passed)
            .map(|ch| ch.name.clone())
            .collect();
        out.push(ControlOutcome {
            family: family.into(),
            caught: !failed.is_empty(),
            failed_checks: failed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completeness::{dispersion, CompletenessConfig};
    use crate::diffusion::{simulate_paths, TimeGrid};
    use crate::negishi::WeightVector;
    use crate::presets;
    use crate::pricing::{GridConfig, PdeGrids};
    use crate::utility::{SplitterConfig, UtilitySpec};

    fn run(
        spec: crate::economy::EconomySpec,
        w: Vec<f64>,
    ) -> (VerificationSuiteResult, Vec<ControlOutcome>) {
        let econ = Economy::new(spec, SplitterConfig::default()).unwrap();
        let grids = PdeGrids::new(
            &econ.spec.diffusion,
            &GridConfig {
                time_steps: 100,
                space_points: 200,
                ..GridConfig::default()
            },
        )
        .unwrap();
        let sol =
            EquilibriumSolution::solve(&econ, &WeightVector::new(w).unwrap(), &grids).unwrap();
        let disp = dispersion(&econ, &sol, &CompletenessConfig::default()).unwrap();
        let bundle = simulate_paths(
            &econ.spec.diffusion,
            &TimeGrid::uniform(20).unwrap(),
            10_000,
            11,
        )
        .unwrap();
        let ctx = Context::new(&econ, &sol, &bundle, Some(&disp)).unwrap();
        let cfg = VerifyConfig::default();
        (
            run_checks(&ctx, &Corruption::default(), &cfg).unwrap(),
            negative_controls(&ctx, &cfg).unwrap(),
        )
    }

    #[test]
    fn benchmark_suite_and_controls() {
        let (suite, controls) = run(presets::gaussian_benchmark(), vec![1.0]);
        assert!(suite.passed, "{suite:#?}");
        assert_eq!(suite.get("clearing").unwrap().statistic, 0.0);
        for c in &controls {
            assert!(c.caught, "{c:?}");
        }
    }

    #[test]
    fn symmetric_pair_suite() {
        let (suite, controls) = run(
            presets::two_agent(UtilitySpec::log(), UtilitySpec::log(), 0.5),
            vec![0.5, 0.5],
        );
        assert!(suite.passed, "{suite:#?}");
        assert!(suite.get("clearing").unwrap().statistic < 1e-10);
        assert!(controls.iter().all(|c| c.caught), "{controls:?}");
    }

    #[test]
    fn off_equilibrium_weights_fail_the_budget() {
        let (suite, _) = run(
            presets::two_agent(UtilitySpec::log(), UtilitySpec::log(), 0.5),
            vec![0.7, 0.3],
        );
        assert!(!suite.get("budget[first]").unwrap().passed);
        assert!(suite.get("clearing").unwrap().passed);
        assert!(suite.get("optimality").unwrap().passed);
    }

    #[test]
    fn family_names() {
        assert_eq!(family_of("budget[first]"), "budget");
        assert_eq!(family_of("martingale_bins[0]"), "martingale");
        assert_eq!(family_of("hedge_clearing"), "hedge");
        assert_eq!(family_of("normalization"), "translation");
    }
}
