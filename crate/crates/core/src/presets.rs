//! Ready-made economies used by the examples, tests and bundled scenarios.

use crate::diffusion::DiffusionSpec;
use crate::economy::{AgentSpec, EconomySpec, LogIncomeRate, StockSpec};
use crate::expr::Expr;
use crate::utility::UtilitySpec;

pub fn agent(name: &str, utility: UtilitySpec, share: f64) -> AgentSpec {
    AgentSpec {
        name: name.into(),
        intermediate: utility.clone(),
        terminal: utility,
        terminal_share: Expr::constant(share),
        rate_share: Expr::constant(share),
    }
}

fn stock(terminal: Expr) -> StockSpec {
    StockSpec {
        terminal,
        dividend_rate: Expr::constant(0.0),
        dividend_growth: Expr::constant(0.0),
    }
}

/// Brownian state, unit notional, zero rates, `Λ = e^{X₁}`, unit income
/// rate and one stock paying `X₁`, held by one logarithmic agent.
///
/// Closed forms: `v = e^{-x+(1-t)/2}`, `s = x-(1-t)`, `B = v`.
pub fn gaussian_benchmark() -> EconomySpec {
    EconomySpec {
        diffusion: DiffusionSpec::brownian(0.0),
        notional: Expr::constant(1.0),
        notional_rate: Expr::constant(0.0),
        impatience_rate: Expr::constant(0.0),
        log_endowment: Expr::affine(0.0, 1.0, 0),
        log_income_rate: LogIncomeRate {
            time_part: Expr::constant(0.0),
            state_part: Expr::constant(0.0),
        },
        stocks: vec![stock(Expr::affine(0.0, 1.0, 0))],
        agents: vec![agent("solo", UtilitySpec::log(), 1.0)],
    }
}

/// The benchmark market shared by two agents with the given utilities and
/// income shares.
pub fn two_agent(first: UtilitySpec, second: UtilitySpec, first_share: f64) -> EconomySpec {
    EconomySpec {
        agents: vec![
            agent("first", first, first_share),
            agent("second", second, 1.0 - first_share),
        ],
        ..gaussian_benchmark()
    }
}

/// Three agents (log, CRRA 2, CRRA 3) with a stock that also pays a
/// constant dividend rate, and a positive impatience rate.
pub fn mixed_three_agent() -> EconomySpec {
    let mut spec = gaussian_benchmark();
    spec.impatience_rate = Expr::constant(0.05);
    spec.log_income_rate.state_part = Expr::affine(0.0, 0.5, 0);
    spec.stocks = vec![StockSpec {
        terminal: Expr::exp_affine(0.0, 0.5, 0),
        dividend_rate: Expr::constant(0.2),
        dividend_growth: Expr::constant(0.0),
    }];
    spec.agents = vec![
        agent("log", UtilitySpec::log(), 0.5),
        agent("crra2", UtilitySpec::crra(2.0), 0.3),
        agent("crra3", UtilitySpec::crra(3.0), 0.2),
    ];
    spec
}

/// A stock paying a constant: it spans nothing.
pub fn degenerate_claim() -> EconomySpec {
    EconomySpec {
        stocks: vec![stock(Expr::constant(1.0))],
        ..two_agent(UtilitySpec::log(), UtilitySpec::crra(2.0), 0.5)
    }
}

/// Two independent factors with different volatilities, two stocks each
/// paying one factor, and an endowment loading on both.
pub fn two_factor() -> EconomySpec {
    EconomySpec {
        diffusion: DiffusionSpec::constant(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 0.5]],
        ),
        notional: Expr::constant(1.0),
        notional_rate: Expr::constant(0.0),
        impatience_rate: Expr::constant(0.0),
        log_endowment: Expr::sum(vec![Expr::affine(0.0, 0.5, 0), Expr::affine(0.0, 0.5, 1)]),
        log_income_rate: LogIncomeRate {
            time_part: Expr::constant(0.0),
            state_part: Expr::constant(0.0),
        },
        stocks: vec![
            stock(Expr::affine(0.0, 1.0, 0)),
            stock(Expr::affine(0.0, 1.0, 1)),
        ],
        agents: vec![
            agent("log", UtilitySpec::log(), 0.6),
            agent("crra2", UtilitySpec::crra(2.0), 0.4),
        ],
    }
}
