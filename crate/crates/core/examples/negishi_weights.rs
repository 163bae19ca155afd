//! Solving for the equilibrium Pareto weights of a three-agent economy.

use std::path::Path;

use radner::diffusion::{simulate_paths, TimeGrid};
use radner::economy::{evaluate_primitives, Economy};
use radner::negishi::solve_weights;
use radner::scenario::Scenario;

fn main() -> radner::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/mixed_crra_three_agent.toml");
    let s = Scenario::load(&path)?;
    let econ = Economy::new(s.economy_spec(), s.splitter)?;
    let times = TimeGrid::uniform(s.monte_carlo.time_steps)?;
    let bundle = simulate_paths(&s.diffusion, &times, 5_000, s.seed)?;
    let prim = evaluate_primitives(&econ, &bundle)?;
    let sol = solve_weights(&econ, &prim, &bundle, &s.solver)?;

    println!(
        "{:>4} {:>28} {:>12} {:>10}",
        "iter", "weights", "|Φ|∞", "step"
    );
    for row in &sol.trace {
        let w: Vec<String> = row.weights.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "{:>4} {:>28} {:>12.3e} {:>10.3e}",
            row.iteration,
            w.join(" "),
            row.residual,
            row.step
        );
    }
    let names: Vec<&str> = s.agents.iter().map(|a| a.name.as_str()).collect();
    println!("\nweights for {names:?}: {:?}", sol.weights.as_slice());
    println!(
        "excess expenditures {:?} with standard errors {:?}",
        sol.report.phi, sol.report.standard_errors
    );
    Ok(())
}
