//! Monte Carlo verification of a solved equilibrium, and the negative
//! controls that show each check can fail.

use std::path::Path;

use radner::completeness::dispersion;
use radner::diffusion::{simulate_paths, TimeGrid};
use radner::economy::{evaluate_primitives, Economy};
use radner::negishi::solve_weights;
use radner::pricing::{EquilibriumSolution, PdeGrids};
use radner::scenario::Scenario;
use radner::verify::{negative_controls, run_checks, Context, Corruption};

fn main() -> radner::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/asymmetric_log.toml");
    let s = Scenario::load(&path)?;
    let econ = Economy::new(s.economy_spec(), s.splitter)?;
    let times = TimeGrid::uniform(s.monte_carlo.time_steps)?;

    let bundle = simulate_paths(&s.diffusion, &times, s.monte_carlo.paths, s.seed)?;
    let prim = evaluate_primitives(&econ, &bundle)?;
    let weights = solve_weights(&econ, &prim, &bundle, &s.solver)?.weights;
    let sol = EquilibriumSolution::solve(&econ, &weights, &PdeGrids::new(&s.diffusion, &s.grid)?)?;
    let rank = dispersion(&econ, &sol, &s.completeness)?;

    // fresh paths, so the checks are not graded on the sample that fixed w
    let fresh = simulate_paths(&s.diffusion, &times, s.monte_carlo.paths, s.seed + 1)?;
    let mut ctx = Context::new(&econ, &sol, &fresh, Some(&rank))?;
    ctx.weight_paths = Some(s.monte_carlo.paths);
    let suite = run_checks(&ctx, &Corruption::default(), &s.verify)?;
    for c in &suite.checks {
        let se = c
            .standard_error
            .map_or(String::new(), |v| format!(" (SE {v:.1e})"));
        println!(
            "{:<20} statistic {:>10.3e}  tolerance {:<10.3e}{se} {}",
            c.name,
            c.statistic,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    println!("\nnegative controls:");
    for c in negative_controls(&ctx, &s.verify)? {
        println!(
            "  {:<12} caught: {:<5} by {:?}",
            c.family, c.caught, c.failed_checks
        );
    }
    Ok(())
}
