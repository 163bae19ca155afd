//! The rank test of the dispersion matrix on a complete and an incomplete
//! market.

use radner::completeness::{dispersion, CompletenessConfig};
use radner::economy::{Economy, EconomySpec};
use radner::negishi::WeightVector;
use radner::presets;
use radner::pricing::{EquilibriumSolution, GridConfig, PdeGrids};
use radner::utility::SplitterConfig;

fn report(name: &str, spec: EconomySpec, weights: Vec<f64>) -> radner::Result<()> {
    let econ = Economy::new(spec, SplitterConfig::default())?;
    let cfg = GridConfig {
        time_steps: 50,
        space_points: 81,
        ..GridConfig::default()
    };
    let grids = PdeGrids::new(&econ.spec.diffusion, &cfg)?;
    let sol = EquilibriumSolution::solve(&econ, &WeightVector::new(weights)?, &grids)?;
    let r = dispersion(&econ, &sol, &CompletenessConfig::default())?;
    println!(
        "{name:<12} {:>6} nodes, {:>6.2}% rank failures, σ_min in [{:.3e}, {:.3e}] → {}",
        r.nodes_checked,
        100.0 * r.failure_fraction,
        r.min_sigma,
        r.max_sigma,
        if r.passed { "complete" } else { "incomplete" }
    );
    Ok(())
}

fn main() -> radner::Result<()> {
    report("benchmark", presets::gaussian_benchmark(), vec![1.0])?;
    report("two factor", presets::two_factor(), vec![0.6, 0.4])?;
    report("degenerate", presets::degenerate_claim(), vec![0.5, 0.5])?;
    Ok(())
}
