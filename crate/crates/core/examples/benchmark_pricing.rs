//! Price surfaces of the Gaussian benchmark against their closed forms.

use radner::economy::Economy;
use radner::negishi::WeightVector;
use radner::oracle::{benchmark_errors, benchmark_stock, benchmark_y};
use radner::presets;
use radner::pricing::{EquilibriumSolution, GridConfig, PdeGrids};
use radner::utility::SplitterConfig;

fn main() -> radner::Result<()> {
    let econ = Economy::new(presets::gaussian_benchmark(), SplitterConfig::default())?;
    let grids = PdeGrids::new(&econ.spec.diffusion, &GridConfig::default())?;
    let sol = EquilibriumSolution::solve(&econ, &WeightVector::new(vec![1.0])?, &grids)?;

    println!(
        "{:>5} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "t", "x", "Y", "exact", "S", "exact"
    );
    for t in [0.0, 0.5, 0.9] {
        for x in [-1.0, 0.0, 1.5] {
            println!(
                "{t:>5} {x:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                sol.y.value(t, &[x]),
                benchmark_y(t, &[x]),
                sol.stocks[0].value(t, &[x]),
                benchmark_stock(t, &[x])
            );
        }
    }
    for e in benchmark_errors(&sol) {
        println!(
            "{:<10} max relative error {:.2e}",
            e.surface, e.max_relative_error
        );
    }
    Ok(())
}
