//! Writing price surfaces as CSV and as `.rgrd` binary grids, and reading a
//! grid back.

use radner::economy::Economy;
use radner::io::{read_grid, strided_times, surfaces_csv, write_grid};
use radner::negishi::WeightVector;
use radner::presets;
use radner::pricing::{EquilibriumSolution, GridConfig, PdeGrids};
use radner::utility::SplitterConfig;

fn main() -> radner::Result<()> {
    let econ = Economy::new(presets::gaussian_benchmark(), SplitterConfig::default())?;
    let cfg = GridConfig {
        time_steps: 40,
        space_points: 101,
        ..GridConfig::default()
    };
    let grids = PdeGrids::new(&econ.spec.diffusion, &cfg)?;
    let sol = EquilibriumSolution::solve(&econ, &WeightVector::new(vec![1.0])?, &grids)?;

    let dir = std::env::temp_dir().join("radner-surfaces");
    std::fs::create_dir_all(&dir)?;
    let table = surfaces_csv(
        &[("y", &sol.y.values), ("stock0", &sol.stocks[0].values)],
        &strided_times(sol.y.values.n_times(), 10),
    )?;
    table.write(&dir.join("surfaces.csv"))?;
    println!(
        "surfaces.csv: {} rows, header {:?}",
        table.len(),
        table.render().lines().next()
    );

    let path = dir.join("y.rgrd");
    write_grid(&path, &sol.y.values)?;
    let back = read_grid(&path)?;
    println!(
        "y.rgrd: {} bytes, {} times × {:?} points, identical after reading: {}",
        std::fs::metadata(&path)?.len(),
        back.n_times(),
        back.grid.points,
        back == sol.y.values
    );
    println!("Y(0, 0) from the file: {:.6}", back.interp(0.0, &[0.0]));
    Ok(())
}
