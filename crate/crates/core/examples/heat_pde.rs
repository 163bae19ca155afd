//! The backward PDE solver on a problem with a known answer:
//! `u_t + ½u_xx = 0`, `u(1, x) = cos x`, so `u(t, x) = cos x · e^{-(1-t)/2}`.

use radner::diffusion::{DiffusionSpec, SpatialGrid, TimeGrid};
use radner::pde::{solve_backward, PdeProblem, SolveOptions};

fn main() -> radner::Result<()> {
    let diffusion = DiffusionSpec::brownian(0.0);
    let terminal = |x: &[f64]| Ok(x[0].cos());
    let exact = |t: f64, x: &[f64]| x[0].cos() * (-0.5 * (1.0 - t)).exp();
    println!("{:>12} {:>14} {:>8}", "grid", "max rel error", "gain");
    let mut previous: Option<f64> = None;
    for (nt, nx) in [(25, 50), (50, 100), (100, 200), (200, 400)] {
        let grid = SpatialGrid::around(&diffusion, 8.0, nx)?;
        let times = TimeGrid::uniform(nt)?;
        let problem = PdeProblem {
            diffusion: &diffusion,
            grid: &grid,
            times: &times,
            terminal: &terminal,
            potential: None,
            source: None,
        };
        let u = solve_backward(&problem, SolveOptions::default())?;
        let err = u.max_relative_error(exact, 1.0, |_, node| grid.in_core(node, 0.5));
        let gain = previous.map_or(String::new(), |p| format!("{:.2}", p / err));
        println!("{:>12} {err:>14.3e} {gain:>8}", format!("{nt}x{nx}"));
        previous = Some(err);
    }
    Ok(())
}
