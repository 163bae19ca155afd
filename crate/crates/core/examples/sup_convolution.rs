//! Splitting consumption between utilities and aggregating a group of
//! agents into one representative utility.

use std::sync::Arc;

use radner::utility::{aggregate, split, Convolution, SplitterConfig, UtilityFn};

fn main() -> radner::Result<()> {
    let cfg = SplitterConfig::default();
    let cautious = UtilityFn::crra(3.0).scaled(0.4);
    let bold = UtilityFn::crra(0.5).scaled(0.6);

    println!(
        "{:>10} {:>12} {:>12} {:>14} {:>12}",
        "c", "c1", "c2", "FOC residual", "aggregate a"
    );
    let joint = UtilityFn::Convolution(Arc::new(Convolution::new(
        cautious.clone(),
        bold.clone(),
        cfg,
    )));
    for c in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let (c1, c2) = split(&cautious, &bold, 0.0, c, &[0.0], cfg)?;
        let m1 = cautious.marginal(0.0, c1, &[0.0])?;
        let m2 = bold.marginal(0.0, c2, &[0.0])?;
        let a = joint.point(0.0, c, &[0.0])?.risk_aversion(c);
        println!(
            "{c:>10} {c1:>12.6} {c2:>12.6} {:>14.2e} {a:>12.6}",
            (m1 - m2).abs() / m1
        );
    }
    println!("the cautious agent's share shrinks as the pie grows; aggregate risk aversion falls toward 0.5");

    let agents = [UtilityFn::log(), UtilityFn::crra(2.0), UtilityFn::crra(3.0)];
    let weights = [0.5, 0.3, 0.2];
    let planner = aggregate(&agents, &weights, cfg)?;
    let alloc = planner.allocate(0.5, 2.0, &[0.0])?;
    println!("\nthree agents sharing c = 2 with weights {weights:?}:");
    for (m, (u, w)) in agents.iter().zip(weights).enumerate() {
        let wm = w * u.marginal(0.5, alloc[m], &[0.0])?;
        println!(
            "  agent {m}: c = {:.6}, weighted marginal = {wm:.10}",
            alloc[m]
        );
    }
    println!("  total = {} (exact)", alloc.iter().sum::<f64>());
    Ok(())
}
