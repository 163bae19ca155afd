//! Running the batch stages on a scenario file from code, with the same
//! overrides the command line accepts.

use std::path::Path;

use radner::pipeline::{run_file, Command, Overrides};

fn main() -> radner::Result<()> {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/symmetric_two_agent.toml");
    let out = std::env::temp_dir().join("radner-example");
    let overrides = Overrides {
        grid: Some((100, 200)),
        ..Overrides::default()
    };
    let report = run_file(&scenario, "all".parse::<Command>()?, &out, &overrides)?;
    for stage in &report.stages {
        println!(
            "{:<9} {:<5} {}",
            stage.stage,
            if stage.passed { "pass" } else { "fail" },
            stage.artifacts.join(" ")
        );
    }
    println!(
        "artifacts in {} (exit code {})",
        out.display(),
        report.exit_code()
    );
    println!("\n{}", std::fs::read_to_string(out.join("summary.csv"))?);
    Ok(())
}
