use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use radner::pipeline::{parse_grid, run_file, Command, Overrides};

/// Solve, price and verify a scenario, writing artifacts to a directory.
#[derive(Parser, Debug)]
#[command(name = "radner", version)]
struct Cli {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing, files are overwritten.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the Monte Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides the PDE grid as `<time steps>x<space points>`.
    #[arg(long, value_parser = parse_grid_arg)]
    grid: Option<(usize, usize)>,
    /// validate, solve, price, check, report or all.
    #[arg(long, default_value = "all", value_parser = parse_command)]
    command: Command,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "RADNER_THREADS", default_value_t = 0)]
    threads: usize,
}

fn parse_grid_arg(s: &str) -> Result<(usize, usize), String> {
    parse_grid(s).map_err(|e| e.to_string())
}

fn parse_command(s: &str) -> Result<Command, String> {
    s.parse().map_err(|e: radner::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("radner: thread pool: {e}");
        return ExitCode::from(2);
    }
    let overrides = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        grid: cli.grid,
    };
    let started = std::time::Instant::now();
    let report = match run_file(&cli.scenario, cli.command, &cli.out, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("radner: {e}");
            return ExitCode::from(2);
        }
    };
    for s in &report.stages {
        let verdict = match (&s.error, s.passed) {
            (Some(_), _) => "ERROR",
            (None, true) => "pass",
            (None, false) => "FAIL",
        };
        eprintln!(
            "{:<9} {verdict:<5} {:>7.1}s  {}",
            s.stage.name(),
            s.seconds,
            s.artifacts.join(" ")
        );
        if let Some(e) = &s.error {
            eprintln!("          {e}");
        }
    }
    eprintln!(
        "{} finished in {:.1}s",
        report.scenario,
        started.elapsed().as_secs_f64()
    );
    ExitCode::from(report.exit_code() as u8)
}
