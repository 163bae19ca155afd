//! Batch orchestration of the validate → solve → price → check → report
//! stages, writing every artifact into one output directory.
//!
//! Artifacts carry no timings or host details, so two runs with the same
//! scenario, overrides and seed produce byte-identical files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::completeness::{
    dispersion, martingale_uniqueness_probe, random_claims, DispersionReport, ProbeReport,
};
use crate::diffusion::{
    simulate_paths, validate_coefficients, DiffusionValidation, SpatialGrid, TimeGrid,
};
use crate::economy::{evaluate_primitives, validate_assumptions, Economy, EconomyValidation};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, strided_times, surfaces_csv, write_grid, CsvTable};
use crate::negishi::{solve_weights, NegishiSolution};
use crate::oracle::{benchmark_errors, SurfaceError};
use crate::pde::GridFunction;
use crate::pricing::{EquilibriumSolution, PdeGrids};
use crate::scenario::{ClosedForm, Scenario};
use crate::utility::{cone_diagnostics, ConeReport, Probe};
use crate::verify::{
    negative_controls, run_checks, Context, ControlOutcome, Corruption, VerificationSuiteResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Solve,
    Price,
    Check,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Validate,
        Stage::Solve,
        Stage::Price,
        Stage::Check,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Solve => "solve",
            Stage::Price => "price",
            Stage::Check => "check",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a CLI `--command` executes.
///
/// `validate` runs alone. `solve`, `price`, `check` and `report` run their
/// prerequisites from `solve` onward. `all` runs every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stage(Stage),
    All,
}

impl Command {
    pub fn stages(self) -> Vec<Stage> {
        match self {
            Command::All => Stage::ALL.to_vec(),
            Command::Stage(Stage::Validate) => vec![Stage::Validate],
            Command::Stage(s) => Stage::ALL
                .into_iter()
                .filter(|&t| t != Stage::Validate && t <= s)
                .collect(),
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Command::All),
            other => Stage::ALL
                .into_iter()
                .find(|st| st.name() == other)
                .map(Command::Stage)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown command {other:?}; expected validate, solve, price, check, report or all"
                    ))
                }),
        }
    }
}

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    /// `(time steps, space points per axis)`.
    pub grid: Option<(usize, usize)>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(p) = self.paths {
            s.monte_carlo.paths = p;
        }
        if let Some((nt, nx)) = self.grid {
            s.grid.time_steps = nt;
            s.grid.space_points = nx;
        }
    }
}

/// Parses `<nt>x<nx>`.
pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid {s:?} is not of the form <nt>x<nx>"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let nt = a.trim().parse().map_err(|_| bad())?;
    let nx = b.trim().parse().map_err(|_| bad())?;
    Ok((nt, nx))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub passed: bool,
    pub artifacts: Vec<String>,
    /// Error that stopped the stage, if any.
    pub error: Option<String>,
    /// Wall-clock time; reported on the console, never written to artifacts.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub stages: Vec<StageOutcome>,
    pub passed: bool,
}

impl RunReport {
    pub fn stage(&self, s: Stage) -> Option<&StageOutcome> {
        self.stages.iter().find(|o| o.stage == s)
    }

    /// 0 when every executed stage passed, 1 when a stage reported a
    /// failed check, 2 when a stage stopped on an error.
    pub fn exit_code(&self) -> i32 {
        if self.stages.iter().any(|s| s.error.is_some()) {
            2
        } else if self.passed {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct UtilityDiagnostics {
    agent: String,
    period: &'static str,
    report: ConeReport,
}

#[derive(Debug, Clone, Serialize)]
struct ValidationArtifact<'a> {
    scenario: &'a str,
    diffusion: DiffusionValidation,
    economy: EconomyValidation,
    utilities: Vec<UtilityDiagnostics>,
    passed: bool,
}

#[derive(Debug, Clone, Serialize)]
struct EquilibriumArtifact<'a> {
    scenario: &'a str,
    seed: u64,
    solution: &'a NegishiSolution,
    interior: bool,
    oracle_weights: Option<&'a [f64]>,
    oracle_passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
struct CompletenessArtifact<'a> {
    dispersion: &'a DispersionReport,
    probe: Option<&'a ProbeReport>,
    probe_skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct VerificationArtifact<'a> {
    seed: u64,
    paths: usize,
    suite: &'a VerificationSuiteResult,
    controls: &'a [ControlOutcome],
    controls_caught: bool,
}

/// Intermediate results shared by later stages.
struct Run<'a> {
    scenario: &'a Scenario,
    out: PathBuf,
    econ: Economy,
    weights: Option<NegishiSolution>,
    solution: Option<EquilibriumSolution>,
    surface_errors: Vec<SurfaceError>,
    dispersion: Option<DispersionReport>,
    probe: Option<ProbeReport>,
    suite: Option<VerificationSuiteResult>,
    controls: Vec<ControlOutcome>,
    outcomes: Vec<StageOutcome>,
}

/// Loads the scenario, applies overrides and runs the command.
pub fn run_file(
    path: &Path,
    command: Command,
    out: &Path,
    overrides: &Overrides,
) -> Result<RunReport> {
    let mut scenario = Scenario::load(path)?;
    overrides.apply(&mut scenario);
    run(&scenario, command, out)
}

/// Runs the stages of `command`. Stages stop at the first error; artifacts
/// written so far are kept. Returns `Err` only when the scenario cannot be
/// built or the output directory cannot be created.
pub fn run(scenario: &Scenario, command: Command, out: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("scenario.toml"), scenario.to_toml()?)?;
    let econ = Economy::new(scenario.economy_spec(), scenario.splitter)?;
    let mut run = Run {
        scenario,
        out: out.to_path_buf(),
        econ,
        weights: None,
        solution: None,
        surface_errors: Vec::new(),
        dispersion: None,
        probe: None,
        suite: None,
        controls: Vec::new(),
        outcomes: Vec::new(),
    };
    for stage in command.stages() {
        let mut artifacts = Vec::new();
        let started = std::time::Instant::now();
        let result = match stage {
            Stage::Validate => run.validate(&mut artifacts),
            Stage::Solve => run.solve(&mut artifacts),
            Stage::Price => run.price(&mut artifacts),
            Stage::Check => run.check(&mut artifacts),
            Stage::Report => run.report(&mut artifacts),
        };
        let (passed, error) = match result {
            Ok(p) => (p, None),
            Err(e) => (false, Some(e.to_string())),
        };
        let stop = error.is_some();
        run.outcomes.push(StageOutcome {
            stage,
            passed,
            artifacts,
            error,
            seconds: started.elapsed().as_secs_f64(),
        });
        if stop {
            break;
        }
    }
    let passed = run.outcomes.iter().all(|o| o.passed);
    Ok(RunReport {
        scenario: scenario.name.clone(),
        stages: run.outcomes,
        passed,
    })
}

/// Time indices written to CSV: about 20 slices in one dimension, 10 in two.
fn csv_times(g: &GridFunction) -> Vec<usize> {
    let steps = g.n_times() - 1;
    let slices = if g.grid.dim() == 1 { 20 } else { 10 };
    strided_times(g.n_times(), steps.div_ceil(slices))
}

impl Run<'_> {
    fn path(&self, name: &str, artifacts: &mut Vec<String>) -> PathBuf {
        artifacts.push(name.into());
        self.out.join(name)
    }

    fn write_json<T: Serialize>(
        &self,
        name: &str,
        value: &T,
        artifacts: &mut Vec<String>,
    ) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.path(name, artifacts), text + "\n")?;
        Ok(())
    }

    fn validate(&mut self, artifacts: &mut Vec<String>) -> Result<bool> {
        let cfg = &self.scenario.validation;
        let spec = &self.econ.spec;
        let grid = SpatialGrid::around(
            &spec.diffusion,
            self.scenario.grid.box_width,
            cfg.grid_points,
        )?;
        let tgrid = TimeGrid::uniform(cfg.time_steps)?;
        let diffusion = validate_coefficients(&spec.diffusion, &grid, &tgrid)?;
        let economy = validate_assumptions(&self.econ, &grid, &tgrid)?;
        let probes = Probe::standard_set(&spec.diffusion.initial_state, cfg.probe_spread);
        let mut utilities = Vec::new();
        for (m, a) in spec.agents.iter().enumerate() {
            for (period, u) in [
                ("intermediate", &self.econ.intermediate[m]),
                ("terminal", &self.econ.terminal[m]),
            ] {
                utilities.push(UtilityDiagnostics {
                    agent: a.name.clone(),
                    period,
                    report: cone_diagnostics(u, &probes, cfg.cone_bound, cfg.delta),
                });
            }
        }
        let utilities_ok = utilities.iter().all(|u| {
            u.report.failed_evaluations == 0 && u.report.shape_violations == 0 && u.report.inada_ok
        });
        let passed = !diffusion.violation && economy.passed && utilities_ok;
        let artifact = ValidationArtifact {
            scenario: &self.scenario.name,
            diffusion,
            economy,
            utilities,
            passed,
        };
        self.write_json("validation.json", &artifact, artifacts)?;
        Ok(passed)
    }

    fn solve(&mut self, artifacts: &mut Vec<String>) -> Result<bool> {
        let s = self.scenario;
        let tgrid = TimeGrid::uniform(s.monte_carlo.time_steps)?;
        let bundle = simulate_paths(&s.diffusion, &tgrid, s.monte_carlo.paths, s.seed)?;
        let prim = evaluate_primitives(&self.econ, &bundle)?;
        let sol = solve_weights(&self.econ, &prim, &bundle, &s.solver)?;

        let m = self.econ.n_agents();
        let header = ["iteration".to_string()]
            .into_iter()
            .chain((0..m).map(|i| format!("w{i}")))
            .chain(["residual", "step", "phi_sum"].map(String::from));
        let mut trace = CsvTable::new(header);
        for row in &sol.trace {
            let mut cells = vec![row.iteration.to_string()];
            cells.extend(row.weights.iter().map(|&v| fmt_f64(v)));
            cells.extend([row.residual, row.step, row.phi_sum].map(fmt_f64));
            trace.push(cells);
        }
        trace.write(&self.path("weights.csv", artifacts))?;

        let interior = sol.weights.is_interior();
        let oracle_weights = s.oracle.as_ref().and_then(|o| o.weights.as_deref());
        let oracle_passed = oracle_weights.map(|target| {
            let tol = s.oracle.as_ref().map_or(0.0, |o| o.weight_tol);
            target.len() == m
                && target
                    .iter()
                    .zip(sol.weights.as_slice())
                    .all(|(a, b)| (a - b).abs() <= tol)
        });
        let artifact = EquilibriumArtifact {
            scenario: &s.name,
            seed: s.seed,
            solution: &sol,
            interior,
            oracle_weights,
            oracle_passed,
        };
        self.write_json("equilibrium.json", &artifact, artifacts)?;
        let passed = interior && oracle_passed.unwrap_or(true);
        self.weights = Some(sol);
        Ok(passed)
    }

    fn price(&mut self, artifacts: &mut Vec<String>) -> Result<bool> {
        let s = self.scenario;
        let weights = &self
            .weights
            .as_ref()
            .expect("solve runs before price")
            .weights;
        let grids = PdeGrids::new(&s.diffusion, &s.grid)?;
        let sol = EquilibriumSolution::solve(&self.econ, weights, &grids)?;

        let mut columns: Vec<(String, &GridFunction)> = vec![
            ("y".into(), &sol.y.values),
            ("numeraire".into(), &sol.numeraire),
        ];
        columns.extend(
            sol.stocks
                .iter()
                .enumerate()
                .map(|(j, st)| (format!("stock{j}"), &st.values)),
        );
        columns.extend(
            sol.agent_values
                .iter()
                .enumerate()
                .map(|(m, a)| (format!("agent_value{m}"), &a.values)),
        );
        let named: Vec<(&str, &GridFunction)> =
            columns.iter().map(|(n, g)| (n.as_str(), *g)).collect();
        let times = csv_times(&sol.y.values);
        surfaces_csv(&named, &times)?.write(&self.path("surfaces.csv", artifacts))?;
        for (name, g) in &named {
            write_grid(&self.path(&format!("{name}.rgrd"), artifacts), g)?;
        }

        let mut passed = true;
        if let Some(oracle) = &s.oracle {
            if oracle.closed_form == Some(ClosedForm::GaussianBenchmark) {
                let errors = benchmark_errors(&sol);
                let mut table = CsvTable::new([
                    "surface",
                    "max_relative_error",
                    "floor",
                    "tolerance",
                    "passed",
                ]);
                for e in &errors {
                    let ok = e.max_relative_error < oracle.surface_tol;
                    passed &= ok;
                    table.push(vec![
                        e.surface.clone(),
                        fmt_f64(e.max_relative_error),
                        fmt_f64(e.floor),
                        fmt_f64(oracle.surface_tol),
                        ok.to_string(),
                    ]);
                }
                table.write(&self.path("closed_form_errors.csv", artifacts))?;
                self.surface_errors = errors;
            }
        }
        self.solution = Some(sol);
        Ok(passed)
    }

    fn check(&mut self, artifacts: &mut Vec<String>) -> Result<bool> {
        let s = self.scenario;
        let sol = self.solution.as_ref().expect("price runs before check");

        let report = dispersion(&self.econ, sol, &s.completeness)?;
        if let Some(field) = &report.sigma_min {
            let times = strided_times(field.n_times(), (field.n_times() - 1).div_ceil(20).max(1));
            surfaces_csv(&[("sigma_min", field)], &times)?
                .write(&self.path("dispersion.csv", artifacts))?;
        }

        let (probe, skipped) = if !s.probe.enabled {
            (None, Some("disabled in scenario".to_string()))
        } else if !report.passed {
            (None, Some("dispersion check failed".to_string()))
        } else {
            let mut claims = s.probe.claims.clone();
            claims.extend(random_claims(
                s.probe.random_claims,
                sol.dim(),
                s.seed.wrapping_add(2),
            ));
            let cfg = s.probe.config(s.seed.wrapping_add(2));
            (
                Some(martingale_uniqueness_probe(
                    &self.econ, sol, &report, &claims, &cfg,
                )?),
                None,
            )
        };
        self.write_json(
            "completeness.json",
            &CompletenessArtifact {
                dispersion: &report,
                probe: probe.as_ref(),
                probe_skipped: skipped,
            },
            artifacts,
        )?;

        let seed = s.seed.wrapping_add(1);
        let tgrid = TimeGrid::uniform(s.monte_carlo.time_steps)?;
        let bundle = simulate_paths(&s.diffusion, &tgrid, s.monte_carlo.paths, seed)?;
        let mut ctx = Context::new(&self.econ, sol, &bundle, Some(&report))?;
        if self.econ.n_agents() > 1 {
            ctx.weight_paths = Some(s.monte_carlo.paths);
        }
        let suite = run_checks(&ctx, &Corruption::default(), &s.verify)?;
        let controls = negative_controls(&ctx, &s.verify)?;
        let controls_caught = controls.iter().all(|c| c.caught);
        self.write_json(
            "verification.json",
            &VerificationArtifact {
                seed,
                paths: s.monte_carlo.paths,
                suite: &suite,
                controls: &controls,
                controls_caught,
            },
            artifacts,
        )?;

        let passed = report.passed
            && probe.as_ref().is_none_or(|p| p.passed)
            && suite.passed
            && controls_caught;
        self.dispersion = Some(report);
        self.probe = probe;
        self.suite = Some(suite);
        self.controls = controls;
        Ok(passed)
    }

    fn report(&mut self, artifacts: &mut Vec<String>) -> Result<bool> {
        let mut t = CsvTable::new(["metric", "value"]);
        let mut row = |k: String, v: String| t.push(vec![k, v]);
        row("scenario".into(), self.scenario.name.clone());
        row("seed".into(), self.scenario.seed.to_string());
        row("paths".into(), self.scenario.monte_carlo.paths.to_string());
        row(
            "grid".into(),
            format!(
                "{}x{}",
                self.scenario.grid.time_steps, self.scenario.grid.space_points
            ),
        );
        for o in &self.outcomes {
            row(
                format!("stage.{}", o.stage),
                if o.passed { "pass" } else { "fail" }.into(),
            );
        }
        if let Some(sol) = &self.weights {
            for (m, w) in sol.weights.as_slice().iter().enumerate() {
                row(format!("weight[{m}]"), fmt_f64(*w));
            }
            for (m, (phi, se)) in sol
                .report
                .phi
                .iter()
                .zip(&sol.report.standard_errors)
                .enumerate()
            {
                row(format!("excess[{m}]"), fmt_f64(*phi));
                row(format!("excess_se[{m}]"), fmt_f64(*se));
            }
            row("negishi_iterations".into(), sol.iterations.to_string());
        }
        if let Some(sol) = &self.solution {
            let x0 = &self.scenario.diffusion.initial_state;
            row("y0".into(), fmt_f64(sol.y.value(0.0, x0)));
            for (j, st) in sol.stocks.iter().enumerate() {
                row(format!("stock0[{j}]"), fmt_f64(st.value(0.0, x0)));
            }
        }
        for e in &self.surface_errors {
            row(
                format!("closed_form_error.{}", e.surface),
                fmt_f64(e.max_relative_error),
            );
        }
        if let Some(d) = &self.dispersion {
            row("sigma_min.min".into(), fmt_f64(d.min_sigma));
            row("sigma_min.median".into(), fmt_f64(d.median_sigma));
            row(
                "dispersion.failure_fraction".into(),
                fmt_f64(d.failure_fraction),
            );
            row("dispersion.passed".into(), d.passed.to_string());
        }
        if let Some(p) = &self.probe {
            for c in &p.claims {
                row(format!("replication.{}", c.name), fmt_f64(c.relative_rms));
            }
        }
        if let Some(suite) = &self.suite {
            let ok = suite.checks.iter().filter(|c| c.passed).count();
            row(
                "checks.passed".into(),
                format!("{ok}/{}", suite.checks.len()),
            );
            let caught = self.controls.iter().filter(|c| c.caught).count();
            row(
                "controls.caught".into(),
                format!("{caught}/{}", self.controls.len()),
            );
        }
        t.write(&self.path("summary.csv", artifacts))?;
        Ok(self.outcomes.iter().all(|o| o.passed))
    }
}
