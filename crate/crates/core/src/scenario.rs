//! TOML scenario files.
//!
//! A scenario names an economy, the numerical settings for every stage and
//! an optional oracle section with known answers. The grammar is documented
//! in the repository README; every field maps one-to-one onto a struct
//! field below, so parse → serialize → parse is the identity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::completeness::{CompletenessConfig, ProbeConfig, TestClaim};
use crate::diffusion::DiffusionSpec;
use crate::economy::{AgentSpec, EconomySpec, LogIncomeRate, StockSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::negishi::NegishiConfig;
use crate::pricing::GridConfig;
use crate::utility::SplitterConfig;
use crate::verify::VerifyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub diffusion: DiffusionSpec,
    pub economy: EconomySection,
    pub agents: Vec<AgentSpec>,
    pub stocks: Vec<StockSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub solver: NegishiConfig,
    #[serde(default)]
    pub splitter: SplitterConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub completeness: CompletenessConfig,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
}

/// Market primitives other than the state process, agents and stocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomySection {
    pub notional: Expr,
    #[serde(default = "zero")]
    pub notional_rate: Expr,
    #[serde(default = "zero")]
    pub impatience_rate: Expr,
    pub log_endowment: Expr,
    pub log_income_rate: LogIncomeRate,
}

fn zero() -> Expr {
    Expr::constant(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Paths for the weight solve; the verification bundle uses as many.
    pub paths: usize,
    pub time_steps: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            paths: 20_000,
            time_steps: 50,
        }
    }
}

/// Sampling used by the `validate` stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Points per axis of the coefficient sampling grid.
    pub grid_points: usize,
    pub time_steps: usize,
    /// Bound compared with the utility cone quantity.
    pub cone_bound: f64,
    /// Margin of the time/consumption window for the time-sensitivity probe.
    pub delta: f64,
    /// Offset of the probe states from the initial state, per axis.
    pub probe_spread: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            grid_points: 81,
            time_steps: 20,
            cone_bound: 10.0,
            delta: 0.1,
            probe_spread: 2.0,
        }
    }
}

/// Replication probe; disabled unless asked for, since it is the most
/// expensive stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub enabled: bool,
    pub paths: usize,
    pub steps: usize,
    pub random_claims: usize,
    pub max_relative_rms: f64,
    pub claims: Vec<TestClaim>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        let p = ProbeConfig::default();
        ProbeSettings {
            enabled: false,
            paths: p.paths,
            steps: p.steps,
            random_claims: p.random_claims,
            max_relative_rms: p.max_relative_rms,
            claims: Vec::new(),
        }
    }
}

impl ProbeSettings {
    pub fn config(&self, seed: u64) -> ProbeConfig {
        ProbeConfig {
            paths: self.paths,
            steps: self.steps,
            seed,
            random_claims: self.random_claims,
            max_relative_rms: self.max_relative_rms,
        }
    }
}

/// Closed forms available for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// Brownian state, log utility, `H = F = x`: `Y = B = e^{-x+(1-t)/2}`,
    /// `S = x - (1-t)`.
    GaussianBenchmark,
}

/// Known answers checked by the `report` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
    /// Largest accepted relative surface error on interior nodes.
    #[serde(default = "surface_tol")]
    pub surface_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "weight_tol")]
    pub weight_tol: f64,
}

fn surface_tol() -> f64 {
    1e-3
}

fn weight_tol() -> f64 {
    1e-6
}

impl Scenario {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            context: context.into(),
            message: e.to_string().trim_end().into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            context: format!("scenario {}", self.name),
            message: e.to_string(),
        })
    }

    /// Wraps a preset economy with default settings.
    pub fn from_economy(name: &str, spec: EconomySpec) -> Self {
        Scenario {
            name: name.into(),
            seed: 0,
            diffusion: spec.diffusion,
            economy: EconomySection {
                notional: spec.notional,
                notional_rate: spec.notional_rate,
                impatience_rate: spec.impatience_rate,
                log_endowment: spec.log_endowment,
                log_income_rate: spec.log_income_rate,
            },
            agents: spec.agents,
            stocks: spec.stocks,
            grid: GridConfig::default(),
            monte_carlo: MonteCarloConfig::default(),
            solver: NegishiConfig::default(),
            splitter: SplitterConfig::default(),
            validation: ValidationConfig::default(),
            completeness: CompletenessConfig::default(),
            probe: ProbeSettings::default(),
            verify: VerifyConfig::default(),
            oracle: None,
        }
    }

    pub fn economy_spec(&self) -> EconomySpec {
        EconomySpec {
            diffusion: self.diffusion.clone(),
            notional: self.economy.notional.clone(),
            notional_rate: self.economy.notional_rate.clone(),
            impatience_rate: self.economy.impatience_rate.clone(),
            log_endowment: self.economy.log_endowment.clone(),
            log_income_rate: self.economy.log_income_rate.clone(),
            stocks: self.stocks.clone(),
            agents: self.agents.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::utility::UtilitySpec;

    #[test]
    fn round_trip_is_identity() {
        for spec in [
            presets::gaussian_benchmark(),
            presets::mixed_three_agent(),
            presets::two_factor(),
        ] {
            let mut s = Scenario::from_economy("rt", spec);
            s.oracle = Some(Oracle {
                closed_form: Some(ClosedForm::GaussianBenchmark),
                surface_tol: 1e-3,
                weights: Some(vec![1.0]),
                weight_tol: 1e-6,
            });
            s.probe.claims.push(TestClaim::new(
                "square",
                Expr::Polynomial {
                    coeffs: vec![vec![0.0, 0.0, 1.0]],
                },
            ));
            s.agents[0].intermediate = UtilitySpec::Convolve {
                left: Box::new(UtilitySpec::crra(2.0)),
                right: Box::new(UtilitySpec::Scale {
                    factor: 0.5,
                    inner: Box::new(UtilitySpec::log()),
                }),
            };
            let text = s.to_toml().unwrap();
            let back = Scenario::from_toml(&text, "round trip").unwrap();
            assert_eq!(back, s);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let text = r#"
name = "tiny"

[diffusion]
dimension = 1
initial_state = [0.0]
drift = [{ kind = "constant", value = 0.0 }]
volatility = [[{ kind = "constant", value = 1.0 }]]
inverse_bound = 1.0

[economy]
notional = { kind = "constant", value = 1.0 }
log_endowment = { kind = "affine", intercept = 0.0, slope = 1.0, axis = 0 }
log_income_rate = { time_part = { kind = "constant", value = 0.0 }, state_part = { kind = "constant", value = 0.0 } }

[[agents]]
name = "solo"
intermediate = { kind = "crra", risk_aversion = 1.0 }
terminal = { kind = "crra", risk_aversion = 1.0 }
terminal_share = { kind = "constant", value = 1.0 }
rate_share = { kind = "constant", value = 1.0 }

[[stocks]]
terminal = { kind = "affine", intercept = 0.0, slope = 1.0, axis = 0 }
"#;
        let s = Scenario::from_toml(text, "inline").unwrap();
        assert_eq!(s.grid, GridConfig::default());
        assert_eq!(s.economy_spec(), presets::gaussian_benchmark());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Scenario::from_toml("name = \"x\"\nseed = \"nope\"\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("seed"), "{msg}");
    }
}
