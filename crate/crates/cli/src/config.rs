//! Run configuration: one TOML or JSON file layered over an optional preset.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use trafficrecon_core::datagen::{DensityProfile, GenerateOptions, Scenario};
use trafficrecon_core::evaluate::{GodunovOptions, PipelineConfig};
use trafficrecon_core::learn::{StepRule, TrainConfig};
use trafficrecon_core::macrosolver::{DEFAULT_CELLS, DEFAULT_CFL};
use trafficrecon_core::ScaleSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub profile: DensityProfile<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    /// Number of followers `N` in the full fleet.
    pub vehicles: usize,
    /// Share of vehicles that are probes; `1 / stride`.
    pub penetration: f64,
    pub horizon: f64,
    /// Euler steps of the ground-truth simulation; omitted picks a stable count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Euler steps `K` of the probe model; omitted uses 100 per 0.1 time units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub godunov_cells: usize,
    pub cfl: f64,
    pub godunov_snapshots: usize,
    pub domain_margin: f64,
    pub max_principle_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub step_rule: StepRule,
    pub tol_loss: f64,
    pub projection_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnits {
    Nondimensional,
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    /// Jam density in vehicles per km.
    pub rho_max: f64,
    /// Free-flow speed in km/h.
    pub v_max: f64,
    /// Kilometres per unit of normalised length; omitted derives it from `N / (L ρ_max)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub road_length: Option<f64>,
    /// Units of the metrics printed to the console.
    pub report: MetricUnits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub vehicles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub scenario: ScenarioSection,
    pub fleet: FleetSection,
    pub solver: SolverSection,
    pub training: TrainingSection,
    pub units: UnitsSection,
    pub convergence: ConvergenceSection,
}

pub const PRESETS: [&str; 2] = ["waves", "shock"];

/// Everything except the scenario profile, which has no neutral default.
fn defaults_value() -> Value {
    serde_json::json!({
        "fleet": { "vehicles": 2000, "penetration": 0.1, "horizon": 0.1 },
        "solver": {
            "godunov_cells": DEFAULT_CELLS,
            "cfl": DEFAULT_CFL,
            "godunov_snapshots": 50,
            "domain_margin": 0.05,
            "max_principle_margin": 1e-3
        },
        "training": {
            "epochs": 5000,
            "step_rule": "spectral",
            "tol_loss": 0.0,
            "projection_tol": 1e-9
        },
        "units": { "rho_max": 200.0, "v_max": 120.0, "report": "nondimensional" },
        "convergence": { "vehicles": [500, 1000, 2000, 4000] }
    })
}

fn preset_value(name: &str) -> Result<Value> {
    let scenario: Scenario<f64> = match name {
        "waves" => Scenario::waves(2000, 0.1),
        "shock" => Scenario::shock(2000, 0.1),
        other => bail!("unknown preset {other:?}; expected one of {PRESETS:?}"),
    };
    let mut base = defaults_value();
    merge(
        &mut base,
        serde_json::json!({
            "preset": name,
            "scenario": { "profile": serde_json::to_value(&scenario.profile)? }
        }),
    );
    Ok(base)
}

/// Recursive overlay: objects merge key by key, anything else replaces.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .with_context(|| format!("parsing JSON config {}", path.display()))
    } else {
        let table: toml::Table = toml::from_str(&text)
            .with_context(|| format!("parsing TOML config {}", path.display()))?;
        Ok(serde_json::to_value(table)?)
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_value(preset_value(name)?)
    }

    /// Layers the file over `preset` (flag) or the file's own `preset` key.
    pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let file = path.map(parse_file).transpose()?;
        let named = preset.map(str::to_owned).or_else(|| {
            file.as_ref()
                .and_then(|f| f.get("preset"))
                .and_then(Value::as_str)
                .map(str::to_owned)
        });
        if file.is_none() && named.is_none() {
            bail!("pass --config, --preset, or both");
        }
        let mut value = match &named {
            Some(name) => preset_value(name)?,
            None => defaults_value(),
        };
        if let Some(file) = file {
            merge(&mut value, file);
        }
        if let Some(name) = named {
            value["preset"] = Value::String(name);
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: Self = serde_json::from_value(value).context("invalid run configuration")?;
        config.validate()?;
        Ok(config)
    }

    /// Probe stride `s = 1 / penetration`, required to be an integer.
    pub fn stride(&self) -> Result<usize> {
        let p = self.fleet.penetration;
        if !(p > 0.0 && p <= 0.5) {
            bail!(
                "fleet.penetration must lie in (0, 0.5] so that the stride is at least 2, got {p}"
            );
        }
        let s = (1.0 / p).round();
        if ((1.0 / p) - s).abs() > 1e-9 * s {
            bail!("fleet.penetration must be the reciprocal of an integer, got {p}");
        }
        Ok(s as usize)
    }

    pub fn steps(&self) -> usize {
        self.solver
            .steps
            .unwrap_or_else(|| TrainConfig::<f64>::default_steps(self.fleet.horizon))
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fleet;
        if f.vehicles == 0 {
            bail!("fleet.vehicles must be at least 1");
        }
        if !(f.horizon > 0.0 && f.horizon.is_finite()) {
            bail!("fleet.horizon must be positive, got {}", f.horizon);
        }
        let stride = self.stride()?;
        if stride > f.vehicles {
            bail!(
                "fleet.vehicles ({}) must be at least the probe stride ({stride})",
                f.vehicles
            );
        }
        if f.fleet_steps == Some(0) {
            bail!("fleet.fleet_steps must be at least 1");
        }
        self.scenario
            .profile
            .validate()
            .context("scenario.profile")?;
        let s = &self.solver;
        if s.steps == Some(0) {
            bail!("solver.steps must be at least 1");
        }
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            bail!("solver.cfl must lie in (0, 1], got {}", s.cfl);
        }
        if s.godunov_cells == 0 || s.godunov_snapshots == 0 {
            bail!("solver.godunov_cells and solver.godunov_snapshots must be at least 1");
        }
        if !(s.domain_margin >= 0.0 && s.max_principle_margin >= 0.0) {
            bail!("solver margins must be non-negative");
        }
        let t = &self.training;
        if let Some(eta) = t.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                bail!("training.eta must be positive, got {eta}");
            }
        }
        if !(t.tol_loss >= 0.0 && t.projection_tol >= 0.0) {
            bail!("training tolerances must be non-negative");
        }
        if self.convergence.vehicles.iter().any(|&n| n < stride) {
            bail!("every convergence.vehicles entry must be at least the probe stride ({stride})");
        }
        self.scales()?;
        Ok(())
    }

    pub fn scales(&self) -> Result<ScaleSystem> {
        let u = &self.units;
        let road_length = match u.road_length {
            Some(r) => r,
            None => ScaleSystem::consistent_road_length(
                u.rho_max,
                self.fleet.vehicles,
                self.scenario.profile.mass(),
            ),
        };
        Ok(ScaleSystem::new(u.rho_max, u.v_max, road_length)?)
    }

    pub fn scenario(&self) -> Result<Scenario<f64>> {
        Ok(Scenario {
            profile: self.scenario.profile.clone(),
            vehicles: self.fleet.vehicles,
            horizon: self.fleet.horizon,
            scales: self.scales()?,
        })
    }

    pub fn generate_options(&self) -> Result<GenerateOptions> {
        Ok(GenerateOptions {
            fleet_steps: self.fleet.fleet_steps,
            stride: self.stride()?,
            keep_trajectories: false,
        })
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            epochs: self.training.epochs,
            eta: self.training.eta,
            step_rule: self.training.step_rule,
            steps: self.steps(),
            tol_loss: self.training.tol_loss,
            projection_tol: self.training.projection_tol,
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig<f64>> {
        Ok(PipelineConfig {
            scenario: self.scenario()?,
            generate: self.generate_options()?,
            train: self.train_config(),
            test_steps: None,
            godunov: GodunovOptions {
                cells: self.solver.godunov_cells,
                cfl: self.solver.cfl,
                snapshots: self.solver.godunov_snapshots,
                margin: self.solver.domain_margin,
            },
            max_principle_margin: self.solver.max_principle_margin,
        })
    }
}
