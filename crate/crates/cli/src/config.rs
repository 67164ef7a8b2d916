//! Configuration document: parsing, validation and conversion to core types.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dyad_core::experiment::{AgentSpec, TargetSpec, TrialSettings};
use dyad_core::{AxisDynamics, AxisPair, CouplingConfig, SimulationSettings};
use serde::{Deserialize, Serialize};

/// Bundled default: per-axis estimates of the two rehabilitation robots.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");
/// JSON Schema describing [`ConfigDocument`].
pub const CONFIG_SCHEMA: &str = include_str!("../configs/schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub mass_kg: f64,
    #[serde(rename = "damping_Nsm")]
    pub damping_nsm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisRobots {
    pub robot1: RobotParams,
    pub robot2: RobotParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    #[serde(rename = "stiffness_Nm")]
    pub stiffness_nm: f64,
    pub delay_ms: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            stiffness_nm: 36.0,
            delay_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// `null` picks a step from the delay
    pub dt_ms: Option<f64>,
    pub t_end_s: f64,
    pub settle_window_s: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimulationSettings::default();
        Self {
            dt_ms: None,
            t_end_s: s.t_end,
            settle_window_s: s.settle_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    pub amp_x_m: f64,
    pub amp_y_m: f64,
    pub omega_rad_s: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        let t = TargetSpec::default();
        Self {
            amp_x_m: t.amp_x,
            amp_y_m: t.amp_y,
            omega_rad_s: t.omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsSection {
    #[serde(rename = "coupling_stiffness_Nm")]
    pub coupling_stiffness_nm: f64,
    /// spots shown to the disturbed agent
    pub spot_count: usize,
    pub spot_velocity_std_m_s: f64,
}

impl Default for AgentsSection {
    fn default() -> Self {
        let s = TrialSettings::default();
        Self {
            coupling_stiffness_nm: s.agent2.coupling_stiffness,
            spot_count: s.agent2.spot_count,
            spot_velocity_std_m_s: s.agent2.spot_velocity_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    #[serde(rename = "stiffness_Nm")]
    pub stiffness_nm: f64,
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub target: TargetSection,
    pub agents: AgentsSection,
    pub periods: usize,
    pub discard_periods: usize,
    #[serde(rename = "control_rate_Hz")]
    pub control_rate_hz: f64,
    pub dt_ms: Option<f64>,
    /// connected conditions for `--grid custom`
    pub grid: Vec<GridCell>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let s = TrialSettings::default();
        Self {
            target: TargetSection::default(),
            agents: AgentsSection::default(),
            periods: s.periods,
            discard_periods: s.discard_periods,
            control_rate_hz: s.control_rate,
            dt_ms: None,
            grid: Vec::new(),
            trials: dyad_core::experiment::DEFAULT_TRIALS,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "dyad-out".to_string(),
            formats: vec![Format::Csv, Format::Svg],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDocument {
    /// axis label to the two robots' parameters along it
    pub robots: BTreeMap<String, AxisRobots>,
    pub coupling: CouplingSection,
    pub simulation: SimulationSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

impl Default for ConfigDocument {
    /// Same content as [`DEFAULT_CONFIG`].
    fn default() -> Self {
        let robot = |mass_kg, damping_nsm| RobotParams {
            mass_kg,
            damping_nsm,
        };
        let robots = [
            ("x", robot(0.8334, 7.7257), robot(0.7776, 7.4208)),
            ("y", robot(1.0649, 10.1168), robot(1.3407, 9.3496)),
        ]
        .into_iter()
        .map(|(axis, robot1, robot2)| (axis.to_string(), AxisRobots { robot1, robot2 }))
        .collect();
        Self {
            robots,
            coupling: CouplingSection::default(),
            simulation: SimulationSection::default(),
            experiment: ExperimentSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        bail!("`{path}`: must be a finite number > 0, got {v}")
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        bail!("`{path}`: must be a finite number >= 0, got {v}")
    }
}

impl ConfigDocument {
    /// Parses and validates; errors name the offending key path.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| anyhow!("config {origin}: {e}"))?;
        if !value.is_object() {
            bail!("config {origin}: the document must be a JSON object");
        }
        let doc: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("config {origin}: `{path}`: {}", e.into_inner())
        })?;
        doc.validate().with_context(|| format!("config {origin}"))?;
        Ok(doc)
    }

    /// Reads `path`, or the bundled default when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_CONFIG, "<bundled>"),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.robots.is_empty() {
            bail!("`robots`: at least one axis is required");
        }
        for (axis, r) in &self.robots {
            for (name, p) in [("robot1", r.robot1), ("robot2", r.robot2)] {
                positive(&format!("robots.{axis}.{name}.mass_kg"), p.mass_kg)?;
                positive(&format!("robots.{axis}.{name}.damping_Nsm"), p.damping_nsm)?;
            }
        }
        positive("coupling.stiffness_Nm", self.coupling.stiffness_nm)?;
        non_negative("coupling.delay_ms", self.coupling.delay_ms)?;

        let sim = &self.simulation;
        if let Some(dt) = sim.dt_ms {
            positive("simulation.dt_ms", dt)?;
        }
        positive("simulation.t_end_s", sim.t_end_s)?;
        positive("simulation.settle_window_s", sim.settle_window_s)?;
        if 2.0 * sim.settle_window_s > sim.t_end_s {
            bail!("`simulation.settle_window_s`: two windows must fit in t_end_s");
        }

        let ex = &self.experiment;
        positive("experiment.target.amp_x_m", ex.target.amp_x_m)?;
        positive("experiment.target.amp_y_m", ex.target.amp_y_m)?;
        positive("experiment.target.omega_rad_s", ex.target.omega_rad_s)?;
        positive(
            "experiment.agents.coupling_stiffness_Nm",
            ex.agents.coupling_stiffness_nm,
        )?;
        if ex.agents.spot_count == 0 {
            bail!("`experiment.agents.spot_count`: must be >= 1");
        }
        non_negative(
            "experiment.agents.spot_velocity_std_m_s",
            ex.agents.spot_velocity_std_m_s,
        )?;
        if ex.periods <= ex.discard_periods {
            bail!("`experiment.periods`: must exceed discard_periods");
        }
        positive("experiment.control_rate_Hz", ex.control_rate_hz)?;
        if let Some(dt) = ex.dt_ms {
            positive("experiment.dt_ms", dt)?;
        }
        for (i, c) in ex.grid.iter().enumerate() {
            positive(
                &format!("experiment.grid[{i}].stiffness_Nm"),
                c.stiffness_nm,
            )?;
            non_negative(&format!("experiment.grid[{i}].delay_ms"), c.delay_ms)?;
        }
        if ex.trials == 0 {
            bail!("`experiment.trials`: must be >= 1");
        }
        if self.output.directory.is_empty() {
            bail!("`output.directory`: must not be empty");
        }
        Ok(())
    }

    /// Coupled dyad with optional command-line overrides.
    pub fn coupling(&self, k: Option<f64>, delay_ms: Option<f64>) -> Result<CouplingConfig> {
        if let Some(k) = k {
            positive("--k", k)?;
        }
        if let Some(d) = delay_ms {
            non_negative("--delay-ms", d)?;
        }
        let axes = self
            .robots
            .iter()
            .map(|(axis, r)| {
                let d1 = AxisDynamics::new(r.robot1.mass_kg, r.robot1.damping_nsm)?;
                let d2 = AxisDynamics::new(r.robot2.mass_kg, r.robot2.damping_nsm)?;
                Ok((axis.clone(), AxisPair::new(d1, d2)))
            })
            .collect::<dyad_core::Result<Vec<_>>>()?;
        let k = k.unwrap_or(self.coupling.stiffness_nm);
        let delay = delay_ms.unwrap_or(self.coupling.delay_ms) / 1000.0;
        Ok(CouplingConfig::new(axes, k, delay)?)
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            dt: self.simulation.dt_ms.map(|v| v / 1000.0),
            t_end: self.simulation.t_end_s,
            settle_window: self.simulation.settle_window_s,
        }
    }

    pub fn trial_settings(&self) -> Result<TrialSettings> {
        let ex = &self.experiment;
        let settings = TrialSettings {
            target: TargetSpec::new(ex.target.amp_x_m, ex.target.amp_y_m, ex.target.omega_rad_s)?,
            agent1: AgentSpec::skilled(ex.agents.coupling_stiffness_nm)?,
            agent2: AgentSpec::blurred(
                ex.agents.coupling_stiffness_nm,
                ex.agents.spot_count,
                ex.agents.spot_velocity_std_m_s,
            )?,
            periods: ex.periods,
            discard_periods: ex.discard_periods,
            control_rate: ex.control_rate_hz,
            dt: ex.dt_ms.map(|v| v / 1000.0),
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_matches_built_in_dyad() {
        let doc = ConfigDocument::load(None).unwrap();
        assert_eq!(doc, ConfigDocument::default());
        let cfg = doc.coupling(None, None).unwrap();
        assert_eq!(cfg, CouplingConfig::rehab_dyad(36.0, 0.0).unwrap());
        assert_eq!(doc.trial_settings().unwrap(), TrialSettings::default());
        assert_eq!(doc.simulation_settings(), SimulationSettings::default());
    }

    #[test]
    fn sections_are_optional() {
        let doc = ConfigDocument::parse(r#"{"coupling": {"delay_ms": 84}}"#, "t").unwrap();
        assert_eq!(doc.coupling.stiffness_nm, 36.0);
        assert_eq!(doc.robots, ConfigDocument::default().robots);
        assert_eq!(
            ConfigDocument::parse("{}", "t").unwrap(),
            ConfigDocument::default()
        );
        assert!(ConfigDocument::parse("{} {}", "t").is_err());
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let err = ConfigDocument::parse(r#"{"coupling": {"stiffness": 3}}"#, "t").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("`coupling.stiffness`"), "{msg}");
        assert!(msg.contains("unknown field"), "{msg}");
    }

    #[test]
    fn type_error_reports_nested_path() {
        let text = r#"{"robots": {"x": {"robot1": {"mass_kg": "heavy", "damping_Nsm": 1},
                                         "robot2": {"mass_kg": 1, "damping_Nsm": 1}}}}"#;
        let msg = format!("{:#}", ConfigDocument::parse(text, "t").unwrap_err());
        assert!(msg.contains("`robots.x.robot1.mass_kg`"), "{msg}");
    }

    #[test]
    fn range_error_reports_path() {
        let text = r#"{"experiment": {"grid": [{"stiffness_Nm": 10, "delay_ms": -1}]}}"#;
        let msg = format!("{:#}", ConfigDocument::parse(text, "t").unwrap_err());
        assert!(msg.contains("`experiment.grid[0].delay_ms`"), "{msg}");
    }

    #[test]
    fn overrides_are_validated() {
        let doc = ConfigDocument::default();
        assert!(doc.coupling(Some(-5.0), None).is_err());
        assert!(doc.coupling(None, Some(f64::NAN)).is_err());
        let cfg = doc.coupling(Some(71.0), Some(334.0)).unwrap();
        assert_eq!(cfg.stiffness(), 71.0);
        assert!((cfg.delay() - 0.334).abs() < 1e-15);
    }

    #[test]
    fn schema_declares_every_default_key() {
        let schema: serde_json::Value = serde_json::from_str(CONFIG_SCHEMA).unwrap();
        let doc: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        let props = &schema["properties"];
        for (section, value) in doc.as_object().unwrap() {
            let declared = &props[section];
            assert!(
                declared.is_object(),
                "section {section} missing from schema"
            );
            if section == "robots" {
                continue;
            }
            for key in value.as_object().unwrap().keys() {
                assert!(
                    declared["properties"][key].is_object(),
                    "{section}.{key} missing from schema"
                );
            }
        }
    }
}
