//! Run configuration: one JSON document with field, sim, distributions,
//! uncertainty, scheduler, and experiment sections.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dist::ParamDistributions;
use crate::error::{Error, Result};
use crate::field::FieldMap;
use crate::request::UncertaintyParams;
use crate::sim::{FsmVariant, SchedulerKind, SchedulerSpec, SimConfig};

/// Scheduler section of the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulerSection {
    pub kind: SchedulerKind,
    #[serde(default = "default_scenario_count")]
    pub scenario_count: usize,
    #[serde(default = "default_exact_cap")]
    pub exact_cap: usize,
    #[serde(default = "default_scenario_exact_cap")]
    pub scenario_exact_cap: usize,
    #[serde(default = "default_scenario_grid")]
    pub scenario_grid_s: f64,
}

fn default_scenario_count() -> usize {
    50
}
fn default_exact_cap() -> usize {
    crate::det::BAB_CAP
}
fn default_scenario_exact_cap() -> usize {
    crate::msa::SCENARIO_EXACT_CAP
}
fn default_scenario_grid() -> f64 {
    1.0
}

/// Experiment section: Monte-Carlo run count and seeding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub run_count: usize,
    pub base_seed: u64,
}

/// The full run configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub field: FieldMap,
    pub sim: SimConfig,
    pub distributions: ParamDistributions,
    #[serde(default = "UncertaintyParams::none")]
    pub uncertainty: UncertaintyParams,
    pub scheduler: SchedulerSection,
    pub experiment: ExperimentSection,
}

impl RunConfig {
    /// Parses and validates a configuration document; errors name the
    /// offending field.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        let cfg: RunConfig =
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Config {
                field: e.path().to_string(),
                reason: e.inner().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a configuration file, returning it with the SHA-256 digest of
    /// the raw bytes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let cfg = Self::from_json(&bytes)?;
        let hash = Sha256::digest(&bytes);
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        Ok((cfg, format!("sha256:{hex}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.sim.validate()?;
        self.distributions.validate()?;
        self.uncertainty.validate()?;
        if self.experiment.run_count == 0 {
            return Err(Error::Config {
                field: "experiment.run_count".into(),
                reason: "must be >= 1".into(),
            });
        }
        let kind = self.scheduler.kind;
        let needs_extended = matches!(
            kind,
            SchedulerKind::Manual | SchedulerKind::MsaExact | SchedulerKind::MsaSrlpt
        );
        if needs_extended && self.sim.fsm_variant == FsmVariant::Simple {
            return Err(Error::Config {
                field: "scheduler.kind".into(),
                reason: format!(
                    "{kind:?} requires sim.fsm_variant = \"extended\" (rejections and self-transport)"
                ),
            });
        }
        if kind != SchedulerKind::Manual && self.sim.robot_count == 0 {
            return Err(Error::Config {
                field: "sim.robot_count".into(),
                reason: "robot-served scheduling needs at least one robot".into(),
            });
        }
        if self.scheduler.scenario_count == 0 && kind.is_msa() {
            return Err(Error::Config {
                field: "scheduler.scenario_count".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Assembles the scheduler spec handed to the simulator.
    pub fn scheduler_spec(&self) -> SchedulerSpec {
        SchedulerSpec {
            kind: self.scheduler.kind,
            scenario_count: self.scheduler.scenario_count,
            exact_cap: self.scheduler.exact_cap,
            scenario_exact_cap: self.scheduler.scenario_exact_cap,
            scenario_grid_s: self.scheduler.scenario_grid_s,
            uncertainty: self.uncertainty,
        }
    }

    /// Mean tray pick time implied by the configured histogram.
    pub fn mean_pick_time_s(&self) -> f64 {
        self.distributions.pick_time.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_json() -> String {
        r#"{
            "field": {
                "furrow_count": 10,
                "furrow_length": 30.0,
                "bed_spacing": 1.65,
                "split_line_y": 30.0,
                "station_positions": [{"x": 8.25, "y": 0.0}],
                "active_station_index": 0
            },
            "sim": {
                "timestep_s": 0.5,
                "tray_capacity_g": 4500.0,
                "load_time_s": 5.0,
                "unload_time_s": 5.0,
                "robot_standoff_m": 5.0,
                "crew_size": 6,
                "robot_count": 2,
                "speed_profile": {"headland_speed": 1.5, "furrow_speed": 1.5},
                "fr_request": 0.5,
                "fsm_variant": "simple",
                "rng_seed": 1
            },
            "distributions": {
                "pick_speed": {"bins": [{"lo": 0.03, "hi": 0.05, "weight": 1.0}]},
                "walk_speed": {"bins": [{"lo": 0.4, "hi": 0.8, "weight": 1.0}]},
                "pick_time": {"bins": [{"lo": 255.5, "hi": 295.5, "weight": 1.0}]}
            },
            "scheduler": {"kind": "deterministic-srpt-convert"},
            "experiment": {"run_count": 2, "base_seed": 7}
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_validates_sample() {
        let cfg = RunConfig::from_json(sample_json().as_bytes()).unwrap();
        assert_eq!(cfg.experiment.run_count, 2);
        assert_eq!(cfg.scheduler.scenario_count, 50);
        assert!((cfg.mean_pick_time_s() - 275.5).abs() < 1e-9);
    }

    #[test]
    fn missing_section_names_the_field() {
        let json = sample_json().replace("\"distributions\"", "\"distributions_gone\"");
        let err = RunConfig::from_json(json.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("distributions"), "{msg}");
    }

    #[test]
    fn msa_with_simple_fsm_is_invalid() {
        let json = sample_json().replace(
            "\"kind\": \"deterministic-srpt-convert\"",
            "\"kind\": \"msa-srlpt\"",
        );
        let err = RunConfig::from_json(json.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("extended"), "{err}");
    }

    #[test]
    fn digest_is_stable() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(sample_json().as_bytes()).unwrap();
        let (_, d1) = RunConfig::load(f.path()).unwrap();
        let (_, d2) = RunConfig::load(f.path()).unwrap();
        assert_eq!(d1, d2);
        assert!(d1.starts_with("sha256:"));
    }
}
