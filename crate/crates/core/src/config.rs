//! TOML experiment files and run manifests.
//!
//! A config file holds the top-level keys of [`ExperimentConfig`], a
//! `[tiles]` table and any number of `[[demons]]` tables. Unknown keys are
//! rejected by name. Omitted keys take their defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(#[from] ConfigError),
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

fn read(path: &Path) -> Result<String, ConfigFileError> {
    fs::read_to_string(path).map_err(|source| ConfigFileError::Read { path: path.to_path_buf(), source })
}

fn parse_error(origin: &str, e: toml::de::Error) -> ConfigFileError {
    ConfigFileError::Parse { path: origin.to_string(), message: e.message().to_string() }
}

/// Parses and validates a config. `origin` labels error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigFileError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigFileError> {
    parse_config(&read(path)?, &path.display().to_string())
}

pub fn config_to_toml(cfg: &ExperimentConfig) -> Result<String, ConfigFileError> {
    toml::to_string(cfg).map_err(|e| ConfigFileError::Serialize(e.to_string()))
}

/// Record written next to a run's outputs. Its `config` has every default
/// materialized, so loading it reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    /// Seconds since the Unix epoch. Informational only.
    pub created_unix: u64,
    pub seed: u64,
    /// Output file names, relative to the manifest.
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, artifacts: &[&str]) -> Self {
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            seed: cfg.seed,
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
            config: cfg.resolved(),
        }
    }

    pub fn to_toml(&self) -> Result<String, ConfigFileError> {
        toml::to_string(self).map_err(|e| ConfigFileError::Serialize(e.to_string()))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigFileError> {
        let m: RunManifest = toml::from_str(text).map_err(|e| parse_error(origin, e))?;
        if m.seed != m.config.seed {
            return Err(ConfigError::Invalid {
                field: "seed".into(),
                message: format!("manifest seed {} disagrees with config seed {}", m.seed, m.config.seed),
            }
            .into());
        }
        m.config.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        Self::parse(&read(path)?, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{PotentialName, Scenario};
    use crate::voting::VotingMethod;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(parse_config("", "t").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn keys_and_demons() {
        let text = r#"
scenario = "three-shapings"
runs = 10
seed = 7
voting = "majority"

[tiles]
tilings = 10

[[demons]]
potential = "none"
alpha = 0.1

[[demons]]
name = "fast"
potential = "speed"
scale = 5.0
alpha = 0.2
"#;
        let c = parse_config(text, "t").unwrap();
        assert_eq!(c.scenario, Scenario::ThreeShapings);
        assert_eq!((c.runs, c.seed, c.episodes), (10, 7, 100));
        assert_eq!(c.voting, VotingMethod::Majority);
        assert_eq!(c.policy_ids(), ["no-shaping", "fast", "combination"]);
        assert_eq!(c.demons[1].potential, PotentialName::Speed);
        assert_eq!(c.demons[0].scale, 1.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("runz = 3", "runz"),
            ("[tiles]\ntilingz = 3", "tilingz"),
            ("[[demons]]\npotential = \"none\"\nalpha = 0.1\ncolour = 1", "colour"),
        ] {
            let err = parse_config(text, "cfg.toml").unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
            assert!(err.starts_with("cfg.toml"), "{err}");
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = parse_config("eval_interval = 0", "t").unwrap_err().to_string();
        assert!(err.contains("eval_interval"), "{err}");
        let err = parse_config("[[demons]]\npotential = \"right\"\nalpha = 0.1", "t").unwrap_err();
        assert!(matches!(err, ConfigFileError::Invalid(_)));
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = ExperimentConfig { seed: 3, runs: 5, ..ExperimentConfig::for_scenario(Scenario::ThreeShapings) };
        let m = RunManifest::new(&cfg, &["records.csv"]);
        assert_eq!(m.config.demons.len(), 4);
        let text = m.to_toml().unwrap();
        let back = RunManifest::parse(&text, "m").unwrap();
        assert_eq!(back, m);
        // the resolved config reads back as a plain config file too
        let cfg_text = config_to_toml(&m.config).unwrap();
        assert_eq!(parse_config(&cfg_text, "c").unwrap(), m.config);
    }

    #[test]
    fn manifest_seed_must_agree() {
        let mut m = RunManifest::new(&ExperimentConfig::default(), &[]);
        m.seed = 9;
        let err = RunManifest::parse(&m.to_toml().unwrap(), "m").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }
}
