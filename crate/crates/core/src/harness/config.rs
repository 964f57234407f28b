//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entanglement::OptConfig;
use crate::unitaries_channels::ChannelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
        })
    }
}

/// One randomized sweep over a theorem's protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// 1 to 4.
    pub theorem: u8,
    pub trials: usize,
    pub seed: u64,
    /// Slack on exactly certified margins.
    pub tol: f64,
    /// Slack on margins involving variational values.
    pub eps_var: f64,
    /// Channel for both transmissions; required for theorems 3 and 4.
    pub channel_spec: Option<ChannelSpec>,
    /// Members of the initial ensemble (theorem 2) or terms of the local
    /// mixture (theorem 4); 3 when unset.
    pub ensemble_size: Option<usize>,
    pub opt: OptConfig,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
    /// Replace the random preparation and local unitaries by identities.
    pub identity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            theorem: 1,
            trials: 100,
            seed: 0,
            tol: 1e-9,
            eps_var: 1e-3,
            channel_spec: None,
            ensemble_size: None,
            opt: OptConfig::default(),
            output_format: OutputFormat::Json,
            output_path: None,
            jobs: 1,
            identity: false,
        }
    }
}

/// A rejected configuration field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn reject(field: &'static str, message: impl Into<String>) -> Result<(), ConfigError> {
    Err(ConfigError { field, message: message.into() })
}

impl ExperimentConfig {
    pub const DEFAULT_ENSEMBLE_SIZE: usize = 3;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=4).contains(&self.theorem) {
            return reject("theorem", format!("{} is not one of 1, 2, 3, 4", self.theorem));
        }
        if self.trials == 0 {
            return reject("trials", "must be at least 1");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return reject("tol", "must be positive");
        }
        if !(self.eps_var > 0.0 && self.eps_var.is_finite()) {
            return reject("eps_var", "must be positive");
        }
        match (self.theorem, &self.channel_spec) {
            (3 | 4, None) => return reject("channel_spec", "required for theorems 3 and 4"),
            (1 | 2, Some(_)) => return reject("channel_spec", "only theorems 3 and 4 use channels"),
            _ => {}
        }
        if self.ensemble_size == Some(0) {
            return reject("ensemble_size", "must be at least 1");
        }
        if self.jobs == 0 {
            return reject("jobs", "must be at least 1");
        }
        if let Err(e) = self.opt.validate() {
            return reject("opt", e.to_string());
        }
        Ok(())
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size.unwrap_or(Self::DEFAULT_ENSEMBLE_SIZE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(cfg: ExperimentConfig) -> &'static str {
        cfg.validate().unwrap_err().field
    }

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn field_level_errors() {
        let base = ExperimentConfig::default;
        assert_eq!(field(ExperimentConfig { theorem: 5, ..base() }), "theorem");
        assert_eq!(field(ExperimentConfig { trials: 0, ..base() }), "trials");
        assert_eq!(field(ExperimentConfig { tol: 0.0, ..base() }), "tol");
        assert_eq!(field(ExperimentConfig { eps_var: f64::NAN, ..base() }), "eps_var");
        assert_eq!(field(ExperimentConfig { theorem: 3, ..base() }), "channel_spec");
        let spec: ChannelSpec = "identity".parse().unwrap();
        assert_eq!(field(ExperimentConfig { channel_spec: Some(spec), ..base() }), "channel_spec");
        assert_eq!(field(ExperimentConfig { ensemble_size: Some(0), ..base() }), "ensemble_size");
        assert_eq!(field(ExperimentConfig { jobs: 0, ..base() }), "jobs");
        let opt = OptConfig { restarts: 0, ..OptConfig::default() };
        assert_eq!(field(ExperimentConfig { opt, ..base() }), "opt");
    }

    #[test]
    fn parses_from_partial_json() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"theorem": 3, "channel_spec": "depolarizing:0.2", "opt": {"restarts": 4}}"#).unwrap();
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.opt.restarts, 4);
        assert_eq!(cfg.opt.tol, 1e-6);
        cfg.validate().unwrap();
    }
}
