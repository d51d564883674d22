//! Top-level run configuration.
//!
//! One TOML file pins everything a sweep depends on: the device spec, the
//! architecture profiles, the grid, the simulator noise, and the analysis
//! budget. Its digest is stamped into report manifests so results stay
//! traceable to the exact configuration that produced them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::sim::NoiseParams;
use crate::num::Real;
use crate::orchestrator::SweepGrid;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("i/o reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("toml parse: {0}")]
    TomlParse(#[from] toml::de::Error),
    #[error("toml serialize: {0}")]
    TomlSerialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything a run needs, in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "R: Real"))]
pub struct AppConfig<R: Real> {
    /// Device spec TOML; `None` uses the built-in H200 model.
    pub device_spec_path: Option<PathBuf>,
    /// Architecture profiles TOML; `None` uses the built-in set.
    pub profiles_path: Option<PathBuf>,
    /// Directory for records and reports.
    pub output_dir: PathBuf,
    /// Relative throughput budget for clock selection.
    pub throughput_budget: R,
    pub grid: SweepGrid<R>,
    pub noise: NoiseParams,
}

impl<R: Real> Default for AppConfig<R> {
    fn default() -> Self {
        Self {
            device_spec_path: None,
            profiles_path: None,
            output_dir: PathBuf::from("out"),
            throughput_budget: R::of(crate::analysis::clocks::DEFAULT_THROUGHPUT_BUDGET),
            grid: SweepGrid::reference(11),
            noise: NoiseParams::default(),
        }
    }
}

impl<R: Real> AppConfig<R> {
    pub fn load_toml(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save_toml(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.throughput_budget < R::zero() {
            return Err(ConfigError::Invalid(
                "throughput_budget must be non-negative".into(),
            ));
        }
        self.grid
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Content digest (first 16 hex chars of SHA-256 over the canonical
    /// TOML), stamped into report manifests.
    pub fn digest(&self) -> Result<String, ConfigError> {
        let canonical = toml::to_string(self)?;
        let hash = Sha256::digest(canonical.as_bytes());
        Ok(hash[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_digest_is_stable() {
        let config: AppConfig<f64> = AppConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        config.save_toml(&path).unwrap();
        let back: AppConfig<f64> = AppConfig::load_toml(&path).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.digest().unwrap(), config.digest().unwrap());
        assert_eq!(config.digest().unwrap().len(), 16);
    }

    #[test]
    fn digest_tracks_content() {
        let a: AppConfig<f64> = AppConfig::default();
        let mut b = a.clone();
        b.grid.seed = 17;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.toml");
        std::fs::write(&path, "throughput_budget = 0.02\n").unwrap();
        let config: AppConfig<f64> = AppConfig::load_toml(&path).unwrap();
        assert_eq!(config.throughput_budget, 0.02);
        assert_eq!(config.grid, SweepGrid::reference(11));
    }

    #[test]
    fn invalid_budget_rejected() {
        let mut config: AppConfig<f64> = AppConfig::default();
        config.throughput_budget = -0.5;
        assert!(config.validate().is_err());
    }
}
