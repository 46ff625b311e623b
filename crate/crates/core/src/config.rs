//! Run configuration.
//!
//! The configuration is a TOML file. Every key is optional; omitted keys take
//! the defaults below. Relative input paths are resolved against the directory
//! holding the configuration file.
//!
//! ```toml
//! demand_history = "demand_history.csv"
//! forecast = "forecast.csv"
//! item_master = "item_master.csv"
//! service_level_grid = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
//! sim_periods = 1000
//! base_seed = 20240601
//! horizon_samples = 10000
//! history_len = 52
//! forecast_len = 13
//! strict_lengths = true
//! normal_sigma_source = "historical"   # or "combined"
//! demand_stream_mode = "own_model"     # or "common_stream"
//!
//! [wsl_target]
//! A = 0.95
//! B = 0.90
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand_model::{SigmaSource, MIN_HORIZON_SAMPLES};
use crate::ingest::ItemClass;
use crate::simulator::DemandStreamMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Weighted service-level targets per class. A class without a target is
/// unconstrained and is optimized for cost alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTargets {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl ClassTargets {
    pub fn get(&self, class: ItemClass) -> Option<f64> {
        match class {
            ItemClass::A => self.a,
            ItemClass::B => self.b,
            ItemClass::C => self.c,
        }
    }
}

impl Default for ClassTargets {
    fn default() -> Self {
        Self {
            a: Some(0.95),
            b: Some(0.90),
            c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub demand_history: PathBuf,
    pub forecast: PathBuf,
    pub item_master: PathBuf,
    pub service_level_grid: Vec<f64>,
    pub sim_periods: usize,
    pub base_seed: u64,
    pub horizon_samples: usize,
    pub wsl_target: ClassTargets,
    pub history_len: usize,
    pub forecast_len: usize,
    pub strict_lengths: bool,
    pub normal_sigma_source: SigmaSource,
    pub demand_stream_mode: DemandStreamMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            demand_history: PathBuf::from("demand_history.csv"),
            forecast: PathBuf::from("forecast.csv"),
            item_master: PathBuf::from("item_master.csv"),
            service_level_grid: vec![0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99],
            sim_periods: 1000,
            base_seed: 20240601,
            horizon_samples: 10_000,
            wsl_target: ClassTargets::default(),
            history_len: 52,
            forecast_len: 13,
            strict_lengths: true,
            normal_sigma_source: SigmaSource::Historical,
            demand_stream_mode: DemandStreamMode::OwnModel,
        }
    }
}

impl RunConfig {
    /// Reads a config file and resolves its relative input paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Ok(cfg.resolved_against(base))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::new(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolved_against(mut self, base: &Path) -> Self {
        for p in [
            &mut self.demand_history,
            &mut self.forecast,
            &mut self.item_master,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        for w in self.service_level_grid.windows(2) {
            if w[1] <= w[0] {
                return bad(format!(
                    "service_level_grid must be strictly increasing, found {} then {}",
                    w[0], w[1]
                ));
            }
        }
        if let Some(a) = self
            .service_level_grid
            .iter()
            .find(|a| !(0.0..1.0).contains(*a))
        {
            return bad(format!("service level {a} outside [0, 1)"));
        }
        if self.sim_periods == 0 {
            return bad("sim_periods must be positive".into());
        }
        if self.horizon_samples < MIN_HORIZON_SAMPLES {
            return bad(format!(
                "horizon_samples must be at least {MIN_HORIZON_SAMPLES}"
            ));
        }
        if self.history_len < 2 || self.forecast_len < 2 {
            return bad("history_len and forecast_len must be at least 2".into());
        }
        for class in ItemClass::ALL {
            if let Some(t) = self.wsl_target.get(class) {
                if !t.is_finite() || t < 0.0 {
                    return bad(format!("class {class} target {t} must be a finite nonnegative number"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.service_level_grid.len(), 7);
        assert_eq!(cfg.wsl_target.get(ItemClass::A), Some(0.95));
        assert_eq!(cfg.wsl_target.get(ItemClass::C), None);
    }

    #[test]
    fn parses_overrides() {
        let cfg = RunConfig::from_toml_str(
            r#"
            service_level_grid = [0.0, 0.9]
            sim_periods = 500
            normal_sigma_source = "combined"
            demand_stream_mode = "common_stream"
            [wsl_target]
            A = 0.97
            "#,
        )
        .unwrap();
        assert_eq!(cfg.service_level_grid, vec![0.0, 0.9]);
        assert_eq!(cfg.sim_periods, 500);
        assert_eq!(cfg.normal_sigma_source, SigmaSource::Combined);
        assert_eq!(cfg.demand_stream_mode, DemandStreamMode::CommonStream);
        assert_eq!(cfg.wsl_target.a, Some(0.97));
        assert_eq!(cfg.wsl_target.b, None);
    }

    #[test]
    fn rejects_bad_grid_and_unknown_keys() {
        assert!(RunConfig::from_toml_str("service_level_grid = [0.9, 0.8]").is_err());
        assert!(RunConfig::from_toml_str("service_level_grid = [1.0]").is_err());
        assert!(RunConfig::from_toml_str("horizon_samples = 10").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }
}
