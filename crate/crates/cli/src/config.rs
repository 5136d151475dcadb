use std::path::{Path, PathBuf};

use hetraffic::association::LayoutSpec;
use hetraffic::calibration::CalibrationConfig;
use hetraffic::io;
use hetraffic::measures::Measure;
use hetraffic::netsim::{ChannelModel, DEFAULT_SINR_THRESHOLD_DB};
use hetraffic::traffic::{Initial, Method};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub resolution: usize,
    /// Drops per grid node; falls back to the experiment drop count.
    pub drops: Option<usize>,
    pub measure: Measure,
    pub method: Method,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        Self { resolution: c.resolution, drops: None, measure: c.measure, method: c.method }
    }
}

/// Experiment configuration file. Every field is optional; flags given on
/// the command line take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub layout: LayoutSpec,
    pub channel: ChannelModel,
    pub mean_ues: f64,
    pub drops: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sinr_threshold_db: f64,
    pub calibration: CalibrationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            layout: LayoutSpec::default(),
            channel: ChannelModel::default(),
            mean_ues: 1000.0,
            drops: 100,
            seed: None,
            out: None,
            sinr_threshold_db: DEFAULT_SINR_THRESHOLD_DB,
            calibration: CalibrationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: Self = match path {
            Some(p) => io::read_json(p)?,
            None => Self::default(),
        };
        cfg.layout.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Usage("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn calibration_config(&self, initial: Initial) -> Result<CalibrationConfig, CliError> {
        Ok(CalibrationConfig {
            resolution: self.calibration.resolution,
            drops: self.calibration.drops.unwrap_or(self.drops),
            mean_ues: self.mean_ues,
            measure: self.calibration.measure,
            method: self.calibration.method,
            initial,
            seed: self.seed()?,
        })
    }

    /// Hash of everything that determines the outputs of a command: the
    /// config without its output directory, plus command parameters.
    pub fn hash_with<T: Serialize>(&self, params: &T) -> Result<String, CliError> {
        let mut c = self.clone();
        c.out = None;
        Ok(io::content_hash(&(c, params))?)
    }
}
