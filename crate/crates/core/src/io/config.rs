//! TOML run configuration.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::analysis::EngZeeConfig;
use crate::cyclegan::{ArchConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessConfig;
use crate::synth::MixtureSpec;

/// Every tunable of a pipeline run. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: MixtureSpec,
    pub preprocess: PreprocessConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub engzee: EngZeeConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.preprocess.validate()?;
        self.arch.validate()?;
        self.train.validate()
    }
}

pub fn from_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_toml(&fs::read_to_string(path)?)
}

pub fn save_config<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, to_toml(value)?.as_bytes())
}
