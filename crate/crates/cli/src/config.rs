//! One JSON file configures the whole pipeline. Every section is optional
//! and falls back to the reference defaults, so `{}` is a valid config.

use std::path::Path;

use radarseg4d::config::DatasetConfig;
use radarseg4d::dataset::read_json_file;
use radarseg4d::network::NetworkConfig;
use radarseg4d::train::Hyperparams;
use radarseg4d::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Geometry, binning, pairing, splitting, and the synthetic generator.
    pub dataset: DatasetConfig,
    /// Network architecture.
    pub network: NetworkConfig,
    /// Training recipe.
    pub train: Hyperparams,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => read_json_file(p),
        None => Ok(FileConfig::default()),
    }
}
